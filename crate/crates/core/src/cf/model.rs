//! Fitted factor models, ranking and the model file format.
//!
//! Model file: one JSON header line, then the user factors and the template
//! factors as row-major little-endian f32 blocks.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CfError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CfMethod {
    Als,
    Bpr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfParams {
    pub method: CfMethod,
    pub factors: usize,
    /// ALS ridge penalty
    pub reg: f64,
    /// ALS confidence scale: c = 1 + alpha * weight
    pub alpha: f64,
    pub iterations: usize,
    pub lr: f64,
    pub bpr_reg: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for CfParams {
    fn default() -> Self {
        CfParams {
            method: CfMethod::Als,
            factors: 32,
            reg: 0.1,
            alpha: 40.0,
            iterations: 15,
            lr: 0.05,
            bpr_reg: 0.01,
            epochs: 50,
            seed: 0,
        }
    }
}

impl CfParams {
    pub fn validate(&self) -> Result<(), CfError> {
        let bad = |m: String| Err(CfError::InvalidParameter(m));
        if self.factors == 0 {
            return bad("factors must be >= 1".into());
        }
        match self.method {
            CfMethod::Als => {
                if !(self.reg > 0.0) {
                    return bad(format!("reg must be > 0, got {}", self.reg));
                }
                if !(self.alpha >= 0.0) {
                    return bad(format!("alpha must be >= 0, got {}", self.alpha));
                }
                if self.iterations == 0 {
                    return bad("iterations must be >= 1".into());
                }
            }
            CfMethod::Bpr => {
                if !(self.lr > 0.0) || !(self.bpr_reg >= 0.0) {
                    return bad("lr must be > 0 and bpr_reg >= 0".into());
                }
                if self.epochs == 0 {
                    return bad("epochs must be >= 1".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    params: CfParams,
    users: Vec<String>,
    templates: Vec<String>,
    popularity: Vec<f64>,
}

/// score(u, t) = dot(U_u, V_t).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub params: CfParams,
    users: Vec<String>,
    templates: Vec<String>,
    user_factors: Vec<f64>,
    template_factors: Vec<f64>,
    popularity: Vec<f64>,
    user_index: HashMap<String, usize>,
    template_index: HashMap<String, usize>,
}

/// Ranked candidates; `fallback` marks popularity ranking for unknown users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfRanking {
    pub items: Vec<(String, f64)>,
    pub fallback: bool,
}

impl FactorModel {
    pub(crate) fn new(
        params: CfParams,
        users: Vec<String>,
        templates: Vec<String>,
        user_factors: Vec<f64>,
        template_factors: Vec<f64>,
        popularity: Vec<f64>,
    ) -> Result<Self, CfError> {
        let f = params.factors;
        if user_factors.len() != users.len() * f
            || template_factors.len() != templates.len() * f
            || popularity.len() != templates.len()
        {
            return Err(CfError::MalformedModel("factor block sizes do not match ids".into()));
        }
        if user_factors.iter().chain(&template_factors).any(|x| !x.is_finite()) {
            return Err(CfError::Numerical("non-finite factor".into()));
        }
        Ok(FactorModel {
            user_index: users.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect(),
            template_index: templates.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect(),
            params,
            users,
            templates,
            user_factors,
            template_factors,
            popularity,
        })
    }

    pub fn method(&self) -> CfMethod {
        self.params.method
    }

    pub fn factors(&self) -> usize {
        self.params.factors
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn templates(&self) -> &[String] {
        &self.templates
    }

    pub fn user_vector(&self, u: usize) -> &[f64] {
        let f = self.params.factors;
        &self.user_factors[u * f..(u + 1) * f]
    }

    pub fn template_vector(&self, t: usize) -> &[f64] {
        let f = self.params.factors;
        &self.template_factors[t * f..(t + 1) * f]
    }

    pub(crate) fn score_idx(&self, u: usize, t: usize) -> f64 {
        self.user_vector(u).iter().zip(self.template_vector(t)).map(|(a, b)| a * b).sum()
    }

    pub fn knows_user(&self, user: &str) -> bool {
        self.user_index.contains_key(user)
    }

    /// None for an unknown user or template.
    pub fn score(&self, user: &str, template: &str) -> Option<f64> {
        Some(self.score_idx(*self.user_index.get(user)?, *self.template_index.get(template)?))
    }

    /// Rank `candidates` by score, ties by template_id. Templates absent
    /// from the model score 0 (the ALS solution for an empty column). An
    /// unknown user is ranked by column interaction mass instead.
    pub fn rank(&self, user: &str, candidates: &[String]) -> CfRanking {
        let fallback = !self.knows_user(user);
        let mut items: Vec<(String, f64)> = candidates
            .iter()
            .map(|c| {
                let s = match (self.user_index.get(user), self.template_index.get(c)) {
                    (_, None) => 0.0,
                    (Some(&u), Some(&t)) => self.score_idx(u, t),
                    (None, Some(&t)) => self.popularity[t],
                };
                (c.clone(), s)
            })
            .collect();
        items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        items.dedup_by(|a, b| a.0 == b.0);
        CfRanking { items, fallback }
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let header = Header {
            params: self.params.clone(),
            users: self.users.clone(),
            templates: self.templates.clone(),
            popularity: self.popularity.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for x in self.user_factors.iter().chain(&self.template_factors) {
            w.write_all(&(*x as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self, CfError> {
        let mut r = std::io::BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line).map_err(|e| CfError::MalformedModel(e.to_string()))?;
        let header: Header = serde_json::from_str(&line).map_err(|e| CfError::MalformedModel(e.to_string()))?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(|e| CfError::MalformedModel(e.to_string()))?;
        let f = header.params.factors;
        let nu = header.users.len() * f;
        let nt = header.templates.len() * f;
        if rest.len() != (nu + nt) * 4 {
            return Err(CfError::MalformedModel(format!(
                "expected {} factor bytes, found {}",
                (nu + nt) * 4,
                rest.len()
            )));
        }
        let floats: Vec<f64> = rest
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        let (u, v) = floats.split_at(nu);
        Self::new(header.params, header.users, header.templates, u.to_vec(), v.to_vec(), header.popularity)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CfError> {
        let path = path.as_ref();
        let io = |source| CfError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        self.write_to(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CfError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| CfError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_from(file)
    }

    /// f32 round-trip of the factors, so in-memory scores equal reloaded ones.
    pub fn quantized(mut self) -> Self {
        for x in self.user_factors.iter_mut().chain(self.template_factors.iter_mut()) {
            *x = *x as f32 as f64;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> FactorModel {
        FactorModel::new(
            CfParams { factors: 1, ..Default::default() },
            vec!["u".into()],
            vec!["a".into(), "b".into(), "c".into()],
            vec![1.0],
            vec![1.0, 2.0, 2.0],
            vec![5.0, 1.0, 3.0],
        )
        .unwrap()
    }

    fn ids(r: &CfRanking) -> Vec<&str> {
        r.items.iter().map(|(t, _)| t.as_str()).collect()
    }

    #[test]
    fn ranks_by_score_then_id() {
        let m = toy();
        let r = m.rank("u", &["a".into(), "c".into(), "b".into()]);
        assert_eq!(ids(&r), vec!["b", "c", "a"]);
        assert!(!r.fallback);
        assert!(m.rank("u", &[]).items.is_empty());
        // brute-force oracle
        let mut brute: Vec<(String, f64)> = m.templates().iter().map(|t| (t.clone(), m.score("u", t).unwrap())).collect();
        brute.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        assert_eq!(m.rank("u", m.templates()).items, brute);
    }

    #[test]
    fn unknown_user_gets_popularity() {
        let r = toy().rank("stranger", &["a".into(), "b".into(), "c".into(), "zz".into()]);
        assert!(r.fallback);
        assert_eq!(ids(&r), vec!["a", "c", "b", "zz"]);
    }

    #[test]
    fn file_round_trip() {
        let m = toy();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(FactorModel::read_from(buf.as_slice()).unwrap(), m);
        assert!(FactorModel::read_from(&buf[..buf.len() - 2]).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(CfParams { reg: 0.0, ..Default::default() }.validate().is_err());
        assert!(CfParams { factors: 0, ..Default::default() }.validate().is_err());
        assert!(CfParams::default().validate().is_ok());
    }
}
