//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling, with the
//! model-quality scores used to choose the topic count.

mod gibbs;
mod quality;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gibbs::{fit_lda, LdaParams};
pub use quality::{coherence_score, lda_grid, perplexity_score, select_k, GridResult};

#[derive(Debug, Error, PartialEq)]
pub enum TopicModelError {
    #[error("more topics than tokens ({topics} > {tokens})")]
    MoreTopicsThanTokens { topics: usize, tokens: u64 },
    #[error("empty document-term matrix")]
    EmptyMatrix,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("term {0:?} is not in the model vocabulary")]
    UnknownTerm(String),
    #[error("topic {topic} out of range (K = {k})")]
    TopicOutOfRange { topic: usize, k: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Fitted topic model. `phi` is K x |V| (topic-word), `theta` is D x K
/// (document-topic); both are row-stochastic with strictly positive entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub k: usize,
    pub alpha: f64,
    pub eta: f64,
    pub vocabulary: Vec<String>,
    pub doc_ids: Vec<String>,
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub seed: u64,
    pub iterations: usize,
}

const ROW_SUM_TOLERANCE: f64 = 1e-9;

impl LdaModel {
    /// Build a model from explicit distributions, validating shapes and
    /// row sums.
    pub fn from_parts(
        vocabulary: Vec<String>,
        doc_ids: Vec<String>,
        phi: Vec<Vec<f64>>,
        theta: Vec<Vec<f64>>,
        alpha: f64,
        eta: f64,
    ) -> Result<Self, TopicModelError> {
        let model = LdaModel {
            k: phi.len(),
            alpha,
            eta,
            vocabulary,
            doc_ids,
            phi,
            theta,
            seed: 0,
            iterations: 0,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), TopicModelError> {
        let bad = |m: String| Err(TopicModelError::InvalidModel(m));
        if self.k == 0 || self.phi.len() != self.k {
            return bad("phi must have K >= 1 rows".into());
        }
        if self.theta.len() != self.doc_ids.len() {
            return bad("theta needs one row per document".into());
        }
        for (name, rows, width) in [
            ("phi", &self.phi, self.vocabulary.len()),
            ("theta", &self.theta, self.k),
        ] {
            for (i, row) in rows.iter().enumerate() {
                if row.len() != width {
                    return bad(format!("{name} row {i} has width {}", row.len()));
                }
                if row.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
                    return bad(format!("{name} row {i} has a non-positive entry"));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return bad(format!("{name} row {i} sums to {sum}"));
                }
            }
        }
        Ok(())
    }

    pub fn num_terms(&self) -> usize {
        self.vocabulary.len()
    }

    /// Highest-probability terms of `topic`, ties broken lexicographically.
    pub fn top_words(&self, topic: usize, n: usize) -> Result<Vec<(String, f64)>, TopicModelError> {
        let row = self.phi.get(topic).ok_or(TopicModelError::TopicOutOfRange {
            topic,
            k: self.k,
        })?;
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| {
            row[b]
                .total_cmp(&row[a])
                .then_with(|| self.vocabulary[a].cmp(&self.vocabulary[b]))
        });
        Ok(order
            .into_iter()
            .take(n)
            .map(|w| (self.vocabulary[w].clone(), row[w]))
            .collect())
    }

    /// Export form: all probabilities quantized to 1e-12.
    pub fn export(&self) -> ModelExport {
        let q = |rows: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            rows.iter()
                .map(|r| r.iter().map(|&x| quantize(x)).collect())
                .collect()
        };
        ModelExport {
            k: self.k,
            alpha: self.alpha,
            eta: self.eta,
            seed: self.seed,
            iterations: self.iterations,
            vocabulary: self.vocabulary.clone(),
            doc_ids: self.doc_ids.clone(),
            phi: q(&self.phi),
            theta: q(&self.theta),
        }
    }
}

pub fn quantize(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// Serialized model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelExport {
    #[serde(rename = "K")]
    pub k: usize,
    pub alpha: f64,
    pub eta: f64,
    pub seed: u64,
    pub iterations: usize,
    pub vocabulary: Vec<String>,
    pub doc_ids: Vec<String>,
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(phi: Vec<Vec<f64>>, vocab: &[&str]) -> LdaModel {
        let k = phi.len();
        LdaModel::from_parts(
            vocab.iter().map(|s| s.to_string()).collect(),
            vec!["d".into()],
            phi,
            vec![vec![1.0 / k as f64; k]],
            0.1,
            0.01,
        )
        .unwrap()
    }

    #[test]
    fn top_words_tie_break_is_lexicographic() {
        let m = toy(vec![vec![0.25, 0.25, 0.5]], &["zeta", "alpha", "mid"]);
        let top = m.top_words(0, 3).unwrap();
        let names: Vec<_> = top.iter().map(|(t, _)| t.as_str()).collect();
        assert_eq!(names, ["mid", "alpha", "zeta"]);
    }

    #[test]
    fn top_words_clamps_to_vocabulary() {
        let m = toy(vec![vec![0.5, 0.5]], &["a", "b"]);
        assert_eq!(m.top_words(0, 10).unwrap().len(), 2);
        assert!(matches!(
            m.top_words(1, 1),
            Err(TopicModelError::TopicOutOfRange { topic: 1, k: 1 })
        ));
    }

    #[test]
    fn from_parts_rejects_bad_rows() {
        let r = LdaModel::from_parts(
            vec!["a".into(), "b".into()],
            vec![],
            vec![vec![0.7, 0.7]],
            vec![],
            0.1,
            0.1,
        );
        assert!(r.is_err());
    }

    #[test]
    fn export_quantizes() {
        let m = toy(vec![vec![1.0 / 3.0, 2.0 / 3.0]], &["a", "b"]);
        let e = m.export();
        assert_eq!(e.phi[0][0], 0.333333333333);
        let json = serde_json::to_value(&e).unwrap();
        assert_eq!(json["K"], 1);
        assert!(json.get("vocabulary").is_some());
    }
}
