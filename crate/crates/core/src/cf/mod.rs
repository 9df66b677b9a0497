//! Collaborative filtering over the user-template interaction matrix.

mod als;
mod bpr;
mod model;

pub use als::{als_objective, fit_als, fit_als_traced};
pub use bpr::{fit_bpr, training_auc};
pub use model::{CfMethod, CfParams, CfRanking, FactorModel};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CfError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty interaction matrix")]
    EmptyMatrix,
    #[error("weight for ({user}, {template}) must be finite and >= 0, got {weight}")]
    InvalidWeight { user: String, template: String, weight: f64 },
    #[error("no user has both positive and negative templates")]
    NothingToSample,
    #[error("linear solve failed: {0}")]
    Numerical(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("malformed model file: {0}")]
    MalformedModel(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One line of the matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: String,
    pub template: String,
    pub weight: f64,
}

/// Sparse user x template matrix with dense internal indices. Ids are
/// sorted so that indices do not depend on input order.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    users: Vec<String>,
    templates: Vec<String>,
    /// (user index, template index, weight), sorted, no duplicate cells
    entries: Vec<(usize, usize, f64)>,
    topic_of: BTreeMap<String, String>,
}

impl InteractionMatrix {
    /// Duplicate cells are summed. `extra_users`/`extra_templates` add ids
    /// without interactions (e.g. catalog templates nobody used yet).
    pub fn build<'a>(
        interactions: impl IntoIterator<Item = &'a Interaction>,
        extra_users: impl IntoIterator<Item = String>,
        extra_templates: impl IntoIterator<Item = String>,
    ) -> Result<Self, CfError> {
        let mut cells: BTreeMap<(String, String), f64> = BTreeMap::new();
        let mut users: BTreeSet<String> = extra_users.into_iter().collect();
        let mut templates: BTreeSet<String> = extra_templates.into_iter().collect();
        for i in interactions {
            if !i.weight.is_finite() || i.weight < 0.0 {
                return Err(CfError::InvalidWeight {
                    user: i.user.clone(),
                    template: i.template.clone(),
                    weight: i.weight,
                });
            }
            users.insert(i.user.clone());
            templates.insert(i.template.clone());
            *cells.entry((i.user.clone(), i.template.clone())).or_insert(0.0) += i.weight;
        }
        let users: Vec<String> = users.into_iter().collect();
        let templates: Vec<String> = templates.into_iter().collect();
        let ui: HashMap<&str, usize> = users.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        let ti: HashMap<&str, usize> = templates.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let mut entries: Vec<(usize, usize, f64)> = cells
            .iter()
            .map(|((u, t), w)| (ui[u.as_str()], ti[t.as_str()], *w))
            .collect();
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        Ok(InteractionMatrix {
            users,
            templates,
            entries,
            topic_of: BTreeMap::new(),
        })
    }

    pub fn from_interactions(interactions: &[Interaction]) -> Result<Self, CfError> {
        Self::build(interactions, Vec::new(), Vec::new())
    }

    pub fn with_topics(mut self, topic_of: BTreeMap<String, String>) -> Self {
        self.topic_of = topic_of;
        self
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn templates(&self) -> &[String] {
        &self.templates
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn topic_of(&self) -> &BTreeMap<String, String> {
        &self.topic_of
    }

    pub fn user_index(&self, user: &str) -> Option<usize> {
        self.users.binary_search_by(|u| u.as_str().cmp(user)).ok()
    }

    pub fn template_index(&self, template: &str) -> Option<usize> {
        self.templates.binary_search_by(|t| t.as_str().cmp(template)).ok()
    }

    pub fn weight(&self, user: &str, template: &str) -> f64 {
        match (self.user_index(user), self.template_index(template)) {
            (Some(u), Some(t)) => self
                .entries
                .binary_search_by(|e| (e.0, e.1).cmp(&(u, t)))
                .map(|i| self.entries[i].2)
                .unwrap_or(0.0),
            _ => 0.0,
        }
    }

    /// Entries grouped by user: `rows[u] = [(template, weight)]`.
    pub fn rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.users.len()];
        for &(u, t, w) in &self.entries {
            rows[u].push((t, w));
        }
        rows
    }

    pub fn columns(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.templates.len()];
        for &(u, t, w) in &self.entries {
            cols[t].push((u, w));
        }
        cols
    }

    /// Total interaction weight per template.
    pub fn column_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.templates.len()];
        for &(_, t, w) in &self.entries {
            mass[t] += w;
        }
        mass
    }

    /// Templates the user has a positive weight for.
    pub fn positives_of(&self, user: &str) -> BTreeSet<String> {
        let Some(u) = self.user_index(user) else {
            return BTreeSet::new();
        };
        self.entries
            .iter()
            .filter(|e| e.0 == u && e.2 > 0.0)
            .map(|e| self.templates[e.1].clone())
            .collect()
    }

    /// Restrict to the templates of `topic`; all users are kept.
    pub fn submatrix(&self, topic: &str) -> InteractionMatrix {
        let keep: Vec<usize> = (0..self.templates.len())
            .filter(|&t| self.topic_of.get(&self.templates[t]).map(String::as_str) == Some(topic))
            .collect();
        let mut remap = vec![usize::MAX; self.templates.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        InteractionMatrix {
            users: self.users.clone(),
            templates: keep.iter().map(|&t| self.templates[t].clone()).collect(),
            entries: self
                .entries
                .iter()
                .filter(|e| remap[e.1] != usize::MAX)
                .map(|&(u, t, w)| (u, remap[t], w))
                .collect(),
            topic_of: keep
                .iter()
                .map(|&t| (self.templates[t].clone(), topic.to_string()))
                .collect(),
        }
    }

    /// Distinct topics of the templates, sorted.
    pub fn topics(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.templates.iter().filter_map(|t| self.topic_of.get(t)).collect();
        set.into_iter().cloned().collect()
    }

    pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<Interaction>, CfError> {
        let mut out = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let parse = |reason: String| CfError::Parse { line: i + 1, reason };
            let line = line.map_err(|e| parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?);
        }
        Ok(out)
    }
}

/// Fit one model per topic submatrix, in parallel. Topics without usable
/// interactions get no model.
pub fn fit_per_topic(matrix: &InteractionMatrix, params: &CfParams) -> Result<BTreeMap<String, FactorModel>, CfError> {
    let fitted: Vec<Option<(String, FactorModel)>> = matrix
        .topics()
        .into_par_iter()
        .map(|topic| {
            let sub = matrix.submatrix(&topic);
            let fitted = match params.method {
                CfMethod::Als => fit_als(&sub, params),
                CfMethod::Bpr => fit_bpr(&sub, params),
            };
            match fitted {
                Ok(model) => Ok(Some((topic, model))),
                Err(CfError::EmptyMatrix | CfError::NothingToSample) => {
                    log::warn!("topic {topic}: no usable interactions, no CF model");
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_, CfError>>()?;
    Ok(fitted.into_iter().flatten().collect())
}
