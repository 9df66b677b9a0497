//! Offline evaluation of CB, CF and hybrid rankings against held-out
//! interactions.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{aggregate, mean, median, metrics_at_k, MetricTriple};
use super::{cb_ranking, CascadeError, Recommender};
use crate::cf::{CfMethod, FactorModel, InteractionMatrix};
use crate::embedding::{segment_and_pool, EmbeddingProvider, EmbeddingStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "CB")]
    Cb,
    #[serde(rename = "ALS")]
    Als,
    #[serde(rename = "BPR")]
    Bpr,
    #[serde(rename = "Hybrid-ALS")]
    HybridAls,
    #[serde(rename = "Hybrid-BPR")]
    HybridBpr,
}

impl Method {
    pub fn is_hybrid(self) -> bool {
        matches!(self, Method::HybridAls | Method::HybridBpr)
    }

    fn pure(m: CfMethod) -> Self {
        match m {
            CfMethod::Als => Method::Als,
            CfMethod::Bpr => Method::Bpr,
        }
    }

    fn hybrid(m: CfMethod) -> Self {
        match m {
            CfMethod::Als => Method::HybridAls,
            CfMethod::Bpr => Method::HybridBpr,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Cb => "CB",
            Method::Als => "ALS",
            Method::Bpr => "BPR",
            Method::HybridAls => "Hybrid-ALS",
            Method::HybridBpr => "Hybrid-BPR",
        })
    }
}

/// One evaluation query: a user facing an OA, and the templates they went on
/// to use (held out from training).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub user: String,
    pub oa_text: String,
    pub relevant: BTreeSet<String>,
}

pub struct EvalInputs<'a> {
    pub provider: &'a dyn EmbeddingProvider,
    pub store: &'a EmbeddingStore,
    pub topic_templates: &'a BTreeMap<String, Vec<String>>,
    pub global_models: Vec<(CfMethod, &'a FactorModel)>,
    pub topic_models: Vec<(CfMethod, &'a BTreeMap<String, FactorModel>)>,
    /// training interactions; a user's training templates are never ranked
    pub train: &'a InteractionMatrix,
    pub k: usize,
    pub blend_weight: f64,
}

/// Aggregates over evaluated units: cases for CB/CF, (case, topic) pairs
/// for the hybrids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub k: usize,
    pub units: usize,
    pub mean: MetricTriple,
    pub median: MetricTriple,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub per_topic: BTreeMap<String, MetricTriple>,
}

impl RankingMetrics {
    pub fn from_units(k: usize, units: &[(Option<String>, MetricTriple)]) -> Self {
        let values: Vec<MetricTriple> = units.iter().map(|u| u.1).collect();
        let mut by_topic: BTreeMap<String, Vec<MetricTriple>> = BTreeMap::new();
        for (topic, m) in units {
            if let Some(t) = topic {
                by_topic.entry(t.clone()).or_default().push(*m);
            }
        }
        RankingMetrics {
            k,
            units: units.len(),
            mean: aggregate(&values, mean),
            median: aggregate(&values, median),
            per_topic: by_topic.into_iter().map(|(t, v)| (t, aggregate(&v, mean))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub methods: BTreeMap<Method, RankingMetrics>,
    /// cases skipped because nothing relevant was held out
    pub excluded_cases: usize,
}

fn training_set(train: &InteractionMatrix, user: &str) -> HashSet<String> {
    train.positives_of(user).into_iter().collect()
}

fn top_ids<'a>(items: impl Iterator<Item = &'a String>, k: usize) -> Vec<String> {
    items.take(k).cloned().collect()
}

type Units = Vec<(Method, Option<String>, MetricTriple)>;

pub fn evaluate(inputs: &EvalInputs<'_>, cases: &[EvalCase]) -> Result<EvalReport, CascadeError> {
    let k = inputs.k;
    if k == 0 {
        return Err(CascadeError::InvalidArgument("k must be >= 1".into()));
    }
    if let Some(c) = cases.iter().find(|c| inputs.train.user_index(&c.user).is_none()) {
        return Err(CascadeError::InvalidArgument(format!("test user {:?} has no training data", c.user)));
    }
    let topic_of: BTreeMap<&String, &String> = inputs
        .topic_templates
        .iter()
        .flat_map(|(topic, ts)| ts.iter().map(move |t| (t, topic)))
        .collect();
    let all_templates: Vec<String> = topic_of.keys().map(|t| (*t).clone()).collect();
    let kept: Vec<&EvalCase> = cases.iter().filter(|c| !c.relevant.is_empty()).collect();
    let per_case: Vec<Units> = kept
        .par_iter()
        .map(|case| -> Result<Units, CascadeError> {
            let mut units = Units::new();
            let exclude = training_set(inputs.train, &case.user);
            let query = segment_and_pool(inputs.provider, &case.oa_text, inputs.provider.token_limit())?.embedding;
            let cb = cb_ranking(&query, inputs.store, &exclude)?;
            let cb_ids = top_ids(cb.iter().map(|t| &t.template_id), k);
            units.push((Method::Cb, None, metrics_at_k(&cb_ids, &case.relevant, k).expect("non-empty")));

            let candidates: Vec<String> = all_templates.iter().filter(|t| !exclude.contains(*t)).cloned().collect();
            for (method, model) in &inputs.global_models {
                let ranking = model.rank(&case.user, &candidates);
                let ids = top_ids(ranking.items.iter().map(|i| &i.0), k);
                units.push((Method::pure(*method), None, metrics_at_k(&ids, &case.relevant, k).expect("non-empty")));
            }

            let mut relevant_by_topic: BTreeMap<&String, BTreeSet<String>> = BTreeMap::new();
            for t in &case.relevant {
                if let Some(topic) = topic_of.get(t) {
                    relevant_by_topic.entry(topic).or_default().insert(t.clone());
                }
            }
            for (method, models) in &inputs.topic_models {
                let rec = Recommender {
                    provider: inputs.provider,
                    store: inputs.store,
                    topic_models: models,
                    topic_templates: inputs.topic_templates,
                };
                let slate = rec.recommend_for(&query, &case.user, k, inputs.blend_weight, &exclude)?;
                for (topic, relevant) in &relevant_by_topic {
                    // a relevant topic the CB stage never surfaced scores zero
                    let m = match slate.topics.iter().find(|s| &s.topic_id == *topic) {
                        Some(s) => {
                            let ids = top_ids(s.items.iter().map(|i| &i.template_id), k);
                            metrics_at_k(&ids, relevant, k).expect("non-empty")
                        }
                        None => MetricTriple::default(),
                    };
                    units.push((Method::hybrid(*method), Some((*topic).clone()), m));
                }
            }
            Ok(units)
        })
        .collect::<Result<_, _>>()?;

    let mut grouped: BTreeMap<Method, Vec<(Option<String>, MetricTriple)>> = BTreeMap::new();
    for (method, topic, m) in per_case.into_iter().flatten() {
        grouped.entry(method).or_default().push((topic, m));
    }
    Ok(EvalReport {
        k,
        methods: grouped
            .into_iter()
            .map(|(method, units)| (method, RankingMetrics::from_units(k, &units)))
            .collect(),
        excluded_cases: cases.len() - kept.len(),
    })
}

/// Metrics of a factor model ranking every non-training template, per user.
pub fn evaluate_cf(
    model: &FactorModel,
    train: &InteractionMatrix,
    holdout: &BTreeMap<String, BTreeSet<String>>,
    k: usize,
) -> RankingMetrics {
    let units: Vec<(Option<String>, MetricTriple)> = holdout
        .par_iter()
        .filter(|(_, rel)| !rel.is_empty())
        .map(|(user, relevant)| {
            let exclude = training_set(train, user);
            let candidates: Vec<String> = train.templates().iter().filter(|t| !exclude.contains(*t)).cloned().collect();
            let ranking = model.rank(user, &candidates);
            let ids = top_ids(ranking.items.iter().map(|i| &i.0), k);
            (None, metrics_at_k(&ids, relevant, k).expect("non-empty"))
        })
        .collect();
    RankingMetrics::from_units(k, &units)
}

/// Expected metrics of a uniformly random ranking of the non-training
/// templates, estimated over `rounds` seeded shuffles.
pub fn random_baseline(
    train: &InteractionMatrix,
    holdout: &BTreeMap<String, BTreeSet<String>>,
    k: usize,
    rounds: usize,
    seed: u64,
) -> RankingMetrics {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut units = Vec::new();
    for _ in 0..rounds {
        for (user, relevant) in holdout.iter().filter(|(_, r)| !r.is_empty()) {
            let exclude = training_set(train, user);
            let mut candidates: Vec<String> =
                train.templates().iter().filter(|t| !exclude.contains(*t)).cloned().collect();
            candidates.shuffle(&mut rng);
            units.push((None, metrics_at_k(&candidates, relevant, k).expect("non-empty")));
        }
    }
    RankingMetrics::from_units(k, &units)
}
