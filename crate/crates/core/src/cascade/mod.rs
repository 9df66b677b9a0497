//! Cascade hybrid recommender: content-based retrieval picks the topic set,
//! per-topic collaborative filtering ranks each topic's templates, and a
//! linear blend refines the CF scores with the CB similarities.

mod evaluate;
pub mod metrics;
mod report;

pub use evaluate::{evaluate, evaluate_cf, random_baseline, EvalCase, EvalInputs, EvalReport, Method, RankingMetrics};
pub use metrics::{metrics_at_k, MetricTriple};
pub use report::{render_metrics_table, render_trajectory, yearly_report, TrajectoryRow};

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cf::FactorModel;
use crate::embedding::{
    cosine, segment_and_pool, CbResult, CbTuple, Embedding, EmbeddingError, EmbeddingProvider, EmbeddingStore,
};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_BLEND_WEIGHT: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlateItem {
    pub template_id: String,
    pub blended: f64,
    /// normalized CF score
    pub cf: Option<f64>,
    /// normalized CB similarity, absent outside the CB/CF intersection
    pub cb: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSlate {
    pub topic_id: String,
    pub items: Vec<SlateItem>,
    /// no CF model for the topic: items are in CB order
    #[serde(default)]
    pub cb_fallback: bool,
    /// user unknown to the topic model: CF scores are popularity
    #[serde(default)]
    pub popularity_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationSlate {
    pub k: usize,
    pub blend_weight: f64,
    pub topics: Vec<TopicSlate>,
    pub cb: CbResult,
}

/// Min-max normalize; a constant list maps to 1.0.
pub fn min_max(scores: &[(String, f64)]) -> BTreeMap<String, f64> {
    let lo = scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let hi = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .map(|(t, s)| (t.clone(), if hi > lo { (s - lo) / (hi - lo) } else { 1.0 }))
        .collect()
}

/// blended = w * cf + (1 - w) * cb for templates with a CB score, w * cf
/// otherwise. Sorted by blended score, ties by template_id.
pub fn blend(cf_norm: &BTreeMap<String, f64>, cb_norm: &BTreeMap<String, f64>, w: f64) -> Vec<SlateItem> {
    let mut items: Vec<SlateItem> = cf_norm
        .iter()
        .map(|(t, &cf)| {
            let cb = cb_norm.get(t).copied();
            SlateItem {
                template_id: t.clone(),
                blended: match cb {
                    Some(cb) => w * cf + (1.0 - w) * cb,
                    None => w * cf,
                },
                cf: Some(cf),
                cb,
            }
        })
        .collect();
    sort_items(&mut items);
    items
}

fn sort_items(items: &mut [SlateItem]) {
    items.sort_by(|a, b| b.blended.total_cmp(&a.blended).then_with(|| a.template_id.cmp(&b.template_id)));
}

/// Read-only view over the stores needed for recommendation.
pub struct Recommender<'a> {
    pub provider: &'a dyn EmbeddingProvider,
    pub store: &'a EmbeddingStore,
    pub topic_models: &'a BTreeMap<String, FactorModel>,
    /// templates per topic, i.e. the CF candidate set of each topic
    pub topic_templates: &'a BTreeMap<String, Vec<String>>,
}

/// Group store entries by topic.
pub fn topic_templates(store: &EmbeddingStore) -> BTreeMap<String, Vec<String>> {
    let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for e in store.entries() {
        map.entry(e.topic_id.clone()).or_default().push(e.template_id.clone());
    }
    map.values_mut().for_each(|v| v.sort());
    map
}

/// Full CB ranking of the store against `query`, skipping `exclude`.
pub fn cb_ranking(
    query: &Embedding,
    store: &EmbeddingStore,
    exclude: &HashSet<String>,
) -> Result<Vec<CbTuple>, CascadeError> {
    if store.is_empty() {
        return Err(EmbeddingError::EmptyStore.into());
    }
    let mut out = store
        .iter()
        .filter(|(e, _)| !exclude.contains(&e.template_id))
        .map(|(e, v)| {
            Ok(CbTuple {
                topic_id: e.topic_id.clone(),
                template_id: e.template_id.clone(),
                source_oa_id: e.source_oa_id.clone(),
                similarity: cosine(query, v)?,
            })
        })
        .collect::<Result<Vec<_>, EmbeddingError>>()?;
    out.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then_with(|| a.template_id.cmp(&b.template_id)));
    Ok(out)
}

impl Recommender<'_> {
    pub fn recommend(&self, oa_text: &str, user: &str, k: usize, w: f64) -> Result<RecommendationSlate, CascadeError> {
        let query = segment_and_pool(self.provider, oa_text, self.provider.token_limit())?.embedding;
        self.recommend_for(&query, user, k, w, &HashSet::new())
    }

    /// The cascade for a precomputed query embedding. Templates in `exclude`
    /// are removed from every stage.
    pub fn recommend_for(
        &self,
        query: &Embedding,
        user: &str,
        k: usize,
        w: f64,
        exclude: &HashSet<String>,
    ) -> Result<RecommendationSlate, CascadeError> {
        if k == 0 {
            return Err(CascadeError::InvalidArgument("k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&w) {
            return Err(CascadeError::InvalidArgument(format!("blend weight {w} outside [0, 1]")));
        }
        let mut tuples = cb_ranking(query, self.store, exclude)?;
        tuples.truncate(k);
        let cb = CbResult::from_tuples(tuples);
        let mut topics = Vec::with_capacity(cb.topics.len());
        for topic in &cb.topics {
            let in_topic: Vec<(String, f64)> = cb
                .tuples
                .iter()
                .filter(|t| &t.topic_id == topic)
                .map(|t| (t.template_id.clone(), t.similarity))
                .collect();
            let cb_norm = min_max(&in_topic);
            let Some(model) = self.topic_models.get(topic) else {
                let mut items: Vec<SlateItem> = in_topic
                    .iter()
                    .map(|(t, _)| SlateItem {
                        template_id: t.clone(),
                        blended: cb_norm[t],
                        cf: None,
                        cb: Some(cb_norm[t]),
                    })
                    .collect();
                items.truncate(k);
                topics.push(TopicSlate {
                    topic_id: topic.clone(),
                    items,
                    cb_fallback: true,
                    popularity_fallback: false,
                });
                continue;
            };
            let candidates: Vec<String> = self
                .topic_templates
                .get(topic)
                .map(|v| v.iter().filter(|t| !exclude.contains(*t)).cloned().collect())
                .unwrap_or_default();
            let ranking = model.rank(user, &candidates);
            let cf_norm = min_max(&ranking.items);
            let mut items = blend(&cf_norm, &cb_norm, w);
            items.truncate(k);
            topics.push(TopicSlate {
                topic_id: topic.clone(),
                items,
                cb_fallback: false,
                popularity_fallback: ranking.fallback,
            });
        }
        Ok(RecommendationSlate {
            k,
            blend_weight: w,
            topics,
            cb,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|&(t, s)| (t.to_string(), s)).collect()
    }

    fn order(items: &[SlateItem]) -> Vec<&str> {
        items.iter().map(|i| i.template_id.as_str()).collect()
    }

    #[test]
    fn hand_blend_example() {
        let items = blend(&map(&[("t1", 0.9), ("t2", 0.5)]), &map(&[("t2", 0.8)]), 0.5);
        assert_eq!(order(&items), vec!["t2", "t1"]);
        assert!((items[0].blended - 0.65).abs() < 1e-9);
        assert!((items[1].blended - 0.45).abs() < 1e-9);
        assert_eq!(items[1].cb, None);
    }

    #[test]
    fn blend_boundaries() {
        let cf = map(&[("a", 0.2), ("b", 1.0), ("c", 0.0), ("d", 0.7)]);
        let cb = map(&[("a", 1.0), ("c", 0.4), ("d", 0.0)]);
        assert_eq!(order(&blend(&cf, &cb, 1.0)), vec!["b", "d", "a", "c"]);
        let w0 = blend(&cf, &cb, 0.0);
        let inter: Vec<&str> = order(&w0).into_iter().filter(|t| cb.contains_key(*t)).collect();
        assert_eq!(inter, vec!["a", "c", "d"]);
        assert_eq!(w0.iter().find(|i| i.template_id == "b").unwrap().blended, 0.0);
    }

    #[test]
    fn min_max_degenerate() {
        let n = min_max(&[("a".into(), 2.0), ("b".into(), 2.0)]);
        assert_eq!(n["a"], 1.0);
        let n = min_max(&[("a".into(), 1.0), ("b".into(), 3.0), ("c".into(), 2.0)]);
        assert_eq!((n["a"], n["b"], n["c"]), (0.0, 1.0, 0.5));
    }

    proptest! {
        #[test]
        fn raising_cb_never_lowers_rank(
            cf in proptest::collection::vec(0.0f64..=1.0, 2..12),
            cb in proptest::collection::vec(0.0f64..=1.0, 2..12),
            w in 0.0f64..=1.0,
            who in 0usize..12,
            bump in 0.0f64..=1.0,
        ) {
            let n = cf.len().min(cb.len());
            let who = who % n;
            let cf_map: BTreeMap<String, f64> = (0..n).map(|i| (format!("t{i:02}"), cf[i])).collect();
            let mut cb_map: BTreeMap<String, f64> = (0..n).map(|i| (format!("t{i:02}"), cb[i])).collect();
            let id = format!("t{who:02}");
            let rank = |cb_map: &BTreeMap<String, f64>| blend(&cf_map, cb_map, w).iter().position(|i| i.template_id == id).unwrap();
            let before = rank(&cb_map);
            let raised = (cb_map[&id] + bump).min(1.0);
            cb_map.insert(id.clone(), raised);
            prop_assert!(rank(&cb_map) <= before);
        }
    }
}
