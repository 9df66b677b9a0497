use std::collections::{BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_lda, LdaModel, LdaParams, TopicModelError};
use crate::corpus::DocumentTermMatrix;

/// Mean per-word log-likelihood of `dtm` under `theta . phi`.
///
/// Negative; closer to zero is a better fit. Documents unknown to the model
/// are scored with the model's mean topic mixture.
pub fn perplexity_score(model: &LdaModel, dtm: &DocumentTermMatrix) -> Result<f64, TopicModelError> {
    let total = dtm.total_tokens();
    if total == 0 {
        return Err(TopicModelError::EmptyMatrix);
    }
    let term_map: HashMap<&str, usize> = model
        .vocabulary
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let columns: Vec<usize> = dtm
        .vocabulary()
        .iter()
        .map(|t| {
            term_map
                .get(t.as_str())
                .copied()
                .ok_or_else(|| TopicModelError::UnknownTerm(t.clone()))
        })
        .collect::<Result<_, _>>()?;
    let doc_map: HashMap<&str, usize> = model
        .doc_ids
        .iter()
        .enumerate()
        .map(|(i, d)| (d.as_str(), i))
        .collect();
    let mean_theta: Vec<f64> = if model.theta.is_empty() {
        vec![1.0 / model.k as f64; model.k]
    } else {
        (0..model.k)
            .map(|t| model.theta.iter().map(|r| r[t]).sum::<f64>() / model.theta.len() as f64)
            .collect()
    };

    let mut loglik = 0.0;
    for row in dtm.rows() {
        let theta = doc_map
            .get(row.doc_id.as_str())
            .map(|&d| &model.theta[d])
            .unwrap_or(&mean_theta);
        for &(col, count) in &row.counts {
            let w = columns[col];
            let p: f64 = (0..model.k).map(|t| theta[t] * model.phi[t][w]).sum();
            loglik += count as f64 * p.ln();
        }
    }
    Ok(loglik / total as f64)
}

/// UMass coherence averaged over topics.
///
/// For each topic's `top_n` words w_1..w_n (by probability) the score is the
/// mean over pairs i > j of ln((D(w_i, w_j) + 1) / D(w_j)), where D counts
/// documents of `dtm` containing the word(s). A word absent from `dtm` has
/// D = 0; its denominator is floored at 1 so the pair contributes ln(1) = 0.
pub fn coherence_score(
    model: &LdaModel,
    dtm: &DocumentTermMatrix,
    top_n: usize,
) -> Result<f64, TopicModelError> {
    if top_n < 2 {
        return Err(TopicModelError::InvalidParameter("top_n must be >= 2".into()));
    }
    let doc_sets: Vec<HashSet<&str>> = dtm
        .rows()
        .iter()
        .map(|r| {
            r.counts
                .iter()
                .map(|&(c, _)| dtm.vocabulary()[c].as_str())
                .collect()
        })
        .collect();
    let df = |w: &str| doc_sets.iter().filter(|s| s.contains(w)).count() as f64;
    let co_df = |a: &str, b: &str| {
        doc_sets
            .iter()
            .filter(|s| s.contains(a) && s.contains(b))
            .count() as f64
    };

    let mut per_topic = Vec::with_capacity(model.k);
    for topic in 0..model.k {
        let words: Vec<String> = model
            .top_words(topic, top_n)?
            .into_iter()
            .map(|(w, _)| w)
            .collect();
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for i in 1..words.len() {
            for j in 0..i {
                let denom = df(&words[j]).max(1.0);
                sum += ((co_df(&words[i], &words[j]) + 1.0) / denom).ln();
                pairs += 1;
            }
        }
        per_topic.push(if pairs == 0 { 0.0 } else { sum / pairs as f64 });
    }
    Ok(per_topic.iter().sum::<f64>() / per_topic.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    #[serde(rename = "K")]
    pub k: usize,
    pub perplexity_score: f64,
    pub coherence_score: f64,
}

/// Topic count with the highest coherence; ties go to the lower
/// (better) perplexity score, then to the smaller K.
pub fn select_k(grid: &[GridResult]) -> Option<usize> {
    grid.iter()
        .min_by(|a, b| {
            b.coherence_score
                .total_cmp(&a.coherence_score)
                .then(a.perplexity_score.total_cmp(&b.perplexity_score))
                .then(a.k.cmp(&b.k))
        })
        .map(|g| g.k)
}

/// Fit one model per distinct K (in parallel, one sampler each) and score
/// it on the training matrix. Results are sorted by K.
pub fn lda_grid(
    dtm: &DocumentTermMatrix,
    ks: &[usize],
    base: &LdaParams,
    top_n: usize,
) -> Result<Vec<GridResult>, TopicModelError> {
    let distinct: BTreeSet<usize> = ks.iter().copied().collect();
    distinct
        .into_par_iter()
        .map(|k| {
            let params = LdaParams { k, ..*base };
            let model = fit_lda(dtm, &params)?;
            Ok(GridResult {
                k,
                perplexity_score: perplexity_score(&model, dtm)?,
                coherence_score: coherence_score(&model, dtm, top_n)?,
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map(|mut v| {
            v.sort_by_key(|g| g.k);
            v
        })
}
