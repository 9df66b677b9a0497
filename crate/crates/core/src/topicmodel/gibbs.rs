use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LdaModel, TopicModelError};
use crate::corpus::DocumentTermMatrix;

/// Sampler settings. `alpha = None` selects the 50/K heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaParams {
    pub k: usize,
    pub alpha: Option<f64>,
    pub eta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl LdaParams {
    pub fn new(k: usize) -> Self {
        LdaParams {
            k,
            alpha: None,
            eta: 0.01,
            iterations: 200,
            seed: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.k.max(1) as f64)
    }
}

/// Fit LDA on `dtm` by collapsed Gibbs sampling.
///
/// Single-threaded and fully determined by `params.seed`. `phi` and `theta`
/// are the smoothed count estimates of the final sampler state.
pub fn fit_lda(dtm: &DocumentTermMatrix, params: &LdaParams) -> Result<LdaModel, TopicModelError> {
    let k = params.k;
    let alpha = params.alpha();
    let eta = params.eta;
    if k == 0 {
        return Err(TopicModelError::InvalidParameter("K must be >= 1".into()));
    }
    if params.iterations == 0 {
        return Err(TopicModelError::InvalidParameter("iterations must be >= 1".into()));
    }
    if !(alpha > 0.0) || !(eta > 0.0) {
        return Err(TopicModelError::InvalidParameter("alpha and eta must be > 0".into()));
    }
    if dtm.is_empty() {
        return Err(TopicModelError::EmptyMatrix);
    }
    let total = dtm.total_tokens();
    if k as u64 > total {
        return Err(TopicModelError::MoreTopicsThanTokens { topics: k, tokens: total });
    }

    let v = dtm.vocabulary().len();
    let docs: Vec<Vec<usize>> = dtm
        .rows()
        .iter()
        .map(|row| {
            row.counts
                .iter()
                .flat_map(|&(w, c)| std::iter::repeat(w).take(c as usize))
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut doc_topic = vec![vec![0u32; k]; docs.len()];
    let mut topic_word = vec![vec![0u32; v]; k];
    let mut topic_total = vec![0u64; k];
    let mut assignments: Vec<Vec<usize>> = Vec::with_capacity(docs.len());
    for (d, words) in docs.iter().enumerate() {
        let z: Vec<usize> = words
            .iter()
            .map(|&w| {
                let t = rng.gen_range(0..k);
                doc_topic[d][t] += 1;
                topic_word[t][w] += 1;
                topic_total[t] += 1;
                t
            })
            .collect();
        assignments.push(z);
    }

    let v_eta = v as f64 * eta;
    let mut weights = vec![0.0f64; k];
    for _ in 0..params.iterations {
        for (d, words) in docs.iter().enumerate() {
            for (i, &w) in words.iter().enumerate() {
                let old = assignments[d][i];
                doc_topic[d][old] -= 1;
                topic_word[old][w] -= 1;
                topic_total[old] -= 1;

                let mut sum = 0.0;
                for t in 0..k {
                    sum += (doc_topic[d][t] as f64 + alpha) * (topic_word[t][w] as f64 + eta)
                        / (topic_total[t] as f64 + v_eta);
                    weights[t] = sum;
                }
                let u = rng.gen::<f64>() * sum;
                let new = weights.iter().position(|&c| u < c).unwrap_or(k - 1);

                assignments[d][i] = new;
                doc_topic[d][new] += 1;
                topic_word[new][w] += 1;
                topic_total[new] += 1;
            }
        }
    }

    let phi = topic_word
        .iter()
        .zip(&topic_total)
        .map(|(row, &n)| {
            let denom = n as f64 + v_eta;
            row.iter().map(|&c| (c as f64 + eta) / denom).collect()
        })
        .collect();
    let k_alpha = k as f64 * alpha;
    let theta = doc_topic
        .iter()
        .zip(&docs)
        .map(|(row, words)| {
            let denom = words.len() as f64 + k_alpha;
            row.iter().map(|&c| (c as f64 + alpha) / denom).collect()
        })
        .collect();

    Ok(LdaModel {
        k,
        alpha,
        eta,
        vocabulary: dtm.vocabulary().to_vec(),
        doc_ids: dtm.rows().iter().map(|r| r.doc_id.clone()).collect(),
        phi,
        theta,
        seed: params.seed,
        iterations: params.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_dtm, TokenList};
    use crate::synthetic::planted_lda_corpus;
    use std::collections::HashSet;

    fn docs(raw: &[&[&str]]) -> Vec<(String, TokenList)> {
        raw.iter()
            .enumerate()
            .map(|(i, d)| {
                (
                    format!("d{i}"),
                    TokenList {
                        tokens: d.iter().map(|s| s.to_string()).collect(),
                    },
                )
            })
            .collect()
    }

    #[test]
    fn single_topic_degenerates_to_unigram() {
        let dtm = build_dtm(&docs(&[&["a", "a", "b"], &["a"], &["b", "c", "c"]]), 1).unwrap();
        let model = fit_lda(&dtm, &LdaParams { k: 1, alpha: Some(0.5), eta: 0.01, iterations: 3, seed: 1 }).unwrap();
        for row in &model.theta {
            assert_eq!(row, &vec![1.0]);
        }
        // counts a:3 b:2 c:2 over 7 tokens, smoothed by eta
        let denom = 7.0 + 3.0 * 0.01;
        let expected = [3.01 / denom, 2.01 / denom, 2.01 / denom];
        for (p, e) in model.phi[0].iter().zip(expected) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn vanishing_eta_gives_unigram_proportions() {
        let dtm = build_dtm(&docs(&[&["a", "a", "a", "b"]]), 1).unwrap();
        let model = fit_lda(&dtm, &LdaParams { k: 1, alpha: Some(1.0), eta: 1e-12, iterations: 1, seed: 0 }).unwrap();
        let top = model.top_words(0, 2).unwrap();
        assert_eq!(top[0].0, "a");
        assert!((top[0].1 - 0.75).abs() < 1e-9);
        assert_eq!(top[1].0, "b");
        assert!((top[1].1 - 0.25).abs() < 1e-9);
    }

    #[test]
    fn too_many_topics() {
        let dtm = build_dtm(&docs(&[&["a", "b"]]), 1).unwrap();
        let err = fit_lda(&dtm, &LdaParams::new(3)).unwrap_err();
        assert!(err.to_string().starts_with("more topics than tokens"));
    }

    #[test]
    fn invalid_parameters() {
        let dtm = build_dtm(&docs(&[&["a", "b"]]), 1).unwrap();
        assert!(fit_lda(&dtm, &LdaParams { iterations: 0, ..LdaParams::new(1) }).is_err());
        assert!(fit_lda(&dtm, &LdaParams { k: 0, ..LdaParams::new(1) }).is_err());
        assert!(fit_lda(&dtm, &LdaParams { eta: 0.0, ..LdaParams::new(1) }).is_err());
    }

    #[test]
    fn rows_are_stochastic_and_deterministic() {
        let planted = planted_lda_corpus(20, 10, 30, 5);
        let dtm = build_dtm(&planted.docs, 1).unwrap();
        let params = LdaParams { k: 3, alpha: Some(0.1), eta: 0.01, iterations: 30, seed: 7 };
        let a = fit_lda(&dtm, &params).unwrap();
        let b = fit_lda(&dtm, &params).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
    }

    fn purity(model: &LdaModel, vocab_a: &HashSet<String>) -> f64 {
        (0..model.k)
            .map(|t| {
                let top = model.top_words(t, 10).unwrap();
                let in_a = top.iter().filter(|(w, _)| vocab_a.contains(w)).count();
                in_a.max(top.len() - in_a) as f64 / top.len() as f64
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn planted_partition_recovered_across_seeds() {
        let planted = planted_lda_corpus(100, 25, 60, 11);
        let dtm = build_dtm(&planted.docs, 1).unwrap();
        let vocab_a: HashSet<String> = planted.vocabularies[0].iter().cloned().collect();
        for seed in [1, 2, 3] {
            let params = LdaParams { k: 2, alpha: Some(0.1), eta: 0.01, iterations: 200, seed };
            let model = fit_lda(&dtm, &params).unwrap();
            assert!(purity(&model, &vocab_a) >= 0.9, "seed {seed}");
        }
    }
}
