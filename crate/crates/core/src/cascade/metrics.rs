//! Ranking metrics at a cutoff k with binary relevance.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// DCG of the first `k` items, binary gains, ranks starting at 1.
pub fn dcg_at_k(ranked: &[String], relevant: &BTreeSet<String>, k: usize) -> f64 {
    ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, t)| relevant.contains(*t))
        .map(|(i, _)| discount(i + 1))
        .sum()
}

/// DCG of an ideal list: all relevant items first.
pub fn ideal_dcg_at_k(num_relevant: usize, k: usize) -> f64 {
    (1..=num_relevant.min(k)).map(discount).sum()
}

/// precision = hits / k, recall = hits / |relevant|, nDCG = DCG / IDCG.
/// `None` when there are no relevant items.
pub fn metrics_at_k(ranked: &[String], relevant: &BTreeSet<String>, k: usize) -> Option<MetricTriple> {
    if relevant.is_empty() || k == 0 {
        return None;
    }
    let mut seen = BTreeSet::new();
    let hits = ranked
        .iter()
        .take(k)
        .filter(|t| relevant.contains(*t) && seen.insert(t.as_str()))
        .count();
    Some(MetricTriple {
        precision: hits as f64 / k as f64,
        recall: hits as f64 / relevant.len() as f64,
        ndcg: dcg_at_k(ranked, relevant, k) / ideal_dcg_at_k(relevant.len(), k),
    })
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn aggregate(values: &[MetricTriple], f: fn(&[f64]) -> f64) -> MetricTriple {
    let col = |g: fn(&MetricTriple) -> f64| f(&values.iter().map(g).collect::<Vec<_>>());
    MetricTriple {
        precision: col(|m| m.precision),
        recall: col(|m| m.recall),
        ndcg: col(|m| m.ndcg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(items: &[&str]) -> Vec<String> {
        items.iter().map(|x| x.to_string()).collect()
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn worked_example() {
        let m = metrics_at_k(&s(&["a", "x", "b"]), &set(&["a", "b"]), 3).unwrap();
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.recall, 1.0);
        let oracle = (1.0 + 1.0 / 4f64.log2()) / (1.0 + 1.0 / 3f64.log2());
        assert!((m.ndcg - oracle).abs() < 1e-12);
        assert!((m.ndcg - 0.9197).abs() < 1e-4);
    }

    #[test]
    fn perfect_and_empty() {
        let m = metrics_at_k(&s(&["a", "b", "x"]), &set(&["a", "b"]), 3).unwrap();
        assert_eq!(m.ndcg, 1.0);
        let z = metrics_at_k(&s(&["x", "y"]), &set(&["a"]), 2).unwrap();
        assert_eq!(z, MetricTriple::default());
        assert!(metrics_at_k(&s(&["a"]), &set(&[]), 2).is_none());
    }

    fn permutations(items: &[String]) -> Vec<Vec<String>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let head = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, head.clone());
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn ndcg_matches_best_permutation_exhaustively() {
        let pool = ["a", "b", "c", "d", "e"];
        for n in 1..=5 {
            let items = s(&pool[..n]);
            for mask in 1u32..(1 << n) {
                let relevant: BTreeSet<String> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| items[i].clone()).collect();
                for k in 1..=n {
                    let perms = permutations(&items);
                    let best = perms.iter().map(|p| dcg_at_k(p, &relevant, k)).fold(0.0, f64::max);
                    for p in &perms {
                        let m = metrics_at_k(p, &relevant, k).unwrap();
                        let brute = dcg_at_k(p, &relevant, k) / best;
                        assert!((m.ndcg - brute).abs() < 1e-12);
                        assert!((0.0..=1.0 + 1e-12).contains(&m.ndcg));
                    }
                }
            }
        }
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(mean(&[1.0, 2.0]), 1.5);
    }
}
