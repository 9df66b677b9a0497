//! Bayesian personalized ranking by SGD over sampled
//! (user, positive, negative) triplets.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CfError, CfMethod, CfParams, FactorModel, InteractionMatrix};

pub fn fit_bpr(matrix: &InteractionMatrix, params: &CfParams) -> Result<FactorModel, CfError> {
    let params = CfParams {
        method: CfMethod::Bpr,
        ..params.clone()
    };
    params.validate()?;
    if matrix.entries().is_empty() {
        return Err(CfError::EmptyMatrix);
    }
    let f = params.factors;
    let nt = matrix.templates().len();
    let positives: Vec<HashSet<usize>> = matrix
        .rows()
        .into_iter()
        .map(|row| row.into_iter().filter(|&(_, w)| w > 0.0).map(|(t, _)| t).collect())
        .collect();
    let mut pairs = Vec::new();
    for (u, pos) in positives.iter().enumerate() {
        if pos.len() == nt {
            log::warn!("user {} has no negative templates; excluded from sampling", matrix.users()[u]);
            continue;
        }
        let mut sorted: Vec<usize> = pos.iter().copied().collect();
        sorted.sort_unstable();
        pairs.extend(sorted.into_iter().map(|t| (u, t)));
    }
    if pairs.is_empty() {
        return Err(CfError::NothingToSample);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut uf: Vec<f64> = (0..matrix.users().len() * f).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let mut vf: Vec<f64> = (0..nt * f).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let (lr, reg) = (params.lr, params.bpr_reg);
    for _ in 0..params.epochs {
        for _ in 0..pairs.len() {
            let (u, i) = pairs[rng.gen_range(0..pairs.len())];
            let j = loop {
                let j = rng.gen_range(0..nt);
                if !positives[u].contains(&j) {
                    break j;
                }
            };
            let (uo, io, jo) = (u * f, i * f, j * f);
            let x: f64 = (0..f).map(|d| uf[uo + d] * (vf[io + d] - vf[jo + d])).sum();
            let g = 1.0 / (1.0 + x.exp());
            for d in 0..f {
                let (wu, hi, hj) = (uf[uo + d], vf[io + d], vf[jo + d]);
                uf[uo + d] += lr * (g * (hi - hj) - reg * wu);
                vf[io + d] += lr * (g * wu - reg * hi);
                vf[jo + d] += lr * (-g * wu - reg * hj);
            }
        }
    }
    FactorModel::new(
        params,
        matrix.users().to_vec(),
        matrix.templates().to_vec(),
        uf,
        vf,
        matrix.column_mass(),
    )
}

/// Fraction of (user, positive, negative) triples over the matrix where the
/// positive scores strictly higher, by exhaustive enumeration. `None` when
/// there are no such triples.
pub fn training_auc(model: &FactorModel, matrix: &InteractionMatrix) -> Option<f64> {
    let (mut good, mut total) = (0u64, 0u64);
    for user in matrix.users() {
        let pos = matrix.positives_of(user);
        let scores: Vec<(bool, f64)> = matrix
            .templates()
            .iter()
            .filter_map(|t| Some((pos.contains(t), model.score(user, t)?)))
            .collect();
        for &(_, sp) in scores.iter().filter(|s| s.0) {
            for &(_, sn) in scores.iter().filter(|s| !s.0) {
                total += 1;
                good += (sp > sn) as u64;
            }
        }
    }
    (total > 0).then(|| good as f64 / total as f64)
}
