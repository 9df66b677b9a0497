//! Implicit-feedback alternating least squares.
//!
//! Every cell has preference p = 1 if weight > 0 else 0 and confidence
//! c = 1 + alpha * weight; the loss is
//! sum_{u,t} c (p - U_u.V_t)^2 + reg (|U|^2 + |V|^2). Each half-sweep solves
//! the ridge problems for one side exactly, so the loss never increases.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CfError, CfMethod, CfParams, FactorModel, InteractionMatrix};

pub fn fit_als(matrix: &InteractionMatrix, params: &CfParams) -> Result<FactorModel, CfError> {
    fit_als_traced(matrix, params).map(|(m, _)| m)
}

/// Also returns the loss before training and after every half-sweep.
pub fn fit_als_traced(matrix: &InteractionMatrix, params: &CfParams) -> Result<(FactorModel, Vec<f64>), CfError> {
    let params = CfParams {
        method: CfMethod::Als,
        ..params.clone()
    };
    params.validate()?;
    if matrix.entries().is_empty() {
        return Err(CfError::EmptyMatrix);
    }
    let f = params.factors;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut init = |n: usize| DMatrix::from_fn(n, f, |_, _| rng.gen_range(-0.1..0.1));
    let mut u = init(matrix.users().len());
    let mut v = init(matrix.templates().len());
    let rows = matrix.rows();
    let cols = matrix.columns();
    let mut trace = vec![als_objective(matrix, &params, &u, &v)];
    for _ in 0..params.iterations {
        solve_side(&mut u, &v, &rows, &params)?;
        trace.push(als_objective(matrix, &params, &u, &v));
        solve_side(&mut v, &u, &cols, &params)?;
        trace.push(als_objective(matrix, &params, &u, &v));
    }
    let model = FactorModel::new(
        params,
        matrix.users().to_vec(),
        matrix.templates().to_vec(),
        row_major(&u),
        row_major(&v),
        matrix.column_mass(),
    )?;
    Ok((model, trace))
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Re-solve every row of `x` holding `y` fixed. `lists[i]` holds the
/// observed (other index, weight) pairs of row i.
fn solve_side(x: &mut DMatrix<f64>, y: &DMatrix<f64>, lists: &[Vec<(usize, f64)>], p: &CfParams) -> Result<(), CfError> {
    let f = p.factors;
    let gram = y.transpose() * y;
    for (i, obs) in lists.iter().enumerate() {
        let mut a = gram.clone();
        let mut b = DVector::zeros(f);
        for &(j, w) in obs {
            let yj = y.row(j).transpose();
            let c = 1.0 + p.alpha * w;
            a += (c - 1.0) * &yj * yj.transpose();
            if w > 0.0 {
                b += c * &yj;
            }
        }
        for d in 0..f {
            a[(d, d)] += p.reg;
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| CfError::Numerical(format!("normal equations of row {i} not positive definite")))?;
        x.set_row(i, &chol.solve(&b).transpose());
    }
    Ok(())
}

/// Full weighted loss, computed with the Gram trick for the unobserved cells.
pub fn als_objective(matrix: &InteractionMatrix, params: &CfParams, u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let all_sq = (u.transpose() * u).component_mul(&(v.transpose() * v)).sum();
    let mut loss = all_sq;
    for &(ui, ti, w) in matrix.entries() {
        let x = u.row(ui).dot(&v.row(ti));
        let pref = if w > 0.0 { 1.0 } else { 0.0 };
        let c = 1.0 + params.alpha * w;
        loss += c * (pref - x).powi(2) - x * x;
    }
    loss + params.reg * (u.norm_squared() + v.norm_squared())
}
