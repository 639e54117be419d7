//! Small dense linear algebra: ridge-regularised normal equations.
//!
//! Problem sizes here are tiny (a few dozen features at most), so the
//! normal equations are formed explicitly and solved with a Cholesky
//! factorisation.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Pivots smaller than this fraction of the largest pivot are treated as a
/// rank deficiency.
const RELATIVE_PIVOT_FLOOR: f64 = 1e-13;

/// Minimises `‖XW − Y‖² + λ‖W‖²` over `W` (p×q).
///
/// Every column of `x` is penalised. Use [`solve_ridge_with_intercept`] to
/// fit an unpenalised offset.
pub fn solve_ridge(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let penalty = vec![lambda; x.ncols()];
    solve_penalized(x, y, &penalty)
}

/// Ridge fit of `Y ≈ XW + 1bᵀ`, with the offset `b` excluded from the
/// penalty. Returns `(W, b)` with `W` p×q and `b` of length q.
pub fn solve_ridge_with_intercept(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (n, p) = x.shape();
    let augmented = DMatrix::from_fn(n, p + 1, |i, j| if j < p { x[(i, j)] } else { 1.0 });
    let mut penalty = vec![lambda; p + 1];
    penalty[p] = 0.0;
    let solution = solve_penalized(&augmented, y, &penalty)?;
    let coefficients = solution.rows(0, p).into_owned();
    let intercept = solution.row(p).transpose();
    Ok((coefficients, intercept))
}

/// Solves `(XᵀX + diag(penalty)) W = XᵀY`.
pub fn solve_penalized(x: &DMatrix<f64>, y: &DMatrix<f64>, penalty: &[f64]) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    if n == 0 {
        return Err(Error::Dimension("ridge system has no rows".into()));
    }
    if y.nrows() != n {
        return Err(Error::Dimension(format!(
            "design has {n} rows but targets have {}",
            y.nrows()
        )));
    }
    if penalty.len() != p {
        return Err(Error::Dimension(format!(
            "{} penalty weights for {p} columns",
            penalty.len()
        )));
    }
    if let Some(bad) = penalty.iter().find(|l| !l.is_finite() || **l < 0.0) {
        return Err(Error::Config(format!("ridge penalty must be finite and >= 0, got {bad}")));
    }

    let mut gram = x.transpose() * x;
    for (j, weight) in penalty.iter().enumerate() {
        gram[(j, j)] += weight;
    }
    let rhs = x.transpose() * y;

    let factor = Cholesky::new(gram)
        .ok_or_else(|| Error::Numeric("normal equations are not positive definite".into()))?;
    let pivots = factor.l_dirty().diagonal();
    let largest = pivots.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let smallest = pivots.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(smallest * smallest > RELATIVE_PIVOT_FLOOR * largest * largest) {
        return Err(Error::Numeric(
            "normal equations are singular; use a positive ridge penalty".into(),
        ));
    }
    let solution = factor.solve(&rhs);
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("ridge solution is not finite".into()));
    }
    Ok(solution)
}
