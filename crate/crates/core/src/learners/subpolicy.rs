use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::ActionBounds;
use crate::error::{Error, Result};
use crate::linalg::solve_ridge_with_intercept;

/// Affine state → action map, clamped into the action box.
///
/// Row `j` of `weights` holds the sensitivity of action component `j` to
/// each state feature, in action units per state unit.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSubpolicy {
    weights: DMatrix<f64>,
    bias: DVector<f64>,
    bounds: ActionBounds,
}

impl LinearSubpolicy {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>, bounds: ActionBounds) -> Result<Self> {
        if weights.nrows() != bias.len() || bias.len() != bounds.dim() {
            return Err(Error::Dimension(format!(
                "subpolicy has {} weight rows, {} biases, {} bounds",
                weights.nrows(),
                bias.len(),
                bounds.dim()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("subpolicy coefficients are not finite".into()));
        }
        Ok(LinearSubpolicy {
            weights,
            bias,
            bounds,
        })
    }

    /// Ridge fit with an unpenalised intercept. `states` is N×d_s and
    /// `actions` N×d_a.
    pub fn fit(
        states: &DMatrix<f64>,
        actions: &DMatrix<f64>,
        lambda: f64,
        bounds: ActionBounds,
    ) -> Result<Self> {
        if actions.ncols() != bounds.dim() {
            return Err(Error::Dimension(format!(
                "{} action columns for {} bounds",
                actions.ncols(),
                bounds.dim()
            )));
        }
        let (coefficients, intercept) = solve_ridge_with_intercept(states, actions, lambda)?;
        LinearSubpolicy::new(coefficients.transpose(), intercept, bounds)
    }

    pub fn state_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn action_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &DVector<f64> {
        &self.bias
    }

    pub fn bounds(&self) -> &ActionBounds {
        &self.bounds
    }

    /// `clamp(W·s + b)`. Panics if `state` has the wrong length.
    pub fn predict(&self, state: &[f64]) -> Vec<f64> {
        assert_eq!(state.len(), self.state_dim(), "state length");
        let mut action: Vec<f64> = (0..self.action_dim())
            .map(|j| {
                (0..state.len()).fold(self.bias[j], |acc, i| acc + self.weights[(j, i)] * state[i])
            })
            .collect();
        self.bounds.clamp(&mut action);
        action
    }

    pub fn try_predict(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.state_dim() {
            return Err(Error::Dimension(format!(
                "subpolicy expects {} state features, got {}",
                self.state_dim(),
                state.len()
            )));
        }
        Ok(self.predict(state))
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct SubpolicyDocument {
    #[serde(rename = "W")]
    pub weights: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl From<&LinearSubpolicy> for SubpolicyDocument {
    fn from(p: &LinearSubpolicy) -> Self {
        SubpolicyDocument {
            weights: p
                .weights
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            b: p.bias.iter().copied().collect(),
        }
    }
}

impl SubpolicyDocument {
    pub fn into_subpolicy(self, state_dim: usize, bounds: ActionBounds) -> Result<LinearSubpolicy> {
        if self.weights.iter().any(|r| r.len() != state_dim) {
            return Err(Error::Dimension(format!(
                "subpolicy weight rows must have {state_dim} entries"
            )));
        }
        let rows = self.weights.len();
        let flat: Vec<f64> = self.weights.into_iter().flatten().collect();
        LinearSubpolicy::new(
            DMatrix::from_row_slice(rows, state_dim, &flat),
            DVector::from_vec(self.b),
            bounds,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve_ridge_with_intercept;
    use proptest::prelude::*;

    fn col(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(values.len(), 1, values)
    }

    fn bounds1() -> ActionBounds {
        ActionBounds::symmetric(1, 5.0)
    }

    #[test]
    fn exact_line_through_origin() {
        let s = col(&[-1.0, 0.5, 2.0]);
        let a = col(&[-2.0, 1.0, 4.0]);
        let p = LinearSubpolicy::fit(&s, &a, 0.0, bounds1()).unwrap();
        assert!((p.weights()[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(p.bias()[0].abs() < 1e-12);
    }

    #[test]
    fn single_row_is_interpolated() {
        let p = LinearSubpolicy::fit(&col(&[1.0]), &col(&[3.0]), 1e-6, bounds1()).unwrap();
        assert!((p.predict(&[1.0])[0] - 3.0).abs() < 1e-5);
    }

    #[test]
    fn predictions_are_clamped() {
        let p = LinearSubpolicy::new(col(&[2.0]), DVector::from_vec(vec![0.0]), bounds1()).unwrap();
        assert_eq!(p.predict(&[1.0]), vec![2.0]);
        assert_eq!(p.predict(&[10.0]), vec![5.0]);
    }

    #[test]
    fn constant_policy() {
        let p = LinearSubpolicy::new(DMatrix::zeros(1, 3), DVector::from_vec(vec![0.3]), bounds1()).unwrap();
        assert_eq!(p.predict(&[7.0, -2.0, 100.0]), vec![0.3]);
    }

    #[test]
    fn coefficients_are_the_ridge_solution() {
        let s = DMatrix::from_row_slice(4, 2, &[0.1, 0.2, -0.4, 1.0, 0.9, -0.3, 0.0, 0.5]);
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.5, -1.0, -0.2, 0.3, 0.7, 0.7]);
        let p = LinearSubpolicy::fit(&s, &a, 0.1, ActionBounds::symmetric(2, 5.0)).unwrap();
        let (w, b) = solve_ridge_with_intercept(&s, &a, 0.1).unwrap();
        assert_eq!(p.weights(), &w.transpose());
        assert_eq!(p.bias(), &b);
    }

    #[test]
    fn wrong_state_length_is_an_error() {
        let p = LinearSubpolicy::new(col(&[2.0]), DVector::from_vec(vec![0.0]), bounds1()).unwrap();
        assert!(p.try_predict(&[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn predictions_stay_in_bounds(
            w in prop::collection::vec(-100.0..100.0f64, 6),
            b in prop::collection::vec(-100.0..100.0f64, 2),
            s in prop::collection::vec(-1e3..1e3f64, 3),
        ) {
            let bounds = ActionBounds::new(vec![-1.0, 0.0], vec![1.0, 2.5]).unwrap();
            let p = LinearSubpolicy::new(DMatrix::from_row_slice(2, 3, &w), DVector::from_vec(b), bounds.clone()).unwrap();
            prop_assert!(bounds.contains(&p.predict(&s)));
        }
    }
}
