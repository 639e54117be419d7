//! Binary soft-margin linear SVM trained in the primal.
//!
//! The objective, on standardised features `x`, is
//!
//! ```text
//! F(w, b) = ½‖w‖² + c · Σᵢ max(0, 1 − yᵢ(w·xᵢ + b)),   yᵢ ∈ {−1, +1}
//! ```
//!
//! It is minimised by a stochastic subgradient schedule (Pegasos step sizes
//! on `F / (c·n)`) over indices reshuffled every epoch from a seeded
//! generator. The offset is left unregularised; after the schedule it is
//! set to its exact minimiser for the final weight vector.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::RegionLabels;
use crate::error::{Error, Result};

/// Per-feature affine standardisation `(x − mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn new(mean: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if mean.len() != scale.len() {
            return Err(Error::Dimension("standardizer mean/scale lengths differ".into()));
        }
        if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Numeric("standardizer scales must be finite and positive".into()));
        }
        Ok(Standardizer { mean, scale })
    }

    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Column means and population standard deviations; constant columns
    /// get scale 1.
    pub fn fit(states: &DMatrix<f64>) -> Self {
        let n = states.nrows() as f64;
        let mut mean = Vec::with_capacity(states.ncols());
        let mut scale = Vec::with_capacity(states.ncols());
        for column in states.column_iter() {
            let m = column.iter().sum::<f64>() / n;
            let var = column.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let sd = var.sqrt();
            mean.push(m);
            scale.push(if sd > 0.0 && sd.is_finite() { sd } else { 1.0 });
        }
        Standardizer { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, state: &[f64]) -> Vec<f64> {
        state
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }
}

/// Halfspace gate: answers 1 ("serve here") iff `w·standardize(s) + b > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmGate {
    weights: Vec<f64>,
    bias: f64,
    standardizer: Standardizer,
}

impl SvmGate {
    pub fn new(weights: Vec<f64>, bias: f64, standardizer: Standardizer) -> Result<Self> {
        if weights.len() != standardizer.dim() {
            return Err(Error::Dimension(format!(
                "gate has {} weights but standardizer has {} features",
                weights.len(),
                standardizer.dim()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
            return Err(Error::Numeric("gate coefficients are not finite".into()));
        }
        Standardizer::new(standardizer.mean.clone(), standardizer.scale.clone())?;
        Ok(SvmGate {
            weights,
            bias,
            standardizer,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn state_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn decision_value(&self, state: &[f64]) -> f64 {
        assert_eq!(state.len(), self.state_dim(), "state length");
        state
            .iter()
            .zip(&self.weights)
            .zip(self.standardizer.mean.iter().zip(&self.standardizer.scale))
            .fold(self.bias, |acc, ((x, w), (m, s))| acc + w * ((x - m) / s))
    }

    /// Ties (decision value exactly zero) answer false.
    pub fn predict(&self, state: &[f64]) -> bool {
        self.decision_value(state) > 0.0
    }

    /// The same hyperplane in raw state units: `w_raw·s + b_raw`.
    pub fn raw_hyperplane(&self) -> (Vec<f64>, f64) {
        let w_raw: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.standardizer.scale)
            .map(|(w, s)| w / s)
            .collect();
        let b_raw = self.bias
            - w_raw
                .iter()
                .zip(&self.standardizer.mean)
                .map(|(w, m)| w * m)
                .sum::<f64>();
        (w_raw, b_raw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            epochs: 200,
            seed: 0,
        }
    }
}

/// Primal objective `½‖w‖² + c·Σ hinge` on already-standardised rows.
pub fn primal_objective(rows: &[Vec<f64>], targets: &[f64], weights: &[f64], bias: f64, c: f64) -> f64 {
    let hinge: f64 = rows
        .iter()
        .zip(targets)
        .map(|(x, y)| (1.0 - y * (dot(weights, x) + bias)).max(0.0))
        .sum();
    0.5 * dot(weights, weights) + c * hinge
}

/// Fits a gate separating label-1 rows from label-0 rows of `states`.
pub fn fit_svm(states: &DMatrix<f64>, labels: &RegionLabels, params: SvmParams) -> Result<SvmGate> {
    let n = states.nrows();
    if labels.len() != n {
        return Err(Error::Dimension(format!("{n} states but {} labels", labels.len())));
    }
    if labels.positive_count() == 0 || labels.negative_count() == 0 {
        return Err(Error::Config(
            "SVM split needs at least one positive and one negative label".into(),
        ));
    }
    if !(params.c.is_finite() && params.c > 0.0) {
        return Err(Error::Config(format!("SVM c must be positive, got {}", params.c)));
    }
    if params.epochs == 0 {
        return Err(Error::Config("SVM epochs must be at least 1".into()));
    }

    let standardizer = Standardizer::fit(states);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let raw: Vec<f64> = states.row(i).iter().copied().collect();
            standardizer.apply(&raw)
        })
        .collect();
    let targets: Vec<f64> = labels.iter().map(|l| if l { 1.0 } else { -1.0 }).collect();

    let (weights, bias) = solve_primal(&rows, &targets, params);
    SvmGate::new(weights, bias, standardizer)
}

const MIN_UPDATES: usize = 50_000;

/// Runs the seeded subgradient schedule and returns the better of the last
/// and the tail-averaged iterate, each with its offset re-optimised.
pub(crate) fn solve_primal(rows: &[Vec<f64>], targets: &[f64], params: SvmParams) -> (Vec<f64>, f64) {
    let n = rows.len();
    let dim = rows[0].len();
    let lambda = 1.0 / (params.c * n as f64);
    // ‖w*‖ ≤ 1/√λ, and then |b*| ≤ 1 + ‖w*‖·max‖x‖.
    let radius = lambda.sqrt().recip();
    let max_norm = rows.iter().map(|x| dot(x, x).sqrt()).fold(0.0, f64::max);
    let bias_limit = 1.0 + radius * max_norm;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut w_avg = vec![0.0; dim];
    let mut b_avg = 0.0;
    let mut averaged = 0usize;
    // Small regions get extra epochs so every fit takes at least
    // MIN_UPDATES steps; large regions follow `params.epochs` exactly.
    let epochs = params.epochs.max(MIN_UPDATES.div_ceil(n));
    let average_from = epochs / 2;
    let mut t = 0usize;

    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let x = &rows[i];
            let y = targets[i];
            let margin = y * (dot(&w, x) + b);
            let shrink = 1.0 - eta * lambda;
            for wj in w.iter_mut() {
                *wj *= shrink;
            }
            if margin < 1.0 {
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj += eta * y * xj;
                }
                b += eta * y;
            }
            let norm = dot(&w, &w).sqrt();
            if norm > radius {
                let s = radius / norm;
                for wj in w.iter_mut() {
                    *wj *= s;
                }
            }
            b = b.clamp(-bias_limit, bias_limit);
        }
        if epoch >= average_from {
            averaged += 1;
            let k = averaged as f64;
            for (a, wj) in w_avg.iter_mut().zip(&w) {
                *a += (wj - *a) / k;
            }
            b_avg += (b - b_avg) / k;
        }
    }

    let candidates = [(w, b), (w_avg, b_avg)];
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    for (cw, cb) in candidates {
        let margins: Vec<f64> = rows.iter().map(|x| dot(&cw, x)).collect();
        let ob = optimal_bias(&margins, targets).unwrap_or(cb);
        let value = primal_objective(rows, targets, &cw, ob, params.c);
        if best.as_ref().is_none_or(|(v, _, _)| value < *v) {
            best = Some((value, cw, ob));
        }
    }
    let (_, w, b) = best.expect("two candidates");
    (w, b)
}

/// Exact minimiser over `b` of `Σ max(0, 1 − yᵢ(mᵢ + b))`.
///
/// The sum is convex and piecewise linear with a kink at `yᵢ − mᵢ` for every
/// row. When the minimum is attained on a whole interval its midpoint is
/// returned.
pub(crate) fn optimal_bias(margins: &[f64], targets: &[f64]) -> Option<f64> {
    // Positive rows contribute slope −1 left of their kink, negative rows +1
    // right of theirs.
    let mut positive: Vec<f64> = Vec::new();
    let mut negative: Vec<f64> = Vec::new();
    for (m, y) in margins.iter().zip(targets) {
        if *y > 0.0 {
            positive.push(1.0 - m);
        } else {
            negative.push(-1.0 - m);
        }
    }
    if positive.is_empty() || negative.is_empty() {
        return None;
    }
    positive.sort_by(f64::total_cmp);
    negative.sort_by(f64::total_cmp);
    let mut kinks: Vec<f64> = positive.iter().chain(&negative).copied().collect();
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();

    // Right derivative at b: −#{p > b} + #{q ≤ b}.
    let right_slope = |b: f64| -> i64 {
        let above = positive.len() - positive.partition_point(|p| *p <= b);
        let at_or_below = negative.partition_point(|q| *q <= b);
        at_or_below as i64 - above as i64
    };
    for (k, &b) in kinks.iter().enumerate() {
        let slope = right_slope(b);
        if slope > 0 {
            return Some(b);
        }
        if slope == 0 {
            return Some(match kinks.get(k + 1) {
                Some(next) => 0.5 * (b + next),
                None => b,
            });
        }
    }
    kinks.last().copied()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Serialize, Deserialize)]
pub(crate) struct GateDocument {
    pub w: Vec<f64>,
    pub b: f64,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl From<&SvmGate> for GateDocument {
    fn from(g: &SvmGate) -> Self {
        GateDocument {
            w: g.weights.clone(),
            b: g.bias,
            mean: g.standardizer.mean.clone(),
            scale: g.standardizer.scale.clone(),
        }
    }
}

impl GateDocument {
    pub fn into_gate(self) -> Result<SvmGate> {
        SvmGate::new(self.w, self.b, Standardizer::new(self.mean, self.scale)?)
    }
}
