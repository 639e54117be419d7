//! Independent reference computations used by the integration suites.
//!
//! Nothing here calls into the solvers it is used to check.

#![allow(dead_code)]

/// Solves the dense system `a·x = rhs` by Gaussian elimination with partial
/// pivoting. `a` is row-major n×n.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for k in 0..n {
        let pivot = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        a.swap(k, pivot);
        rhs.swap(k, pivot);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            rhs[i] -= f * rhs[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let tail: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (rhs[k] - tail) / a[k][k];
    }
    x
}

/// `(XᵀX + diag(penalty))⁻¹ XᵀY` by forming the normal equations and
/// eliminating, one target column at a time. Rows are observations.
pub fn normal_equations(x: &[Vec<f64>], y: &[Vec<f64>], penalty: &[f64]) -> Vec<Vec<f64>> {
    let p = x[0].len();
    let q = y[0].len();
    let mut gram = vec![vec![0.0; p]; p];
    for row in x {
        for i in 0..p {
            for j in 0..p {
                gram[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        gram[i][i] += penalty[i];
    }
    let mut w = vec![vec![0.0; q]; p];
    for c in 0..q {
        let rhs: Vec<f64> = (0..p)
            .map(|i| x.iter().zip(y).map(|(r, t)| r[i] * t[c]).sum())
            .collect();
        let sol = gauss_solve(gram.clone(), rhs);
        for i in 0..p {
            w[i][c] = sol[i];
        }
    }
    w
}

/// Column means and population standard deviations (unit scale for
/// constant columns).
pub fn standardize(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len() as f64;
    let d = points[0].len();
    let mut out = points.to_vec();
    for j in 0..d {
        let mean = points.iter().map(|p| p[j]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for (o, p) in out.iter_mut().zip(points) {
            o[j] = (p[j] - mean) / sd;
        }
    }
    out
}

pub fn svm_objective(points: &[Vec<f64>], labels: &[bool], w: &[f64], b: f64, c: f64) -> f64 {
    let hinge: f64 = points
        .iter()
        .zip(labels)
        .map(|(x, l)| {
            let y = if *l { 1.0 } else { -1.0 };
            let m: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
            (1.0 - y * m).max(0.0)
        })
        .sum();
    0.5 * w.iter().map(|v| v * v).sum::<f64>() + c * hinge
}

/// Minimum of the soft-margin objective over a grid on `[-10, 10]^(d+1)`:
/// a coarse pass at `coarse` spacing, then a fine pass at `fine` spacing
/// within two coarse cells of the coarse winner. The objective is convex,
/// so the refinement cannot miss the global basin.
pub fn svm_grid_minimum(points: &[Vec<f64>], labels: &[bool], c: f64, coarse: f64, fine: f64) -> f64 {
    let d = points[0].len();
    let axis = |lo: f64, hi: f64, step: f64| -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|k| lo + k as f64 * step).collect()
    };
    let search = |ranges: &[(f64, f64)], step: f64| -> (f64, Vec<f64>) {
        let axes: Vec<Vec<f64>> = ranges.iter().map(|(lo, hi)| axis(*lo, *hi, step)).collect();
        let mut best = (f64::INFINITY, vec![0.0; d + 1]);
        let mut idx = vec![0usize; d + 1];
        loop {
            let params: Vec<f64> = idx.iter().zip(&axes).map(|(i, a)| a[*i]).collect();
            let v = svm_objective(points, labels, &params[..d], params[d], c);
            if v < best.0 {
                best = (v, params);
            }
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return best;
                }
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    };
    let (_, centre) = search(&vec![(-10.0, 10.0); d + 1], coarse);
    let ranges: Vec<(f64, f64)> = centre
        .iter()
        .map(|v| ((v - 2.0 * coarse).max(-10.0), (v + 2.0 * coarse).min(10.0)))
        .collect();
    search(&ranges, fine).0
}

/// Ridge fixtures `(X, Y, lambda)`; rows are observations.
pub fn ridge_fixtures() -> Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>, f64)> {
    vec![
        (vec![vec![1.0], vec![2.0]], vec![vec![2.0], vec![4.0]], 1.0),
        (vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]], vec![vec![1.0], vec![2.0], vec![3.5]], 0.0),
        (
            vec![vec![0.5, -1.0, 2.0], vec![1.5, 0.25, -0.5], vec![-2.0, 1.0, 0.0], vec![0.0, 3.0, 1.0]],
            vec![vec![1.0, -1.0], vec![0.0, 2.0], vec![3.0, 0.5], vec![-1.0, 1.0]],
            0.1,
        ),
        (
            vec![vec![1.0, 1.0], vec![1.0, 1.0 + 1e-3], vec![1.0, 1.0 - 1e-3], vec![1.0, 1.0]],
            vec![vec![2.0], vec![2.001], vec![1.999], vec![2.0]],
            1e-6,
        ),
        (
            (0..8).map(|i| vec![i as f64, (i * i) as f64 / 8.0, (i as f64).sin()]).collect(),
            (0..8).map(|i| vec![(i as f64).cos(), 2.0 - i as f64]).collect(),
            10.0,
        ),
    ]
}

/// Tiny soft-margin instances compared against the grid search.
pub fn svm_grid_cases() -> Vec<(Vec<Vec<f64>>, Vec<bool>)> {
    vec![
        (vec![vec![-2.0], vec![-1.0], vec![0.5], vec![1.0], vec![3.0]], vec![false, false, true, false, true]),
        (vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0], vec![5.0]], vec![false, true, false, true, true, true]),
        (
            vec![vec![0.0, 0.0], vec![1.0, 0.2], vec![0.3, 1.0], vec![1.2, 1.1], vec![0.9, 0.4], vec![0.1, 0.8]],
            vec![false, false, true, true, true, false],
        ),
    ]
}

/// Two seeded 2-D blobs, uniform in boxes one unit apart along x.
pub fn separable_blobs(per_class: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for k in 0..2 * per_class {
        let positive = k % 2 == 1;
        let x: f64 = rng.random_range(0.5..2.0);
        let y: f64 = rng.random_range(-1.0..1.0);
        points.push(vec![if positive { x } else { -x }, y]);
        labels.push(positive);
    }
    (points, labels)
}

/// Linearly separable instances.
pub fn separable_cases() -> Vec<(Vec<Vec<f64>>, Vec<bool>)> {
    vec![
        (vec![vec![-1.0], vec![1.0]], vec![false, true]),
        (vec![vec![-3.0], vec![-2.0], vec![-0.5], vec![0.5], vec![4.0]], vec![false, false, false, true, true]),
        (
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0], vec![3.0, 1.5], vec![1.5, 3.0]],
            vec![false, false, false, true, true, true],
        ),
        (
            vec![vec![1.0, 5.0], vec![2.0, -3.0], vec![1.5, 0.0], vec![-1.0, 4.0], vec![-2.0, -1.0], vec![-0.5, 0.0]],
            vec![true, true, true, false, false, false],
        ),
    ]
}

/// Largest Chebyshev distance, in cells, from a wrongly assigned cell to the
/// nearest cell on the other side of the true line. `assigned[i][j]` and
/// `truth[i][j]` give the side of cell `(i, j)`. 0 when nothing is wrong.
pub fn worst_boundary_miss(assigned: &[Vec<bool>], truth: &[Vec<bool>]) -> usize {
    let n = truth.len();
    let m = truth[0].len();
    let mut worst = 0;
    for i in 0..n {
        for j in 0..m {
            if assigned[i][j] == truth[i][j] {
                continue;
            }
            let side = truth[i][j];
            let mut r = 1;
            loop {
                let found = (i.saturating_sub(r)..=(i + r).min(n - 1))
                    .any(|a| (j.saturating_sub(r)..=(j + r).min(m - 1)).any(|b| truth[a][b] != side));
                if found || r > n + m {
                    break;
                }
                r += 1;
            }
            worst = worst.max(r);
        }
    }
    worst
}

/// Replaces the first halfspace of a generated task with `s[axis] > -cut`,
/// through the descriptor document.
pub fn with_axis_halfspace(task: &svsp::envs::PiecewiseTask, axis: usize, cut: f64) -> svsp::envs::PiecewiseTask {
    let mut doc: serde_json::Value = serde_json::from_str(&task.to_json()).unwrap();
    let d = task.state_dim();
    let normal: Vec<f64> = (0..d).map(|i| if i == axis { 1.0 } else { 0.0 }).collect();
    doc["halfspaces"][0] = serde_json::json!({"normal": normal, "offset": cut});
    svsp::envs::PiecewiseTask::from_json(&doc.to_string()).unwrap()
}
