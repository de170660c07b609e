//! Least squares over the capped simplex `Δ^q = {h >= 0, sum(h) <= 1}`.
//!
//! [`SimplexLeastSquares`] is the workhorse used by the extraction loop: it
//! holds one dictionary (column-major) together with its Lipschitz constant
//! and solves `min_h ||x - A h||_2` for many right-hand sides, optionally warm
//! started. The solver is an accelerated projected gradient method with
//! step `1/L` and gradient-based adaptive restart. The best iterate seen is
//! returned, so the result never has a larger objective than the starting
//! point.
//!
//! [`solve_nnls_delta_oracle`] enumerates active sets and is exact; it exists
//! to check the iterative solver on small instances.

use std::ops::Deref;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on `sum(h) <= 1` when checking feasibility.
pub const FEASIBILITY_EPS: f64 = 1e-9;

/// Largest dictionary the exact oracle accepts.
pub const ORACLE_MAX_COLUMNS: usize = 12;

const POWER_ITERATIONS: usize = 50;
const POWER_TOL: f64 = 1e-10;
// Power iteration approaches the top eigenvalue from below.
const LIPSCHITZ_MARGIN: f64 = 1.0 + 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once `||h_k - h_{k-1}|| <= rel_tol * ||h_k||`.
    pub rel_tol: f64,
    /// Gradient-based adaptive restart of the momentum sequence.
    pub restart: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 500,
            rel_tol: 1e-9,
            restart: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Config("solver.max_iters must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0) || !self.rel_tol.is_finite() {
            return Err(Error::Config("solver.rel_tol must be a finite value > 0".into()));
        }
        Ok(())
    }
}

/// A coefficient vector in `Δ^q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::input("simplex vector has a negative or NaN entry"));
        }
        let sum: f64 = h.iter().sum();
        if sum > 1.0 + FEASIBILITY_EPS {
            return Err(Error::input(format!("simplex vector sums to {sum} > 1")));
        }
        Ok(SimplexVector(h))
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn to_array(&self) -> Array1<f64> {
        Array1::from(self.0.clone())
    }
}

impl Deref for SimplexVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Euclidean projection of `v` onto `Δ^q`.
pub fn project_to_delta(v: &[f64]) -> SimplexVector {
    let mut u = v.to_vec();
    let mut scratch = Vec::with_capacity(u.len());
    project_in_place(&mut u, &mut scratch);
    SimplexVector(u)
}

/// Clip at zero; if the clipped vector sums past one, fall back to the
/// sort-and-threshold projection onto the unit simplex.
pub(crate) fn project_in_place(v: &mut [f64], scratch: &mut Vec<f64>) {
    let mut sum = 0.0;
    for x in v.iter_mut() {
        if !(*x > 0.0) {
            *x = 0.0;
        }
        sum += *x;
    }
    if sum <= 1.0 {
        return;
    }
    scratch.clear();
    scratch.extend(v.iter().copied().filter(|&x| x > 0.0));
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in scratch.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Output of one [`SimplexLeastSquares::solve`] call.
#[derive(Debug, Clone)]
pub struct DeltaSolution {
    pub h: Vec<f64>,
    /// `x - A h`
    pub residual: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// A dictionary prepared for repeated simplex-constrained least squares.
#[derive(Debug, Clone)]
pub struct SimplexLeastSquares {
    rows: usize,
    cols: usize,
    // column-major, rows * cols
    data: Vec<f64>,
    lipschitz: f64,
    config: SolverConfig,
}

impl SimplexLeastSquares {
    /// `data` holds `cols` contiguous columns of length `rows`.
    pub fn from_columns(rows: usize, data: Vec<f64>, config: SolverConfig) -> Result<Self> {
        if rows == 0 {
            return Err(Error::input("dictionary has no rows"));
        }
        if data.len() % rows != 0 {
            return Err(Error::input("column buffer length is not a multiple of the row count"));
        }
        let cols = data.len() / rows;
        if cols == 0 {
            return Err(Error::input("dictionary has no columns"));
        }
        config.validate()?;
        let mut out = SimplexLeastSquares {
            rows,
            cols,
            data,
            lipschitz: 0.0,
            config,
        };
        out.lipschitz = out.estimate_lipschitz();
        Ok(out)
    }

    pub fn from_matrix(a: ArrayView2<f64>, config: SolverConfig) -> Result<Self> {
        let (rows, cols) = a.dim();
        let mut data = Vec::with_capacity(rows * cols);
        for c in a.columns() {
            data.extend(c.iter().copied());
        }
        Self::from_columns(rows, data, config)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    fn column(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    fn apply(&self, h: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (c, &hc) in h.iter().enumerate() {
            if hc != 0.0 {
                for (o, &a) in out.iter_mut().zip(self.column(c)) {
                    *o += hc * a;
                }
            }
        }
    }

    fn apply_transpose(&self, v: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = dot(self.column(c), v);
        }
    }

    /// Largest eigenvalue of `AᵀA` by power iteration.
    fn estimate_lipschitz(&self) -> f64 {
        let q = self.cols;
        let mut v = vec![1.0 / (q as f64).sqrt(); q];
        let mut av = vec![0.0; self.rows];
        let mut w = vec![0.0; q];
        let mut lambda = 0.0;
        for _ in 0..POWER_ITERATIONS {
            self.apply(&v, &mut av);
            self.apply_transpose(&av, &mut w);
            let next = norm(&w);
            if next == 0.0 {
                return 0.0;
            }
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / next;
            }
            let done = (next - lambda).abs() <= POWER_TOL * next;
            lambda = next;
            if done {
                break;
            }
        }
        lambda * LIPSCHITZ_MARGIN
    }

    /// Solves `min_{h in Δ} ||x - A h||_2`, starting from `warm` (projected
    /// onto `Δ` first) or from the origin.
    pub fn solve(&self, x: &[f64], warm: Option<&[f64]>) -> Result<DeltaSolution> {
        if x.len() != self.rows {
            return Err(Error::input(format!(
                "right-hand side has length {}, dictionary has {} rows",
                x.len(),
                self.rows
            )));
        }
        let q = self.cols;
        let mut scratch = Vec::with_capacity(q);

        let mut h = match warm {
            Some(w) if w.len() == q => w.to_vec(),
            Some(w) => {
                return Err(Error::input(format!(
                    "warm start has length {}, dictionary has {} columns",
                    w.len(),
                    q
                )))
            }
            None => vec![0.0; q],
        };
        project_in_place(&mut h, &mut scratch);

        let mut ah = vec![0.0; self.rows];
        self.apply(&h, &mut ah);
        let mut best_h = h.clone();
        let mut best_ah = ah.clone();
        let mut best_f = half_sq_dist(&ah, x);
        let mut iterations = 0;

        if self.lipschitz > 0.0 && best_f > 0.0 {
            let step = 1.0 / self.lipschitz;
            let mut y = h.clone();
            let mut ay = ah.clone();
            let mut t = 1.0_f64;
            let mut diff = vec![0.0; self.rows];
            let mut grad = vec![0.0; q];
            let mut h_next = vec![0.0; q];
            let mut ah_next = vec![0.0; self.rows];

            for it in 0..self.config.max_iters {
                iterations = it + 1;
                for ((d, &a), &b) in diff.iter_mut().zip(&ay).zip(x) {
                    *d = a - b;
                }
                self.apply_transpose(&diff, &mut grad);
                for ((hn, &yc), &g) in h_next.iter_mut().zip(&y).zip(&grad) {
                    *hn = yc - step * g;
                }
                project_in_place(&mut h_next, &mut scratch);
                self.apply(&h_next, &mut ah_next);

                let f_next = half_sq_dist(&ah_next, x);
                if f_next < best_f {
                    best_f = f_next;
                    best_h.copy_from_slice(&h_next);
                    best_ah.copy_from_slice(&ah_next);
                }

                let mut change = 0.0;
                let mut step_len = 0.0;
                let mut restart_score = 0.0;
                for ((&hn, &hc), &yc) in h_next.iter().zip(&h).zip(&y) {
                    change += (hn - hc) * (hn - hc);
                    step_len += (yc - hn) * (yc - hn);
                    restart_score += (yc - hn) * (hn - hc);
                }
                // a momentum step can be projected back onto the previous
                // vertex, so the gradient step from y must vanish as well
                let tol = self.config.rel_tol * norm(&h_next);
                let converged = change.sqrt() <= tol && step_len.sqrt() <= tol;

                let beta = if self.config.restart && restart_score > 0.0 {
                    t = 1.0;
                    0.0
                } else {
                    let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                    let beta = (t - 1.0) / t_next;
                    t = t_next;
                    beta
                };
                for ((yc, &hn), &hc) in y.iter_mut().zip(&h_next).zip(&h) {
                    *yc = hn + beta * (hn - hc);
                }
                for ((ayc, &an), &ac) in ay.iter_mut().zip(&ah_next).zip(&ah) {
                    *ayc = an + beta * (an - ac);
                }
                std::mem::swap(&mut h, &mut h_next);
                std::mem::swap(&mut ah, &mut ah_next);

                if converged || best_f == 0.0 {
                    break;
                }
            }
        }

        let residual: Vec<f64> = x.iter().zip(&best_ah).map(|(a, b)| a - b).collect();
        let residual_norm = norm(&residual);
        Ok(DeltaSolution {
            h: best_h,
            residual,
            residual_norm,
            iterations,
        })
    }
}

/// One-shot simplex-constrained least squares: returns `h` and `x - A h`.
pub fn solve_nnls_delta(
    a: ArrayView2<f64>,
    x: ArrayView1<f64>,
    config: &SolverConfig,
) -> Result<(SimplexVector, Array1<f64>)> {
    if a.nrows() != x.len() {
        return Err(Error::input(format!(
            "dictionary has {} rows but x has length {}",
            a.nrows(),
            x.len()
        )));
    }
    if a.ncols() == 0 {
        return Err(Error::input("dictionary has no columns"));
    }
    let solver = SimplexLeastSquares::from_matrix(a, *config)?;
    let x: Vec<f64> = x.iter().copied().collect();
    let sol = solver.solve(&x, None)?;
    Ok((SimplexVector(sol.h), Array1::from(sol.residual)))
}

/// Exact minimiser of `||x - A h||_2` over `Δ^q` by active-set enumeration.
///
/// Every support set is tried twice, once with the sum constraint inactive
/// (least squares on the support) and once with it active (one coefficient
/// eliminated through `sum(h) = 1`). Rank-deficient supports are skipped; the feasible
/// candidate with the smallest objective wins, ties going to the smaller
/// `||h||_2`.
pub fn solve_nnls_delta_oracle(a: ArrayView2<f64>, x: ArrayView1<f64>) -> Result<SimplexVector> {
    let (m, q) = a.dim();
    if x.len() != m {
        return Err(Error::input(format!(
            "dictionary has {m} rows but x has length {}",
            x.len()
        )));
    }
    if q > ORACLE_MAX_COLUMNS {
        return Err(Error::Capability(format!(
            "oracle enumerates 2^q active sets; q = {q} exceeds {ORACLE_MAX_COLUMNS}"
        )));
    }
    let columns: Vec<Vec<f64>> = a.columns().into_iter().map(|c| c.to_vec()).collect();
    let target: Vec<f64> = x.to_vec();

    let objective = |h: &[f64]| -> f64 {
        let fit = a.dot(&ArrayView1::from(h));
        fit.iter().zip(x.iter()).map(|(f, v)| (v - f) * (v - f)).sum()
    };

    let mut best = vec![0.0; q];
    let mut best_f = objective(&best);
    let mut best_norm = 0.0;
    let feas_tol = 1e-12;
    let tie_tol = 64.0 * f64::EPSILON * target.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);

    let consider = |h: Vec<f64>, best: &mut Vec<f64>, best_f: &mut f64, best_norm: &mut f64| {
        let f = objective(&h);
        let n = norm(&h);
        let tie = (f - *best_f).abs() <= tie_tol;
        if (!tie && f < *best_f) || (tie && n < *best_norm) {
            *best_f = f;
            *best_norm = n;
            *best = h;
        }
    };

    for mask in 1u32..(1u32 << q) {
        let support: Vec<usize> = (0..q).filter(|i| mask & (1 << i) != 0).collect();
        let s = support.len();

        let free: Vec<&[f64]> = support.iter().map(|&i| columns[i].as_slice()).collect();
        if let Some(hs) = least_squares(&free, &target) {
            let sum: f64 = hs.iter().sum();
            if hs.iter().all(|&v| v >= -feas_tol) && sum <= 1.0 + feas_tol {
                consider(scatter(&support, &hs, q), &mut best, &mut best_f, &mut best_norm);
            }
        }

        // sum(h) = 1: substitute h_last = 1 - sum(others) and solve for the others
        let last = columns[support[s - 1]].as_slice();
        let shifted: Vec<f64> = target.iter().zip(last).map(|(t, l)| t - l).collect();
        let diffs: Vec<Vec<f64>> = support[..s - 1]
            .iter()
            .map(|&i| columns[i].iter().zip(last).map(|(c, l)| c - l).collect())
            .collect();
        let refs: Vec<&[f64]> = diffs.iter().map(Vec::as_slice).collect();
        if let Some(mut hs) = least_squares(&refs, &shifted) {
            let rest: f64 = hs.iter().sum();
            hs.push(1.0 - rest);
            if hs.iter().all(|&v| v >= -feas_tol) {
                consider(scatter(&support, &hs, q), &mut best, &mut best_f, &mut best_norm);
            }
        }
    }

    best.iter_mut().for_each(|v| *v = v.max(0.0));
    let sum: f64 = best.iter().sum();
    if sum > 1.0 {
        best.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(SimplexVector(best))
}

/// Largest violation of the KKT conditions of `min ||x - A h||² / 2` over
/// `Δ` at `h`. The multiplier of the sum constraint is estimated from the
/// support when the constraint is (nearly) active.
pub fn kkt_residual(a: ArrayView2<f64>, x: ArrayView1<f64>, h: &[f64]) -> f64 {
    let hv = ArrayView1::from(h);
    let g = a.t().dot(&(a.dot(&hv) - x));
    let sum: f64 = h.iter().sum();
    let support: Vec<usize> = (0..h.len()).filter(|&i| h[i] > 0.0).collect();
    let mu = if sum >= 1.0 - FEASIBILITY_EPS && !support.is_empty() {
        (-support.iter().map(|&i| g[i]).sum::<f64>() / support.len() as f64).max(0.0)
    } else {
        0.0
    };
    let mut worst = (mu * (1.0 - sum)).abs();
    for (i, &gi) in g.iter().enumerate() {
        let v = gi + mu;
        worst = worst.max((-v).max(0.0));
        if h[i] > 0.0 {
            worst = worst.max(v.abs());
        }
    }
    worst
}

fn scatter(support: &[usize], values: &[f64], q: usize) -> Vec<f64> {
    let mut h = vec![0.0; q];
    for (&i, &v) in support.iter().zip(values) {
        h[i] = v.max(0.0);
    }
    h
}

/// Unconstrained least squares `min ||A z - b||` by Householder QR on the
/// given columns. `None` when the columns are numerically dependent
/// (a diagonal entry of R below `1e-12` times the largest column norm).
fn least_squares(columns: &[&[f64]], b: &[f64]) -> Option<Vec<f64>> {
    let s = columns.len();
    let m = b.len();
    if s == 0 {
        return Some(Vec::new());
    }
    if s > m {
        return None;
    }
    let scale = columns.iter().map(|c| norm(c)).fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return None;
    }
    let mut r: Vec<Vec<f64>> = columns.iter().map(|c| c.to_vec()).collect();
    let mut rhs = b.to_vec();
    for k in 0..s {
        let alpha = norm(&r[k][k..]);
        if alpha <= 1e-12 * scale {
            return None;
        }
        let alpha = if r[k][k] > 0.0 { -alpha } else { alpha };
        let mut v = r[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 == 0.0 {
            continue;
        }
        for col in r.iter_mut().skip(k) {
            let f = 2.0 * dot(&v, &col[k..]) / vnorm2;
            col[k..].iter_mut().zip(&v).for_each(|(c, vi)| *c -= f * vi);
        }
        let f = 2.0 * dot(&v, &rhs[k..]) / vnorm2;
        rhs[k..].iter_mut().zip(&v).for_each(|(c, vi)| *c -= f * vi);
    }
    let mut z = vec![0.0; s];
    for k in (0..s).rev() {
        let mut acc = rhs[k];
        for j in k + 1..s {
            acc -= r[j][k] * z[j];
        }
        z[k] = acc / r[k][k];
    }
    Some(z)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn half_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn objective(a: &Array2<f64>, x: &Array1<f64>, h: &[f64]) -> f64 {
        let r = x - &a.dot(&ArrayView1::from(h));
        r.dot(&r)
    }

    #[test]
    fn projection_keeps_feasible_point() {
        let u = project_to_delta(&[0.5, 0.3]);
        assert_abs_diff_eq!(u[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(u[1], 0.3, epsilon = 1e-15);
    }

    #[test]
    fn projection_shifts_and_clips() {
        let u = project_to_delta(&[1.5, 0.5]);
        assert_abs_diff_eq!(u[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn projection_clips_negatives_only_when_sum_small() {
        let u = project_to_delta(&[-1.0, 0.25, 0.5]);
        assert_eq!(&*u, &[0.0, 0.25, 0.5]);
    }

    #[test]
    fn identity_interior_solution() {
        let a = Array2::<f64>::eye(2);
        let (h, r) = solve_nnls_delta(a.view(), array![0.3, 0.4].view(), &SolverConfig::default()).unwrap();
        assert_abs_diff_eq!(h[0], 0.3, epsilon = 1e-10);
        assert_abs_diff_eq!(h[1], 0.4, epsilon = 1e-10);
        assert!(r.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn identity_projects_onto_simplex() {
        let a = Array2::<f64>::eye(2);
        let (h, _) = solve_nnls_delta(a.view(), array![0.8, 0.8].view(), &SolverConfig::default()).unwrap();
        assert_abs_diff_eq!(h[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(h[1], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = Array2::<f64>::eye(2);
        let err = solve_nnls_delta(a.view(), array![1.0, 2.0, 3.0].view(), &SolverConfig::default());
        assert!(matches!(err, Err(Error::Input(_))));
        let empty = Array2::<f64>::zeros((2, 0));
        assert!(solve_nnls_delta(empty.view(), array![1.0, 2.0].view(), &SolverConfig::default()).is_err());
    }

    #[test]
    fn oracle_origin_when_target_negative() {
        let a = Array2::<f64>::eye(2);
        let h = solve_nnls_delta_oracle(a.view(), array![-1.0, -1.0].view()).unwrap();
        assert_eq!(&*h, &[0.0, 0.0]);
    }

    #[test]
    fn oracle_sum_constraint_active() {
        let a = array![[1.0], [0.0]];
        let h = solve_nnls_delta_oracle(a.view(), array![2.0, 0.0].view()).unwrap();
        assert_abs_diff_eq!(h[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn oracle_rejects_large_dictionary() {
        let a = Array2::<f64>::ones((3, ORACLE_MAX_COLUMNS + 1));
        let err = solve_nnls_delta_oracle(a.view(), array![1.0, 1.0, 1.0].view());
        assert!(matches!(err, Err(Error::Capability(_))));
    }

    #[test]
    fn zero_dictionary_returns_origin() {
        let a = Array2::<f64>::zeros((3, 2));
        let (h, r) = solve_nnls_delta(a.view(), array![1.0, 2.0, 3.0].view(), &SolverConfig::default()).unwrap();
        assert_eq!(&*h, &[0.0, 0.0]);
        assert_eq!(r.to_vec(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn warm_start_never_worsens_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Array2::from_shape_fn((6, 4), |_| rng.random::<f64>());
        let x: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
        let warm = [0.1, 0.2, 0.3, 0.1];
        let tight = SolverConfig { max_iters: 1, ..Default::default() };
        let solver = SimplexLeastSquares::from_matrix(a.view(), tight).unwrap();
        let sol = solver.solve(&x, Some(&warm)).unwrap();
        let start = objective(&a, &Array1::from(x.clone()), &warm);
        assert!(sol.residual_norm * sol.residual_norm <= start + 1e-15);
    }

    #[test]
    fn matches_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let m = rng.random_range(1..=8);
            let q = rng.random_range(1..=5);
            let a = Array2::from_shape_fn((m, q), |_| rng.random::<f64>());
            let x = Array1::from_shape_fn(m, |_| rng.random::<f64>());
            let (h, _) = solve_nnls_delta(a.view(), x.view(), &SolverConfig::default()).unwrap();
            let exact = solve_nnls_delta_oracle(a.view(), x.view()).unwrap();
            let gap = objective(&a, &x, &h) - objective(&a, &x, &exact);
            assert!(gap.abs() <= 1e-8, "gap {gap}");
        }
    }

    #[test]
    fn lipschitz_matches_top_eigenvalue_of_diagonal() {
        let a = array![[3.0, 0.0], [0.0, 1.0]];
        let solver = SimplexLeastSquares::from_matrix(a.view(), SolverConfig::default()).unwrap();
        assert!((solver.lipschitz() / 9.0 - 1.0).abs() < 2e-3);
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(v in proptest::collection::vec(-3.0f64..3.0, 1..12)) {
            let once = project_to_delta(&v);
            let twice = project_to_delta(&once);
            for (a, b) in once.iter().zip(twice.iter()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn projection_output_is_feasible(v in proptest::collection::vec(-3.0f64..3.0, 1..12)) {
            let u = project_to_delta(&v);
            prop_assert!(SimplexVector::new(u.to_vec()).is_ok());
        }

        #[test]
        fn solver_output_satisfies_kkt(
            seed in any::<u64>(),
            m in 1usize..8,
            q in 1usize..6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Array2::from_shape_fn((m, q), |_| rng.random::<f64>());
            let x = Array1::from_shape_fn(m, |_| rng.random::<f64>() * 2.0 - 0.5);
            let cfg = SolverConfig { max_iters: 20_000, rel_tol: 1e-13, restart: true };
            let (h, _) = solve_nnls_delta(a.view(), x.view(), &cfg).unwrap();
            prop_assert!(SimplexVector::new(h.to_vec()).is_ok());
            // only meaningful when the problem has a unique-ish optimum; use the objective gap as fallback
            let tol = 1e-6 * a.t().dot(&x).iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-12);
            let exact = solve_nnls_delta_oracle(a.view(), x.view()).unwrap();
            let gap = objective(&a, &x, &h) - objective(&a, &x, &exact);
            prop_assert!(kkt_residual(a.view(), x.view(), &h) <= tol || gap.abs() <= 1e-12);
        }

        #[test]
        fn extra_columns_never_hurt(seed in any::<u64>(), m in 1usize..7, q in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Array2::from_shape_fn((m, q + 1), |_| rng.random::<f64>());
            let x = Array1::from_shape_fn(m, |_| rng.random::<f64>());
            let small = a.slice(ndarray::s![.., ..q]).to_owned();
            let h_small = solve_nnls_delta_oracle(small.view(), x.view()).unwrap();
            let h_big = solve_nnls_delta_oracle(a.view(), x.view()).unwrap();
            prop_assert!(objective(&a, &x, &h_big) <= objective(&small, &x, &h_small) + 1e-12);
        }
    }
}
