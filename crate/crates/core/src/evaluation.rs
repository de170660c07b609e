//! Separation quality and the Monte-Carlo benchmark.
//!
//! θ compares the true endmembers `W` with the extracted columns `X_K`. Both
//! are normalised to unit length, so each entry of `Ŵᵀ X̂_K` is a cosine
//! similarity, and the extracted columns are matched to the true ones by the
//! permutation that maximises the smallest matched similarity. θ is that
//! smallest similarity; a separation counts as perfect when θ > 0.999.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{extract, Algorithm};
use crate::lq_model::{generate_scene_with, EndmemberSet, SceneParams};
use crate::simplex_solver::SolverConfig;

/// θ must exceed this for a separation to count as perfect.
pub const PERFECT_THRESHOLD: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationScore {
    pub theta: f64,
    /// Similarity of each true endmember with its matched extracted column.
    pub per_endmember: Vec<f64>,
    /// `matching[i]` is the extracted column assigned to endmember `i`.
    pub matching: Vec<usize>,
}

pub fn theta_metric(w: ArrayView2<f64>, extracted: ArrayView2<f64>) -> Result<SeparationScore> {
    if w.dim() != extracted.dim() {
        return Err(Error::input(format!(
            "endmember matrix is {:?} but extracted matrix is {:?}",
            w.dim(),
            extracted.dim()
        )));
    }
    if w.ncols() == 0 {
        return Err(Error::input("no columns to compare"));
    }
    let w_hat = unit_columns(w, "endmember")?;
    let x_hat = unit_columns(extracted, "extracted")?;
    let similarity = w_hat.t().dot(&x_hat);
    let matching = bottleneck_assignment(&similarity);
    let per_endmember: Vec<f64> = matching
        .iter()
        .enumerate()
        .map(|(i, &j)| similarity[[i, j]].clamp(-1.0, 1.0))
        .collect();
    let theta = per_endmember.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SeparationScore {
        theta,
        per_endmember,
        matching,
    })
}

pub fn is_perfect(score: &SeparationScore) -> bool {
    score.theta > PERFECT_THRESHOLD
}

fn unit_columns(a: ArrayView2<f64>, what: &str) -> Result<Array2<f64>> {
    let mut out = a.to_owned();
    for (k, mut col) in out.columns_mut().into_iter().enumerate() {
        let n = col.dot(&col).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::input(format!("{what} column {} cannot be normalised", k + 1)));
        }
        col /= n;
    }
    Ok(out)
}

/// Permutation maximising the minimum matched entry of a square matrix.
///
/// Binary search over the sorted distinct entries for the largest threshold
/// that still admits a perfect matching on entries `>=` it. Exact for any
/// size; matching uses augmenting paths with rows and columns visited in
/// index order, so the result is deterministic.
fn bottleneck_assignment(s: &Array2<f64>) -> Vec<usize> {
    let r = s.nrows();
    let mut values: Vec<f64> = s.iter().copied().collect();
    values.sort_by(|a, b| a.total_cmp(b));
    values.dedup();

    // the smallest entry always admits a perfect matching (complete graph)
    let (mut lo, mut hi) = (0, values.len() - 1);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if perfect_matching(s, values[mid]).is_some() {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let matching = perfect_matching(s, values[lo]).expect("threshold admits a matching");
    debug_assert_eq!(matching.len(), r);
    matching
}

fn perfect_matching(s: &Array2<f64>, threshold: f64) -> Option<Vec<usize>> {
    let r = s.nrows();
    let mut col_owner: Vec<Option<usize>> = vec![None; r];

    fn augment(
        row: usize,
        s: &Array2<f64>,
        threshold: f64,
        seen: &mut [bool],
        col_owner: &mut [Option<usize>],
    ) -> bool {
        for col in 0..s.ncols() {
            if s[[row, col]] < threshold || seen[col] {
                continue;
            }
            seen[col] = true;
            let free = match col_owner[col] {
                None => true,
                Some(other) => augment(other, s, threshold, seen, col_owner),
            };
            if free {
                col_owner[col] = Some(row);
                return true;
            }
        }
        false
    }

    for row in 0..r {
        let mut seen = vec![false; r];
        if !augment(row, s, threshold, &mut seen, &mut col_owner) {
            return None;
        }
    }
    let mut matching = vec![0; r];
    for (col, owner) in col_owner.iter().enumerate() {
        matching[owner.expect("perfect matching covers every column")] = col;
    }
    Some(matching)
}

/// Everything [`run_benchmark`] needs besides the spectral pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub algorithms: Vec<Algorithm>,
    pub r_grid: Vec<usize>,
    pub trials: usize,
    pub n: usize,
    pub alpha: f64,
    pub noise_sigma: f64,
    pub seed_base: u64,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub algorithm: Algorithm,
    pub r: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub algorithm: Algorithm,
    pub r: usize,
    pub trial: usize,
    /// Pool columns used as endmembers (0-based).
    pub endmembers: Vec<usize>,
    pub theta: f64,
    pub perfect: bool,
    pub monotonicity_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub bands: usize,
    /// One row per (algorithm, r), algorithms in config order, then r.
    pub rows: Vec<BenchmarkRow>,
    /// Ordered by r, trial, then algorithm.
    pub trials: Vec<TrialRecord>,
}

impl BenchmarkReport {
    pub fn success_rate(&self, algorithm: Algorithm, r: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|row| row.algorithm == algorithm && row.r == r)
            .map(|row| row.success_rate)
    }

    pub fn total_monotonicity_violations(&self) -> usize {
        self.trials.iter().map(|t| t.monotonicity_violations).sum()
    }

    /// `algorithm,r,trials,successes,success_rate`, one row per (algorithm, r).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("algorithm,r,trials,successes,success_rate\n");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                row.algorithm.tag(),
                row.r,
                row.trials,
                row.successes,
                row.success_rate
            );
        }
        out
    }

    /// Per-trial log, the raw data behind [`Self::to_csv`].
    pub fn trials_csv(&self) -> String {
        let mut out = String::from("algorithm,r,trial,theta,perfect,monotonicity_violations\n");
        for t in &self.trials {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                t.algorithm.tag(),
                t.r,
                t.trial,
                t.theta,
                t.perfect as u8,
                t.monotonicity_violations
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:>4}", "r");
        for a in &self.config.algorithms {
            let _ = write!(out, " {:>8}", a.tag());
        }
        out.push('\n');
        for &r in &self.config.r_grid {
            let _ = write!(out, "{r:>4}");
            for &a in &self.config.algorithms {
                let rate = self.success_rate(a, r).unwrap_or(f64::NAN);
                let _ = write!(out, " {:>7.1}%", 100.0 * rate);
            }
            out.push('\n');
        }
        out
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one benchmark cell, so any (r, trial) can be replayed on its own.
pub fn trial_seed(seed_base: u64, r: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed_base) ^ r as u64) ^ trial as u64)
}

/// Endmember pool columns and scene seed of one benchmark cell.
pub fn draw_trial(pool_size: usize, r: usize, seed: u64) -> (Vec<usize>, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, pool_size, r).into_vec();
    (picks, rng.next_u64())
}

/// Runs every configured algorithm on `trials` scenes per `r`. `pool` is the
/// `m x p` matrix of candidate endmembers.
pub fn run_benchmark(config: &BenchmarkConfig, pool: ArrayView2<f64>) -> Result<BenchmarkReport> {
    if config.r_grid.is_empty() {
        return Err(Error::input("benchmark r grid is empty"));
    }
    if config.trials == 0 {
        return Err(Error::input("benchmark needs at least one trial"));
    }
    if config.algorithms.is_empty() {
        return Err(Error::input("benchmark needs at least one algorithm"));
    }
    config.solver.validate()?;
    let max_r = *config.r_grid.iter().max().expect("non-empty grid");
    if config.r_grid.contains(&0) {
        return Err(Error::input("r values must be >= 1"));
    }
    if pool.ncols() < max_r {
        return Err(Error::input(format!(
            "spectral pool has {} signatures, r grid needs {max_r}",
            pool.ncols()
        )));
    }
    if config.n < max_r {
        return Err(Error::input(format!("n = {} must be >= max r = {max_r}", config.n)));
    }

    let cells: Vec<(usize, usize)> = config
        .r_grid
        .iter()
        .flat_map(|&r| (0..config.trials).map(move |t| (r, t)))
        .collect();

    let records: Vec<Vec<TrialRecord>> = cells
        .par_iter()
        .map(|&(r, trial)| run_cell(config, pool, r, trial))
        .collect::<Result<_>>()?;
    let trials: Vec<TrialRecord> = records.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for &algorithm in &config.algorithms {
        for &r in &config.r_grid {
            let successes = trials
                .iter()
                .filter(|t| t.algorithm == algorithm && t.r == r && t.perfect)
                .count();
            rows.push(BenchmarkRow {
                algorithm,
                r,
                trials: config.trials,
                successes,
                success_rate: successes as f64 / config.trials as f64,
            });
        }
    }

    Ok(BenchmarkReport {
        config: config.clone(),
        bands: pool.nrows(),
        rows,
        trials,
    })
}

fn run_cell(config: &BenchmarkConfig, pool: ArrayView2<f64>, r: usize, trial: usize) -> Result<Vec<TrialRecord>> {
    let (endmembers, scene_seed) = draw_trial(pool.ncols(), r, trial_seed(config.seed_base, r, trial));
    let w = EndmemberSet::new(pool.select(Axis(1), &endmembers))?;
    let scene = generate_scene_with(
        &w,
        &SceneParams {
            n: config.n,
            alpha: config.alpha,
            noise_sigma: config.noise_sigma,
            seed: scene_seed,
            linear_only: false,
        },
    )?;
    config
        .algorithms
        .iter()
        .map(|&algorithm| {
            let result = extract(algorithm, &scene.x, r, &config.solver)?;
            let extracted = scene.x.select(&result.indices)?;
            let score = theta_metric(w.view(), extracted.view())?;
            Ok(TrialRecord {
                algorithm,
                r,
                trial,
                endmembers: endmembers.clone(),
                theta: score.theta,
                perfect: is_perfect(&score),
                monotonicity_violations: result.monotonicity_violations,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn brute_force_bottleneck(s: &Array2<f64>) -> f64 {
        fn permute(k: usize, perm: &mut Vec<usize>, s: &Array2<f64>, best: &mut f64) {
            if k == perm.len() {
                let v = (0..perm.len()).map(|i| s[[i, perm[i]]]).fold(f64::INFINITY, f64::min);
                *best = best.max(v);
                return;
            }
            for i in k..perm.len() {
                perm.swap(k, i);
                permute(k + 1, perm, s, best);
                perm.swap(k, i);
            }
        }
        let mut perm: Vec<usize> = (0..s.nrows()).collect();
        let mut best = f64::NEG_INFINITY;
        permute(0, &mut perm, s, &mut best);
        best
    }

    #[test]
    fn identical_matrices_score_one() {
        let w = array![[1.0, 0.2], [0.3, 1.0], [0.5, 0.5]];
        let s = theta_metric(w.view(), w.view()).unwrap();
        assert!((s.theta - 1.0).abs() <= 1e-12);
        assert_eq!(s.matching, vec![0, 1]);
    }

    #[test]
    fn swapped_columns_are_matched() {
        let w = array![[1.0, 0.2], [0.3, 1.0], [0.5, 0.5]];
        let x = array![[0.2, 1.0], [1.0, 0.3], [0.5, 0.5]];
        let s = theta_metric(w.view(), x.view()).unwrap();
        assert!((s.theta - 1.0).abs() <= 1e-12);
        assert_eq!(s.matching, vec![1, 0]);
    }

    #[test]
    fn rejects_bad_shapes_and_zero_columns() {
        let w = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(theta_metric(w.view(), array![[1.0], [0.0]].view()).is_err());
        assert!(theta_metric(w.view(), array![[1.0, 0.0], [0.0, 0.0]].view()).is_err());
    }

    #[test]
    fn perfect_threshold_is_strict() {
        let score = |theta| SeparationScore {
            theta,
            per_endmember: vec![theta],
            matching: vec![0],
        };
        assert!(is_perfect(&score(1.0)));
        assert!(!is_perfect(&score(0.999)));
        assert!(!is_perfect(&score(0.99)));
    }

    #[test]
    fn bottleneck_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for r in 1..=6 {
            for _ in 0..30 {
                let s = Array2::from_shape_fn((r, r), |_| (rng.random::<f64>() * 10.0).round() / 10.0);
                let m = bottleneck_assignment(&s);
                let got = (0..r).map(|i| s[[i, m[i]]]).fold(f64::INFINITY, f64::min);
                assert_eq!(got, brute_force_bottleneck(&s));
            }
        }
    }

    #[test]
    fn seeds_are_distinct_per_cell() {
        let mut seen = std::collections::HashSet::new();
        for r in 1..20 {
            for t in 0..50 {
                assert!(seen.insert(trial_seed(7, r, t)));
            }
        }
    }

    #[test]
    fn benchmark_input_errors() {
        let pool = Array2::from_elem((4, 3), 0.5);
        let mut cfg = BenchmarkConfig {
            algorithms: vec![Algorithm::Snpa],
            r_grid: vec![2],
            trials: 1,
            n: 10,
            alpha: 0.5,
            noise_sigma: 0.0,
            seed_base: 0,
            solver: SolverConfig::default(),
        };
        cfg.r_grid.clear();
        assert!(run_benchmark(&cfg, pool.view()).is_err());
        cfg.r_grid = vec![2];
        cfg.trials = 0;
        assert!(run_benchmark(&cfg, pool.view()).is_err());
        cfg.trials = 1;
        cfg.r_grid = vec![4];
        assert!(run_benchmark(&cfg, pool.view()).is_err());
    }

    proptest! {
        #[test]
        fn theta_ignores_column_scaling(seed in any::<u64>(), r in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = Array2::from_shape_fn((8, r), |_| rng.random::<f64>() + 0.01);
            let x = Array2::from_shape_fn((8, r), |_| rng.random::<f64>() + 0.01);
            let mut scaled = x.clone();
            for mut c in scaled.columns_mut() {
                c *= rng.random::<f64>() * 10.0 + 0.1;
            }
            let a = theta_metric(w.view(), x.view()).unwrap().theta;
            let b = theta_metric(w.view(), scaled.view()).unwrap().theta;
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
