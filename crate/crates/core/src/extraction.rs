//! Greedy pure-pixel extraction: SPA, SNPA and SNPALQ.
//!
//! All three share the same outer loop. Each iteration picks the pixel with
//! the largest residual norm (smallest index on ties) and then updates every
//! residual:
//!
//! - SPA projects residuals onto the orthogonal complement of the span of the
//!   picked pixels.
//! - SNPA projects each pixel onto the hull of the origin and the picked pixels.
//! - SNPALQ projects onto the hull of the origin, the picked pixels and their
//!   pairwise Hadamard products.
//!
//! The hull projections are warm started from the previous iteration's
//! coefficients, remapped to the new dictionary layout, and the solver never
//! returns a worse point than its start. Per-pixel residual norms are
//! therefore nonincreasing; [`ExtractionResult::monotonicity_violations`]
//! counts the (pixel, iteration) pairs where that failed by more than
//! [`MONOTONICITY_TOL`].

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lq_model::{dictionary_len, expand_into, AbundanceMatrix, SpectralMatrix};
use crate::simplex_solver::{dot, norm, SimplexLeastSquares, SolverConfig};

/// Allowed growth of a pixel's residual norm between iterations.
pub const MONOTONICITY_TOL: f64 = 1e-8;

/// Pixels with residual norm at or below this fraction of the largest input
/// column norm are never picked while a live pixel remains.
pub const DEAD_RESIDUAL_RATIO: f64 = 1e-12;

/// Resource guard for [`recover_abundances`].
pub const MAX_DICTIONARY_COLUMNS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Spa,
    Snpa,
    Snpalq,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Spa, Algorithm::Snpa, Algorithm::Snpalq];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Spa => "SPA",
            Algorithm::Snpa => "SNPA",
            Algorithm::Snpalq => "SNPALQ",
        }
    }

    /// Whether abundances for this algorithm live on the LQ dictionary.
    pub fn is_lq(self) -> bool {
        self == Algorithm::Snpalq
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spa" => Ok(Algorithm::Spa),
            "snpa" => Ok(Algorithm::Snpa),
            "snpalq" => Ok(Algorithm::Snpalq),
            other => Err(Error::input(format!(
                "unknown algorithm '{other}', expected one of spa, snpa, snpalq"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionResult {
    /// Selected pixels (0-based) in extraction order.
    pub indices: Vec<usize>,
    /// Largest pixel residual norm after each iteration's projection.
    pub residual_norms: Vec<f64>,
    pub algorithm: Algorithm,
    pub monotonicity_violations: usize,
    /// Largest observed increase of any pixel's residual norm between iterations.
    pub max_residual_increase: f64,
    /// First iteration at which every unpicked pixel was numerically dead;
    /// picks from then on are arbitrary.
    pub exhausted_at: Option<usize>,
}

pub fn extract(algorithm: Algorithm, x: &SpectralMatrix, r: usize, config: &SolverConfig) -> Result<ExtractionResult> {
    match algorithm {
        Algorithm::Spa => spa_extract(x, r),
        Algorithm::Snpa => snpa_extract(x, r, config),
        Algorithm::Snpalq => snpalq_extract(x, r, config),
    }
}

pub fn snpalq_extract(x: &SpectralMatrix, r: usize, config: &SolverConfig) -> Result<ExtractionResult> {
    hull_projection_extract(x, r, config, true)
}

pub fn snpa_extract(x: &SpectralMatrix, r: usize, config: &SolverConfig) -> Result<ExtractionResult> {
    hull_projection_extract(x, r, config, false)
}

/// Pixel columns copied into one contiguous column-major buffer.
struct Columns {
    rows: usize,
    data: Vec<f64>,
}

impl Columns {
    fn new(x: &SpectralMatrix) -> Self {
        let rows = x.bands();
        let mut data = Vec::with_capacity(rows * x.pixels());
        for c in x.view().columns() {
            data.extend(c.iter().copied());
        }
        Columns { rows, data }
    }

    fn get(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn len(&self) -> usize {
        self.data.len() / self.rows
    }
}

/// Bookkeeping shared by the three algorithms.
struct Greedy {
    norms: Vec<f64>,
    taken: Vec<bool>,
    dead: f64,
    indices: Vec<usize>,
    residual_norms: Vec<f64>,
    violations: usize,
    max_increase: f64,
    exhausted_at: Option<usize>,
}

impl Greedy {
    fn new(columns: &Columns, r: usize) -> Result<Self> {
        let n = columns.len();
        if r == 0 {
            return Err(Error::input("r must be >= 1"));
        }
        if r > n {
            return Err(Error::input(format!("r = {r} exceeds the number of pixels n = {n}")));
        }
        let norms: Vec<f64> = (0..n).map(|j| norm(columns.get(j))).collect();
        let scale = norms.iter().fold(0.0_f64, |a, &b| a.max(b));
        Ok(Greedy {
            norms,
            taken: vec![false; n],
            dead: DEAD_RESIDUAL_RATIO * scale,
            indices: Vec::with_capacity(r),
            residual_norms: Vec::with_capacity(r),
            violations: 0,
            max_increase: 0.0,
            exhausted_at: None,
        })
    }

    fn argmax(&self, live_only: bool) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (j, &v) in self.norms.iter().enumerate() {
            if self.taken[j] || (live_only && !(v > self.dead)) {
                continue;
            }
            if best.is_none_or(|b| v > self.norms[b]) {
                best = Some(j);
            }
        }
        best
    }

    fn pick(&mut self) -> Result<usize> {
        let iteration = self.indices.len();
        let p = match self.argmax(true) {
            Some(p) => p,
            None if iteration == 0 => {
                return Err(Error::Degenerate("every pixel has zero norm".into()));
            }
            None => {
                self.exhausted_at.get_or_insert(iteration);
                self.argmax(false)
                    .ok_or_else(|| Error::Degenerate("no pixel left to select".into()))?
            }
        };
        self.taken[p] = true;
        self.indices.push(p);
        Ok(p)
    }

    fn record(&mut self, new_norms: Vec<f64>) {
        for (old, &new) in self.norms.iter().zip(&new_norms) {
            let increase = new - old;
            if increase > self.max_increase {
                self.max_increase = increase;
            }
            if increase > MONOTONICITY_TOL {
                self.violations += 1;
            }
        }
        self.norms = new_norms;
        let worst = self.norms.iter().fold(0.0_f64, |a, &b| a.max(b));
        self.residual_norms.push(worst);
    }

    fn finish(self, algorithm: Algorithm) -> ExtractionResult {
        ExtractionResult {
            indices: self.indices,
            residual_norms: self.residual_norms,
            algorithm,
            monotonicity_violations: self.violations,
            max_residual_increase: self.max_increase,
            exhausted_at: self.exhausted_at,
        }
    }
}

/// Where the coefficient of old dictionary column `c` goes after a new pixel
/// is appended to a selection of `k_old` pixels. In the LQ layout the new
/// linear column is inserted before the old products, and the new products
/// go at the end.
fn remap_column(c: usize, k_old: usize, lq: bool) -> usize {
    if lq && c >= k_old {
        c + 1
    } else {
        c
    }
}

fn hull_projection_extract(x: &SpectralMatrix, r: usize, config: &SolverConfig, lq: bool) -> Result<ExtractionResult> {
    config.validate()?;
    let columns = Columns::new(x);
    let n = columns.len();
    let mut greedy = Greedy::new(&columns, r)?;
    let mut coefficients: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut dict = Vec::new();

    for _ in 0..r {
        greedy.pick()?;
        let selected = &greedy.indices;
        let k = selected.len();
        let refs: Vec<&[f64]> = selected.iter().map(|&i| columns.get(i)).collect();
        expand_into(&refs, lq, &mut dict);
        let solver = SimplexLeastSquares::from_columns(columns.rows, dict.clone(), *config)?;
        let q = solver.cols();

        let updated: Vec<(Vec<f64>, f64)> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut warm = vec![0.0; q];
                if let Some(pos) = selected.iter().position(|&i| i == j) {
                    // x_j is a dictionary column: h = e_pos fits it exactly.
                    warm[pos] = 1.0;
                    return Ok((warm, 0.0));
                }
                for (c, &v) in coefficients[j].iter().enumerate() {
                    warm[remap_column(c, k - 1, lq)] = v;
                }
                let sol = solver.solve(columns.get(j), Some(&warm))?;
                Ok((sol.h, sol.residual_norm))
            })
            .collect::<Result<_>>()?;

        let mut new_norms = Vec::with_capacity(n);
        for (j, (h, rn)) in updated.into_iter().enumerate() {
            coefficients[j] = h;
            new_norms.push(rn);
        }
        greedy.record(new_norms);
    }

    let algorithm = if lq { Algorithm::Snpalq } else { Algorithm::Snpa };
    Ok(greedy.finish(algorithm))
}

/// Successive projection: deflate every residual by the direction of the
/// newest pick (re-orthogonalised twice against earlier directions).
pub fn spa_extract(x: &SpectralMatrix, r: usize) -> Result<ExtractionResult> {
    let columns = Columns::new(x);
    let n = columns.len();
    let m = columns.rows;
    let mut greedy = Greedy::new(&columns, r)?;
    let mut residuals = columns.data.clone();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(r);

    for _ in 0..r {
        let p = greedy.pick()?;
        let mut u = residuals[p * m..(p + 1) * m].to_vec();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &u);
                u.iter_mut().zip(b).for_each(|(ui, bi)| *ui -= c * bi);
            }
        }
        let un = norm(&u);
        if un > greedy.dead {
            u.iter_mut().for_each(|v| *v /= un);
            basis.push(u);
        }

        let new_norms: Vec<f64> = residuals
            .par_chunks_mut(m)
            .map(|rj| {
                if let Some(u) = basis.last() {
                    let c = dot(u, rj);
                    rj.iter_mut().zip(u).for_each(|(v, ui)| *v -= c * ui);
                }
                for b in &basis {
                    let c = dot(b, rj);
                    rj.iter_mut().zip(b).for_each(|(v, bi)| *v -= c * bi);
                }
                norm(rj)
            })
            .collect();
        debug_assert_eq!(new_norms.len(), n);
        greedy.record(new_norms);
    }

    Ok(greedy.finish(Algorithm::Spa))
}

pub fn recover_abundances(
    x: &SpectralMatrix,
    indices: &[usize],
    lq: bool,
    config: &SolverConfig,
) -> Result<AbundanceMatrix> {
    recover_abundances_capped(x, indices, lq, config, MAX_DICTIONARY_COLUMNS)
}

/// One projection pass of every pixel onto the (LQ) dictionary of the
/// selected pixels; returns the stacked coefficients, one column per pixel.
pub fn recover_abundances_capped(
    x: &SpectralMatrix,
    indices: &[usize],
    lq: bool,
    config: &SolverConfig,
    max_columns: usize,
) -> Result<AbundanceMatrix> {
    if indices.is_empty() {
        return Err(Error::input("no endmember indices given"));
    }
    let q = if lq { dictionary_len(indices.len()) } else { indices.len() };
    if q > max_columns {
        return Err(Error::Capability(format!(
            "dictionary would have {q} columns, cap is {max_columns}"
        )));
    }
    // validates range and distinctness
    x.select(indices)?;
    let columns = Columns::new(x);
    let refs: Vec<&[f64]> = indices.iter().map(|&i| columns.get(i)).collect();
    let mut dict = Vec::new();
    expand_into(&refs, lq, &mut dict);
    let solver = SimplexLeastSquares::from_columns(columns.rows, dict, *config)?;

    let cols: Vec<Vec<f64>> = (0..columns.len())
        .into_par_iter()
        .map(|j| {
            if let Some(pos) = indices.iter().position(|&i| i == j) {
                let mut h = vec![0.0; q];
                h[pos] = 1.0;
                return Ok(h);
            }
            solver.solve(columns.get(j), None).map(|s| s.h)
        })
        .collect::<Result<_>>()?;

    let mut h = Array2::zeros((q, columns.len()));
    for (j, c) in cols.iter().enumerate() {
        for (i, &v) in c.iter().enumerate() {
            h[[i, j]] = v;
        }
    }
    AbundanceMatrix::new(h)
}
