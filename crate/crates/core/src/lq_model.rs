//! The linear-quadratic mixing model.
//!
//! A dictionary built from `r` endmembers holds the endmembers themselves
//! followed by every cross product `w_j ⊙ w_i` with `j < i`, enumerated
//! lexicographically in `(i, j)`:
//!
//! ```text
//! w_1 .. w_r, w_1⊙w_2, w_1⊙w_3, w_2⊙w_3, w_1⊙w_4, ...
//! ```
//!
//! Self products are not part of the model, so the dictionary has
//! `r (r + 1) / 2` columns.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{Error, Result};
use crate::simplex_solver::{SimplexLeastSquares, SolverConfig, FEASIBILITY_EPS};

/// Number of dictionary columns generated by `r` endmembers.
pub const fn dictionary_len(r: usize) -> usize {
    r * (r + 1) / 2
}

/// Column of `w_j ⊙ w_i` (`j < i`, 0-based) in a dictionary built from `r` endmembers.
pub const fn pair_column(r: usize, i: usize, j: usize) -> usize {
    r + i * (i - 1) / 2 + j
}

/// Inverse of the column ordering: `None` for a linear column, `Some((i, j))` for `w_j ⊙ w_i`.
pub fn column_pair(r: usize, col: usize) -> Option<(usize, usize)> {
    if col < r {
        return None;
    }
    let mut k = col - r;
    let mut i = 1;
    while k >= i {
        k -= i;
        i += 1;
    }
    Some((i, k))
}

/// Observed pixel spectra, one pixel per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMatrix(Array2<f64>);

impl SpectralMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::input("spectral matrix must have at least one band and one pixel"));
        }
        if let Some(v) = data.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::input(format!("spectral matrix entries must be finite and >= 0, found {v}")));
        }
        Ok(SpectralMatrix(data))
    }

    pub fn bands(&self) -> usize {
        self.0.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.0.column(j)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// Columns at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Array2<f64>> {
        check_indices(indices, self.pixels())?;
        Ok(self.0.select(Axis(1), indices))
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        SpectralMatrix::new(&self.0 * c)
    }
}

/// Endmember signatures, one per column.
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberSet(Array2<f64>);

impl EndmemberSet {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::input("endmember set needs at least one band and one endmember"));
        }
        if let Some(v) = data.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::input(format!("endmember entries must be finite and >= 0, found {v}")));
        }
        if let Some(k) = data.columns().into_iter().position(|c| c.iter().all(|&v| v == 0.0)) {
            return Err(Error::input(format!("endmember {} is all zero", k + 1)));
        }
        Ok(EndmemberSet(data))
    }

    pub fn count(&self) -> usize {
        self.0.ncols()
    }

    pub fn bands(&self) -> usize {
        self.0.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        EndmemberSet::new(&self.0 * c)
    }

    fn without(&self, k: usize) -> Option<EndmemberSet> {
        let keep: Vec<usize> = (0..self.count()).filter(|&i| i != k).collect();
        if keep.is_empty() {
            None
        } else {
            Some(EndmemberSet(self.0.select(Axis(1), &keep)))
        }
    }
}

/// Endmembers followed by their pairwise Hadamard products.
#[derive(Debug, Clone, PartialEq)]
pub struct LqDictionary {
    data: Array2<f64>,
    base_r: usize,
}

impl LqDictionary {
    pub fn base_r(&self) -> usize {
        self.base_r
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }
}

/// Mixing coefficients, one column per pixel, every column in `Δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceMatrix(Array2<f64>);

impl AbundanceMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if let Some(v) = data.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::input(format!("abundances must be >= 0, found {v}")));
        }
        for (j, col) in data.columns().into_iter().enumerate() {
            let s = col.sum();
            if s > 1.0 + FEASIBILITY_EPS {
                return Err(Error::input(format!("abundance column {} sums to {s} > 1", j + 1)));
            }
        }
        Ok(AbundanceMatrix(data))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// A synthetic LQ near-separable scene, `X = Π⊙(W) H + N` clipped at zero.
#[derive(Debug, Clone)]
pub struct LqScene {
    pub x: SpectralMatrix,
    pub w: EndmemberSet,
    pub h: AbundanceMatrix,
    /// `pure_pixel_indices[k]` is the pixel holding endmember `k` unmixed.
    pub pure_pixel_indices: Vec<usize>,
    /// Slot permutation: generator column `c` was placed at pixel `permutation[c]`.
    /// The first `r` generator columns are the identity block.
    pub permutation: Vec<usize>,
    pub alpha: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Parameters of [`generate_scene_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    pub n: usize,
    pub alpha: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Draw mixed pixels from the linear model only (quadratic rows of `H'` set to zero).
    pub linear_only: bool,
}

pub fn expand_lq(w: &EndmemberSet) -> LqDictionary {
    expand_columns(w.view())
}

/// [`expand_lq`] applied to the pixels `indices` of `x`, in the given order.
pub fn expand_lq_subset(x: &SpectralMatrix, indices: &[usize]) -> Result<LqDictionary> {
    let sub = x.select(indices)?;
    Ok(expand_columns(sub.view()))
}

pub(crate) fn expand_columns(w: ArrayView2<f64>) -> LqDictionary {
    let (m, r) = w.dim();
    let mut data = Array2::zeros((m, dictionary_len(r)));
    for k in 0..r {
        data.column_mut(k).assign(&w.column(k));
    }
    for i in 1..r {
        for j in 0..i {
            let mut col = data.column_mut(pair_column(r, i, j));
            col.assign(&w.column(j));
            col *= &w.column(i);
        }
    }
    LqDictionary { data, base_r: r }
}

/// Same ordering as [`expand_columns`], written column-major into `out` from
/// pixel columns given as contiguous slices.
pub(crate) fn expand_into(columns: &[&[f64]], lq: bool, out: &mut Vec<f64>) {
    out.clear();
    for c in columns {
        out.extend_from_slice(c);
    }
    if lq {
        for i in 1..columns.len() {
            for j in 0..i {
                out.extend(columns[j].iter().zip(columns[i]).map(|(a, b)| a * b));
            }
        }
    }
}

pub fn generate_scene(w: &EndmemberSet, n: usize, alpha: f64, noise_sigma: f64, seed: u64) -> Result<LqScene> {
    generate_scene_with(
        w,
        &SceneParams {
            n,
            alpha,
            noise_sigma,
            seed,
            linear_only: false,
        },
    )
}

/// Draws a near-separable scene: `r` pure pixels placed at uniformly random
/// slots, the other `n - r` pixels with Dirichlet(alpha) coefficients over
/// the whole dictionary, then optional Gaussian noise and clipping at zero.
pub fn generate_scene_with(w: &EndmemberSet, params: &SceneParams) -> Result<LqScene> {
    let r = w.count();
    let &SceneParams {
        n,
        alpha,
        noise_sigma,
        seed,
        linear_only,
    } = params;
    if n < r {
        return Err(Error::input(format!("n = {n} must be >= r = {r}")));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::input(format!("alpha = {alpha} must be > 0")));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::input(format!("noise_sigma = {noise_sigma} must be >= 0")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut permutation: Vec<usize> = (0..n).collect();
    permutation.shuffle(&mut rng);

    let q = dictionary_len(r);
    let active = if linear_only { r } else { q };
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::input(format!("alpha: {e}")))?;

    let mut h = Array2::<f64>::zeros((q, n));
    for (slot, &pixel) in permutation.iter().enumerate() {
        let mut col = h.column_mut(pixel);
        if slot < r {
            col[slot] = 1.0;
            continue;
        }
        // Gamma(alpha) draws underflow to zero for small alpha; redraw rather than divide by zero.
        loop {
            let mut sum = 0.0;
            for k in 0..active {
                let g = gamma.sample(&mut rng);
                col[k] = g;
                sum += g;
            }
            if sum > 0.0 && sum.is_finite() {
                col.slice_mut(ndarray::s![..active]).mapv_inplace(|v| v / sum);
                break;
            }
        }
    }

    let dict = expand_lq(w);
    let mut x = dict.view().dot(&h);
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::input(format!("noise_sigma: {e}")))?;
        x.mapv_inplace(|v| (v + normal.sample(&mut rng)).max(0.0));
    }

    let pure_pixel_indices = permutation[..r].to_vec();
    Ok(LqScene {
        x: SpectralMatrix::new(x)?,
        w: w.clone(),
        h: AbundanceMatrix::new(h)?,
        pure_pixel_indices,
        permutation,
        alpha,
        noise_sigma,
        seed,
    })
}

/// Solver settings used by [`validate_separability`]; tighter than the
/// extraction defaults since the residual is compared against a small tolerance.
pub fn validation_solver_config() -> SolverConfig {
    SolverConfig {
        max_iters: 20_000,
        rel_tol: 1e-14,
        restart: true,
    }
}

pub fn validate_separability(w: &EndmemberSet, tol: f64) -> Result<Vec<usize>> {
    validate_separability_with(w, tol, &validation_solver_config())
}

/// Endmembers (0-based) that lie within `tol * ||w_k||` of the hull formed by
/// the origin and the dictionary of the other endmembers.
pub fn validate_separability_with(w: &EndmemberSet, tol: f64, config: &SolverConfig) -> Result<Vec<usize>> {
    if !(tol > 0.0) {
        return Err(Error::input(format!("tol = {tol} must be > 0")));
    }
    let mut violators = Vec::new();
    for k in 0..w.count() {
        let Some(others) = w.without(k) else {
            continue;
        };
        let dict = expand_lq(&others);
        let solver = SimplexLeastSquares::from_matrix(dict.view(), *config)?;
        let target: Vec<f64> = w.view().column(k).to_vec();
        let sol = solver.solve(&target, None)?;
        let scale = target.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sol.residual_norm <= tol * scale {
            violators.push(k);
        }
    }
    Ok(violators)
}

fn check_indices(indices: &[usize], n: usize) -> Result<()> {
    for (pos, &i) in indices.iter().enumerate() {
        if i >= n {
            return Err(Error::input(format!("index {i} out of range for {n} pixels")));
        }
        if indices[..pos].contains(&i) {
            return Err(Error::input(format!("index {i} repeated")));
        }
    }
    Ok(())
}
