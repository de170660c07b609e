//! CSV matrices, spectral libraries and scene bundles.
//!
//! Matrices are stored band-major: one CSV row per spectral band, one column
//! per pixel or endmember, with an optional header row of column labels.
//! Values are written in the shortest representation that parses back to the
//! same `f64` (never more than 17 significant digits).

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lq_model::{AbundanceMatrix, EndmemberSet, LqScene, SpectralMatrix};

/// Bundled spectral library fixture (224 bands x 24 materials, first column
/// holds wavelengths in micrometers). See `data/README.md`.
pub const BUNDLED_POOL_CSV: &str = include_str!("../data/usgs_like_pool.csv");

const WAVELENGTH_LABEL: &str = "wavelength_um";

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub data: Array2<f64>,
    pub labels: Option<Vec<String>>,
}

pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    Ok(load_labeled_matrix_csv(path)?.data)
}

pub fn load_labeled_matrix_csv(path: impl AsRef<Path>) -> Result<LabeledMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_csv(&text, path)
}

/// Parses matrix CSV text; `origin` only labels error messages. A first row
/// containing any non-numeric cell is taken as the header.
pub fn parse_matrix_csv(text: &str, origin: &Path) -> Result<LabeledMatrix> {
    let parse_error = |line: usize, column: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        column,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut labels = None;
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;

    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(k + 1);
            parse_error(line, 0, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(k + 1);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if k == 0 && record.iter().any(|cell| cell.parse::<f64>().is_err()) {
            labels = Some(record.iter().map(str::to_string).collect::<Vec<_>>());
            width = Some(record.len());
            continue;
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(parse_error(
                    line,
                    record.len().min(w) + 1,
                    format!("expected {w} cells, found {}", record.len()),
                ))
            }
            _ => width = Some(record.len()),
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_error(line, c + 1, format!("'{cell}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_error(line, c + 1, format!("'{cell}' is not finite")));
            }
            values.push(v);
        }
        rows += 1;
    }

    if rows == 0 {
        return Err(parse_error(1, 0, "no numeric rows".into()));
    }
    let cols = width.unwrap_or(0);
    let data = Array2::from_shape_vec((rows, cols), values).expect("row lengths checked");
    Ok(LabeledMatrix { data, labels })
}

pub fn format_matrix_csv(matrix: &Array2<f64>, labels: Option<&[String]>) -> Result<String> {
    if matrix.is_empty() {
        return Err(Error::input("refusing to write a matrix with no entries"));
    }
    let mut out = String::new();
    if let Some(labels) = labels {
        if labels.len() != matrix.ncols() {
            return Err(Error::input("label count does not match column count"));
        }
        out.push_str(&labels.join(","));
        out.push('\n');
    }
    for row in matrix.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn save_matrix_csv(matrix: &Array2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = format_matrix_csv(matrix, None)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subsample {
    /// Evenly spaced band indices, always keeping the first and last band.
    #[default]
    Uniform,
    /// Leading bands.
    First,
    /// Keep every band.
    None,
}

impl std::str::FromStr for Subsample {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Subsample::Uniform),
            "first" => Ok(Subsample::First),
            "none" => Ok(Subsample::None),
            other => Err(Error::input(format!("unknown subsample mode '{other}'"))),
        }
    }
}

/// Band rows kept when reducing `available` bands to `target`.
pub fn subsample_indices(available: usize, target: usize, mode: Subsample) -> Result<Vec<usize>> {
    if mode == Subsample::None {
        return Ok((0..available).collect());
    }
    if target == 0 {
        return Err(Error::input("target band count must be >= 1"));
    }
    if target > available {
        return Err(Error::input(format!(
            "requested {target} bands but only {available} are available"
        )));
    }
    Ok(match mode {
        Subsample::First => (0..target).collect(),
        Subsample::Uniform if target == 1 => vec![0],
        Subsample::Uniform => (0..target).map(|k| k * (available - 1) / (target - 1)).collect(),
        Subsample::None => unreachable!(),
    })
}

/// Candidate endmember spectra, one per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPool {
    pub signatures: Array2<f64>,
    pub labels: Vec<String>,
    pub band_wavelengths: Option<Vec<f64>>,
    /// Negative cells set to zero on load.
    pub clipped_cells: usize,
}

impl SpectralPool {
    pub fn bands(&self) -> usize {
        self.signatures.nrows()
    }

    pub fn len(&self) -> usize {
        self.signatures.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.ncols() == 0
    }
}

pub fn load_spectral_pool(path: impl AsRef<Path>, target_bands: usize, mode: Subsample) -> Result<SpectralPool> {
    let path = path.as_ref();
    let matrix = load_labeled_matrix_csv(path)?;
    build_pool(matrix, target_bands, mode)
}

pub fn bundled_pool(target_bands: usize, mode: Subsample) -> Result<SpectralPool> {
    let matrix = parse_matrix_csv(BUNDLED_POOL_CSV, Path::new("<bundled pool>"))?;
    build_pool(matrix, target_bands, mode)
}

fn build_pool(matrix: LabeledMatrix, target_bands: usize, mode: Subsample) -> Result<SpectralPool> {
    let LabeledMatrix { mut data, labels } = matrix;
    let mut labels = labels.unwrap_or_else(|| (1..=data.ncols()).map(|k| format!("material_{k}")).collect());

    let mut band_wavelengths = None;
    if labels.first().is_some_and(|l| l.eq_ignore_ascii_case(WAVELENGTH_LABEL)) {
        band_wavelengths = Some(data.column(0).to_vec());
        data = data.slice(ndarray::s![.., 1..]).to_owned();
        labels.remove(0);
    }
    if data.ncols() == 0 {
        return Err(Error::input("spectral pool has no signatures"));
    }

    let keep = subsample_indices(data.nrows(), target_bands, mode)?;
    let mut signatures = data.select(Axis(0), &keep);
    let band_wavelengths = band_wavelengths.map(|w| keep.iter().map(|&i| w[i]).collect());

    let mut clipped_cells = 0;
    signatures.mapv_inplace(|v| {
        if v < 0.0 {
            clipped_cells += 1;
            0.0
        } else {
            v
        }
    });

    Ok(SpectralPool {
        signatures,
        labels,
        band_wavelengths,
        clipped_cells,
    })
}

/// `meta.json` of a scene bundle. Indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub r: usize,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub pure_pixel_indices: Vec<usize>,
    pub permutation: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endmember_labels: Option<Vec<String>>,
    /// Echo of the configuration that produced the bundle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl SceneMeta {
    pub fn from_scene(scene: &LqScene) -> Self {
        SceneMeta {
            r: scene.w.count(),
            n: scene.x.pixels(),
            m: scene.x.bands(),
            alpha: scene.alpha,
            noise_sigma: scene.noise_sigma,
            seed: scene.seed,
            pure_pixel_indices: scene.pure_pixel_indices.iter().map(|i| i + 1).collect(),
            permutation: scene.permutation.iter().map(|i| i + 1).collect(),
            endmember_labels: None,
            config: None,
        }
    }
}

/// Serialises with keys in sorted order.
pub fn to_stable_json<T: Serialize>(value: &T) -> Result<String> {
    let value = serde_json::to_value(value).map_err(|e| Error::input(e.to_string()))?;
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| Error::input(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn write_text(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Writes `X.csv`, `W.csv`, `H.csv` and `meta.json` into `dir`.
pub fn write_scene_bundle(scene: &LqScene, meta: &SceneMeta, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(dir.join("X.csv"), &format_matrix_csv(&scene.x.view().to_owned(), None)?)?;
    write_text(
        dir.join("W.csv"),
        &format_matrix_csv(&scene.w.view().to_owned(), meta.endmember_labels.as_deref())?,
    )?;
    write_text(dir.join("H.csv"), &format_matrix_csv(&scene.h.view().to_owned(), None)?)?;
    write_text(dir.join("meta.json"), &to_stable_json(meta)?)
}

pub fn read_scene_bundle(dir: impl AsRef<Path>) -> Result<(LqScene, SceneMeta)> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: SceneMeta = serde_json::from_str(&meta_text).map_err(|e| Error::Parse {
        path: meta_path.clone(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let to_zero_based = |v: &[usize], what: &str| -> Result<Vec<usize>> {
        v.iter()
            .map(|&i| {
                i.checked_sub(1)
                    .ok_or_else(|| Error::input(format!("{what} in meta.json must be 1-based")))
            })
            .collect()
    };
    let scene = LqScene {
        x: SpectralMatrix::new(load_matrix_csv(dir.join("X.csv"))?)?,
        w: EndmemberSet::new(load_matrix_csv(dir.join("W.csv"))?)?,
        h: AbundanceMatrix::new(load_matrix_csv(dir.join("H.csv"))?)?,
        pure_pixel_indices: to_zero_based(&meta.pure_pixel_indices, "pure_pixel_indices")?,
        permutation: to_zero_based(&meta.permutation, "permutation")?,
        alpha: meta.alpha,
        noise_sigma: meta.noise_sigma,
        seed: meta.seed,
    };
    Ok((scene, meta))
}
