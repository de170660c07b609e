//! `snpalq` command line front end.
//!
//! Exit codes: 0 success, 1 validation found violations, 2 usage or
//! configuration error, 3 I/O or file-format error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ndarray::Axis;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::{
    bundled_pool, format_matrix_csv, load_labeled_matrix_csv, load_matrix_csv, load_spectral_pool, to_stable_json,
    write_scene_bundle, SceneMeta, SpectralPool, Subsample,
};
use crate::error::{Error, Result};
use crate::evaluation::{run_benchmark, BenchmarkConfig};
use crate::extraction::{extract, recover_abundances, Algorithm};
use crate::lq_model::{generate_scene, validate_separability, EndmemberSet, SpectralMatrix};
use crate::simplex_solver::SolverConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATIONS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSection {
    pub r: usize,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        GeneratorSection {
            r: 5,
            n: 1000,
            m: 20,
            alpha: 0.5,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSection {
    pub algorithms: Vec<Algorithm>,
    pub r_grid: Vec<usize>,
    pub trials: usize,
    pub seed_base: u64,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        BenchmarkSection {
            algorithms: Algorithm::ALL.to_vec(),
            r_grid: (2..=20).collect(),
            trials: 100,
            seed_base: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    /// Spectral library CSV; the bundled fixture when absent.
    pub pool_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub subsample: Subsample,
    /// Bands kept from the library; defaults to `generator.m`.
    pub target_bands: Option<usize>,
}

impl Default for IoSection {
    fn default() -> Self {
        IoSection {
            pool_path: None,
            out_dir: PathBuf::from("out"),
            subsample: Subsample::Uniform,
            target_bands: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub generator: GeneratorSection,
    pub solver: SolverConfig,
    pub benchmark: BenchmarkSection,
    pub io: IoSection,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.generator;
        if g.r < 1 {
            return Err(Error::Config("generator.r must be >= 1".into()));
        }
        if g.n < g.r {
            return Err(Error::Config(format!("generator.n = {} must be >= generator.r = {}", g.n, g.r)));
        }
        if g.m < 1 {
            return Err(Error::Config("generator.m must be >= 1".into()));
        }
        if !(g.alpha > 0.0) || !g.alpha.is_finite() {
            return Err(Error::Config("generator.alpha must be > 0".into()));
        }
        if !(g.noise_sigma >= 0.0) || !g.noise_sigma.is_finite() {
            return Err(Error::Config("generator.noise_sigma must be >= 0".into()));
        }
        self.solver.validate()?;
        let b = &self.benchmark;
        if b.algorithms.is_empty() {
            return Err(Error::Config("benchmark.algorithms is empty".into()));
        }
        if b.r_grid.is_empty() || b.r_grid.contains(&0) {
            return Err(Error::Config("benchmark.r_grid must be non-empty with values >= 1".into()));
        }
        if b.trials == 0 {
            return Err(Error::Config("benchmark.trials must be >= 1".into()));
        }
        if self.io.target_bands == Some(0) {
            return Err(Error::Config("io.target_bands must be >= 1".into()));
        }
        Ok(())
    }

    pub fn load_pool(&self) -> Result<SpectralPool> {
        let bands = self.io.target_bands.unwrap_or(self.generator.m);
        let pool = match &self.io.pool_path {
            Some(path) => load_spectral_pool(path, bands, self.io.subsample)?,
            None => bundled_pool(bands, self.io.subsample)?,
        };
        if pool.clipped_cells > 0 {
            eprintln!("warning: clipped {} negative cells in the spectral pool to 0", pool.clipped_cells);
        }
        if pool.bands() != self.generator.m {
            return Err(Error::Config(format!(
                "spectral pool has {} bands after subsampling, generator.m is {}",
                pool.bands(),
                self.generator.m
            )));
        }
        Ok(pool)
    }
}

#[derive(Debug, Parser)]
#[command(name = "snpalq", version, about = "Endmember extraction for linear-quadratic hyperspectral mixtures")]
struct Cli {
    /// Worker thread cap (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic LQ near-separable scene bundle.
    Generate(GenerateArgs),
    /// Extract endmembers from a pixel matrix.
    Unmix(UnmixArgs),
    /// Monte-Carlo separation benchmark.
    Benchmark(BenchmarkArgs),
    /// Check that no endmember lies in the hull of the others and their products.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    r: Option<usize>,
}

#[derive(Debug, Args)]
struct UnmixArgs {
    /// Pixel matrix CSV (bands x pixels), or a scene bundle directory.
    input: PathBuf,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long, default_value = "snpalq")]
    algorithm: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write H_hat.csv.
    #[arg(long)]
    abundances: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides benchmark.seed_base.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Endmember matrix CSV (bands x endmembers).
    w: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };

    let outcome = match cli.threads {
        Some(0) => Err(Error::Config("--threads must be >= 1".into())),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Error::Config(format!("cannot start thread pool: {e}"))),
        },
        None => dispatch(cli.command),
    };

    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Parse { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Generate(args) => cmd_generate(args),
        Command::Unmix(args) => cmd_unmix(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::Validate(args) => cmd_validate(args),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Pool columns used as endmembers by `generate` for a given seed.
pub fn draw_endmembers(pool_size: usize, r: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_e11d_e4b3);
    sample(&mut rng, pool_size, r).into_vec()
}

fn cmd_generate(args: GenerateArgs) -> Result<i32> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.generator.seed = seed;
    }
    if let Some(r) = args.r {
        config.generator.r = r;
    }
    if let Some(out) = args.out {
        config.io.out_dir = out;
    }
    config.validate()?;
    let g = &config.generator;

    let pool = config.load_pool()?;
    if pool.len() < g.r {
        return Err(Error::Config(format!(
            "spectral pool has {} signatures, generator.r is {}",
            pool.len(),
            g.r
        )));
    }
    let picks = draw_endmembers(pool.len(), g.r, g.seed);
    let w = EndmemberSet::new(pool.signatures.select(Axis(1), &picks))?;
    let scene = generate_scene(&w, g.n, g.alpha, g.noise_sigma, g.seed)?;

    let mut meta = SceneMeta::from_scene(&scene);
    meta.endmember_labels = Some(picks.iter().map(|&i| pool.labels[i].clone()).collect());
    meta.config = Some(serde_json::to_value(&config).map_err(|e| Error::Config(e.to_string()))?);
    write_scene_bundle(&scene, &meta, &config.io.out_dir)?;

    println!(
        "generated X {}x{}, H {}x{}, r={}, seed={}, pure pixels (1-based) {:?} -> {}",
        scene.x.bands(),
        scene.x.pixels(),
        scene.h.view().nrows(),
        scene.h.view().ncols(),
        g.r,
        g.seed,
        meta.pure_pixel_indices,
        config.io.out_dir.display()
    );
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct UnmixReport {
    algorithm: Algorithm,
    r: usize,
    bands: usize,
    pixels: usize,
    indices: Vec<usize>,
    residual_norms: Vec<f64>,
    monotonicity_violations: usize,
    exhausted_at: Option<usize>,
    wall_time_s: f64,
    solver: SolverConfig,
}

fn cmd_unmix(args: UnmixArgs) -> Result<i32> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(out) = args.out {
        config.io.out_dir = out;
    }
    config.solver.validate()?;
    let algorithm: Algorithm = args.algorithm.parse()?;
    let r = args.r.unwrap_or(config.generator.r);

    let input = if args.input.is_dir() {
        args.input.join("X.csv")
    } else {
        args.input.clone()
    };
    let x = SpectralMatrix::new(load_matrix_csv(&input)?)?;

    let started = Instant::now();
    let result = extract(algorithm, &x, r, &config.solver)?;
    let abundances = if args.abundances {
        Some(recover_abundances(&x, &result.indices, algorithm.is_lq(), &config.solver)?)
    } else {
        None
    };
    let elapsed = started.elapsed().as_secs_f64();

    let out = &config.io.out_dir;
    create_dir(out)?;
    let one_based: Vec<usize> = result.indices.iter().map(|i| i + 1).collect();
    let k_text: String = one_based.iter().map(|i| format!("{i}\n")).collect();
    write_file(out.join("K.csv"), &k_text)?;
    write_file(out.join("W_hat.csv"), &format_matrix_csv(&x.select(&result.indices)?, None)?)?;
    if let Some(h) = &abundances {
        write_file(out.join("H_hat.csv"), &format_matrix_csv(&h.view().to_owned(), None)?)?;
    }
    let report = UnmixReport {
        algorithm,
        r,
        bands: x.bands(),
        pixels: x.pixels(),
        indices: one_based.clone(),
        residual_norms: result.residual_norms.clone(),
        monotonicity_violations: result.monotonicity_violations,
        exhausted_at: result.exhausted_at,
        wall_time_s: elapsed,
        solver: config.solver,
    };
    write_file(out.join("report.json"), &to_stable_json(&report)?)?;

    if let Some(t) = result.exhausted_at {
        eprintln!("warning: residuals vanished after {t} extractions; later picks are arbitrary");
    }
    println!("{} K (1-based): {:?}", algorithm.tag(), one_based);
    Ok(EXIT_OK)
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<i32> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.benchmark.seed_base = seed;
    }
    if let Some(out) = args.out {
        config.io.out_dir = out;
    }
    config.validate()?;
    let pool = config.load_pool()?;

    let bench = BenchmarkConfig {
        algorithms: config.benchmark.algorithms.clone(),
        r_grid: config.benchmark.r_grid.clone(),
        trials: config.benchmark.trials,
        n: config.generator.n,
        alpha: config.generator.alpha,
        noise_sigma: config.generator.noise_sigma,
        seed_base: config.benchmark.seed_base,
        solver: config.solver,
    };
    let report = run_benchmark(&bench, pool.signatures.view())?;

    let out = &config.io.out_dir;
    create_dir(out)?;
    write_file(out.join("report.csv"), &report.to_csv())?;
    write_file(out.join("trials.csv"), &report.trials_csv())?;
    let echo = serde_json::json!({
        "config": config,
        "bands": report.bands,
        "pool_labels": pool.labels,
        "monotonicity_violations": report.total_monotonicity_violations(),
    });
    write_file(out.join("benchmark.json"), &to_stable_json(&echo)?)?;

    print!("{}", report.to_table());
    Ok(EXIT_OK)
}

fn cmd_validate(args: ValidateArgs) -> Result<i32> {
    if !(args.tol > 0.0) {
        return Err(Error::Config("--tol must be > 0".into()));
    }
    let w = EndmemberSet::new(load_labeled_matrix_csv(&args.w)?.data)?;
    let violators = validate_separability(&w, args.tol)?;
    for k in &violators {
        println!("{}", k + 1);
    }
    Ok(if violators.is_empty() { EXIT_OK } else { EXIT_VIOLATIONS })
}
