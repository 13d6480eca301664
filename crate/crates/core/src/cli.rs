// SPDX-License-Identifier: MIT OR Apache-2.0
//! Command-line surface.
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::experiments::{self, CoverageConfig, Layout, TableSettings};
use crate::io::{self, SequenceFile};
use crate::model::PiecewiseConfig;
use crate::pipeline::{self, PipelineConfig};
use crate::rwdist::{self, LDistTable, NoiseSpec};
use crate::synth::{self, EmulationSpec, Injection, NoiseModel};

#[derive(Parser, Debug)]
#[command(name = "intsamp", version, about = "Change-point detection by intelligent sampling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic series and its ground truth.
    Simulate(SimulateArgs),
    /// Detect change points in a data file.
    Detect(DetectArgs),
    /// Print the planned stage allocation.
    Plan(PlanArgs),
    /// Build a quantile table of the localization law.
    Quantiles(QuantilesArgs),
    /// Time detection against full-data binary segmentation.
    Bench(BenchArgs),
    /// Replicated confidence-interval coverage.
    Coverage(CoverageArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub j: usize,
    /// Jump size (even layout) or minimum jump (random layout).
    #[arg(long, default_value_t = 1.0)]
    pub snr: f64,
    #[arg(long, default_value = "iid")]
    pub noise: String,
    #[arg(long, default_value = "even")]
    pub layout: String,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Data file; `.csv` writes text, anything else raw f64.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Emulation spec JSON.
    #[arg(long)]
    pub emulate: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub stages: usize,
    #[arg(long, conflicts_with = "gamma")]
    pub n1: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 50.0)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.01)]
    pub window_alpha: f64,
    #[arg(long, default_value_t = 1.5)]
    pub k: f64,
    #[arg(long, default_value_t = 0.5)]
    pub snr_floor: f64,
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long, default_value_t = 15)]
    pub delta_d: usize,
    #[arg(long, default_value_t = 0.5)]
    pub big_delta_d: f64,
    /// Known noise scale.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Quantile table TSV; built and cached when absent.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value = ".intsamp-cache")]
    pub cache_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: PathBuf,
    /// Keep stage-1 points in the dense windows and use dependent walks.
    #[arg(long)]
    pub dependent: bool,
    /// Noise law for dependent walks (iid, ma3, ar1, ma:.., ar1:.., acf:..).
    #[arg(long, default_value = "iid")]
    pub noise: String,
    /// Record wall-clock timings in the report.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub j: usize,
    #[arg(long)]
    pub snr: f64,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[arg(long, default_value_t = 2)]
    pub stages: usize,
    #[arg(long, default_value_t = 200_000)]
    pub reps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct QuantilesArgs {
    /// `lo:hi:step`.
    #[arg(long, default_value = "0.5:5.0:0.1")]
    pub snr_grid: String,
    #[arg(long, default_value = "0.1,0.05,0.02,0.01,0.005,0.002,0.001,0.0005")]
    pub alphas: String,
    #[arg(long, default_value_t = 1_000_000)]
    pub reps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "iid")]
    pub noise: String,
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated sizes.
    #[arg(long, conflicts_with = "protocol")]
    pub grid: Option<String>,
    /// `log7`: seven sizes from 1e5 to 1e7.
    #[arg(long)]
    pub protocol: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Quantile table TSV; built when absent.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value_t = 200_000)]
    pub table_reps: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CoverageArgs {
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value = "0.9,0.95,0.98")]
    pub nominal: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Truth<'a> {
    config: &'a PiecewiseConfig,
    noise: &'a str,
    layout: Layout,
    scale: f64,
    seed: u64,
    injections: &'a [Injection],
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| x.trim().parse::<T>().map_err(|_| Error::Invalid(format!("bad {what} {x:?}"))))
        .collect()
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> =
        s.split(':').map(|x| x.trim().parse::<f64>().map_err(|_| Error::Invalid(format!("bad grid {s:?}")))).collect::<Result<_>>()?;
    match parts.as_slice() {
        [lo, hi, step] => rwdist::snr_grid(*lo, *hi, *step),
        _ => invalid(format!("grid {s:?} is not lo:hi:step")),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let layout = Layout::parse(&a.layout)?;
    let model = NoiseModel::parse(&a.noise)?;
    let config = experiments::make_config(a.n, a.j, a.snr, layout, a.seed)?;
    let mut series = synth::gen_series(&config, model, a.scale, a.seed)?;
    let mut injections = Vec::new();
    if let Some(p) = &a.emulate {
        let spec: EmulationSpec = io::read_json(p)?;
        let (s, led) = synth::inject_emulation(&series, &spec, a.seed)?;
        series = s;
        injections = led;
    }
    if a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        io::write_csv(&a.out, series.values())?;
    } else {
        io::write_raw(&a.out, series.values())?;
    }
    let truth = Truth { config: &config, noise: model.name(), layout, scale: a.scale, seed: a.seed, injections: &injections };
    io::write_json(&a.truth, &truth)
}

/// FNV-1a over the table recipe.
fn recipe_hash(parts: &[String]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in parts.join("|").bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Default table for `noise`, cached under `dir` by recipe hash.
pub fn cached_table(dir: &Path, noise: &NoiseSpec) -> Result<(LDistTable, PathBuf)> {
    let s = TableSettings::default();
    let alphas: Vec<f64> = parse_list(QUANTILE_ALPHAS_DEFAULT, "alpha")?;
    let recipe = vec![
        format!("{}:{}:{}", s.lo, s.hi, s.step),
        format!("{alphas:?}"),
        s.reps.to_string(),
        s.seed.to_string(),
        noise.label(),
        s.tolerance.to_string(),
    ];
    let path = dir.join(format!("ldist-{:016x}.tsv", recipe_hash(&recipe)));
    if path.exists() {
        return Ok((LDistTable::from_tsv(&std::fs::read_to_string(&path)?)?, path));
    }
    eprintln!("warning: no quantile table given; building {} ({} reps, grid {}:{}:{})", path.display(), s.reps, s.lo, s.hi, s.step);
    let grid = rwdist::snr_grid(s.lo, s.hi, s.step)?;
    let table = LDistTable::build(&grid, &alphas, s.reps, s.seed, noise, s.tolerance)?;
    std::fs::create_dir_all(dir)?;
    write_text(&path, &table.to_tsv())?;
    Ok((table, path))
}

const QUANTILE_ALPHAS_DEFAULT: &str = "0.1,0.05,0.02,0.01,0.005,0.002,0.001,0.0005,0.0002,0.0001";

fn detect(a: &DetectArgs) -> Result<()> {
    let noise = NoiseSpec::from_label(&a.noise)?;
    let config = PipelineConfig {
        stages: a.stages,
        n1: a.n1,
        gamma: a.gamma.unwrap_or(0.5),
        k1: a.k1,
        k: a.k,
        alpha: a.alpha,
        window_alpha: a.window_alpha,
        delta_d: a.delta_d,
        big_delta_d: a.big_delta_d,
        snr_floor: a.snr_floor,
        omit_stage1_points: !a.dependent,
        zeta: a.zeta,
        noise: noise.clone(),
        sigma: a.sigma,
        seed: a.seed,
        timings: a.timings,
        ..PipelineConfig::default()
    };
    config.validate()?;
    let walk_noise = if a.dependent { noise } else { NoiseSpec::iid() };
    let table = match &a.table {
        Some(p) => LDistTable::from_tsv(&std::fs::read_to_string(p)?)?,
        None => cached_table(&a.cache_dir, &walk_noise)?.0,
    };
    let file = SequenceFile::open(&a.input)?;
    let report = pipeline::detect(&file, &config, &table)?;
    write_text(&a.report, &report.to_json()?)
}

fn plan(a: &PlanArgs) -> Result<()> {
    let p = pipeline::plan_allocation(a.n, a.j, a.snr, a.alpha, a.stages, a.reps, a.seed)?;
    println!("{}", serde_json::to_string_pretty(&p)?);
    Ok(())
}

fn quantiles(a: &QuantilesArgs) -> Result<()> {
    let grid = parse_grid(&a.snr_grid)?;
    let alphas: Vec<f64> = parse_list(&a.alphas, "alpha")?;
    let noise = NoiseSpec::from_label(&a.noise)?;
    let table = LDistTable::build(&grid, &alphas, a.reps, a.seed, &noise, a.tolerance)?;
    write_text(&a.out, &table.to_tsv())
}

fn bench(a: &BenchArgs) -> Result<()> {
    let grid = match (&a.grid, a.protocol.as_deref()) {
        (Some(g), _) => parse_list::<usize>(g, "size")?,
        (None, Some("log7")) => experiments::standard_grid(),
        (None, Some(p)) => return invalid(format!("unknown protocol {p:?}")),
        (None, None) => return invalid("give --grid or --protocol"),
    };
    let table = match &a.table {
        Some(p) => LDistTable::from_tsv(&std::fs::read_to_string(p)?)?,
        None => TableSettings { reps: a.table_reps, ..TableSettings::default() }.build(&NoiseSpec::iid())?,
    };
    let (rows, summary) = experiments::run_bench(&grid, a.reps, a.seed, &PipelineConfig::default(), &table)?;
    write_text(&a.out, &experiments::bench_csv(&rows))?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn coverage(a: &CoverageArgs) -> Result<()> {
    let cfg: CoverageConfig = match &a.config {
        Some(p) => io::read_json(p)?,
        None => CoverageConfig::default(),
    };
    let nominals: Vec<f64> = parse_list(&a.nominal, "nominal level")?;
    let walk = if cfg.pipeline.omit_stage1_points { NoiseSpec::iid() } else { cfg.pipeline.noise.clone() };
    let table = cfg.table.build(&walk)?;
    let rows = experiments::run_coverage(&cfg, a.reps, &nominals, &table)?;
    write_text(&a.out, &experiments::coverage_csv(&rows))
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Detect(a) => detect(a),
        Command::Plan(a) => plan(a),
        Command::Quantiles(a) => quantiles(a),
        Command::Bench(a) => bench(a),
        Command::Coverage(a) => coverage(a),
    }
}

/// Exit status for an error: 2 for invalid arguments, 1 for data errors.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Invalid(_) => 2,
        _ => 1,
    }
}

/// Parses `argv`, runs the command and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
