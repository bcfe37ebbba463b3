//! Pipeline commands behind the `volgan` binary.
//!
//! Each `cmd_*` function is what one subcommand runs; they are public so the
//! integration and acceptance tests can drive the pipeline without a process.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use volgan::arbitrage::{audit_surface, ArbitrageReport};
use volgan::datagen::{
    build_dataset, build_harness, export_dataset, import_dataset, price_surfaces, sample_params, HarnessSpec,
    SamplingSpec, SetSurfaces,
};
use volgan::gan::{generate_surface, train, Task, TrainConfig};
use volgan::kv::KvMap;
use volgan::metrics::{reprice_stats, RepriceStats};
use volgan::nn::{load_checkpoint, save_checkpoint, MlpNetwork};
use volgan::ssvi::ssvi_fit;
use volgan::surfaces::{linspace, SurfaceGrid};

/// Environment variable that replaces the built-in default seed of 0.
pub const SEED_ENV: &str = "VOLGAN_SEED";

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_CONVERGENCE: i32 = 5;
pub const EXIT_INTERNAL: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "volgan", version, about = "Synthetic Heston data, arbitrage-penalized GAN volatility surfaces and benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample Heston parameter sets, price and invert their grids, and write the dataset.
    Generate(GenerateArgs),
    /// Train a GAN (or the deep-MLP baseline) on a dataset CSV.
    Train(TrainArgs),
    /// Evaluate a trained generator on an evenly spaced grid.
    Surface(SurfaceArgs),
    /// Count butterfly and calendar violations of an implied-vol surface CSV.
    Audit(AuditArgs),
    /// Compare repricing errors of GAN, baseline, SSVI and FDM on the test harness.
    Benchmark(BenchmarkArgs),
    /// Reprice a price grid from a volatility surface and report the error statistics.
    Reprice(RepriceArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Sampling spec (key = value). The default training ranges when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Target volatility: implied or local.
    #[arg(long, default_value = "implied")]
    pub task: Task,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed of the spec file and of the environment.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config (key = value). Built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset CSV written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Skip the audit of the generated surface on the out-of-training grid.
    #[arg(long)]
    pub no_test_audit: bool,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    /// Generator checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Single-set spec giving the Heston market and the grid ranges; the out-of-training market when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output surface CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the Heston implied-vol grid of the same market here.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Implied-vol surface CSV.
    #[arg(long)]
    pub surface: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub s0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub rate: f64,
    /// Write the report as JSON here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Output directory of a GAN `train` run.
    #[arg(long)]
    pub run: PathBuf,
    /// Output directory of a baseline `train` run.
    #[arg(long)]
    pub baseline_run: Option<PathBuf>,
    /// Number of harness parameter sets.
    #[arg(long, default_value_t = 50)]
    pub sets: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RepriceArgs {
    /// Volatility surface CSV (implied or local).
    #[arg(long)]
    pub vol: PathBuf,
    /// Market price surface CSV on the same axes.
    #[arg(long)]
    pub prices: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub s0: f64,
    /// Per-cell heatmap CSV.
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
}

/// A file written by a run, with its digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Path relative to the run's output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    /// Key = value snapshot of the effective spec or config.
    pub config: String,
    /// Input dataset path as given on the command line, with its digest.
    pub dataset: Option<(String, String)>,
    pub checkpoints: Vec<String>,
    pub report: Option<String>,
    pub files: Vec<FileDigest>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    fn new(command: &str, seed: u64, config: String) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            dataset: None,
            checkpoints: Vec::new(),
            report: None,
            files: Vec::new(),
        }
    }

    fn add_file(&mut self, dir: &Path, rel: &str) -> Result<()> {
        let path = dir.join(rel);
        let bytes = fs::metadata(&path).with_context(|| format!("stat {}", path.display()))?.len();
        self.files.push(FileDigest { path: rel.to_string(), sha256: sha256_file(&path)?, bytes });
        Ok(())
    }

    fn write(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))
            .with_context(|| format!("reading the manifest in {}", dir.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Checks that every listed file exists in `dir` and still has its recorded digest.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for f in &self.files {
            let actual = sha256_file(&dir.join(&f.path))?;
            if actual != f.sha256 {
                bail!("{} changed since the manifest was written", f.path);
            }
        }
        for rel in self.checkpoints.iter().chain(self.report.iter()) {
            if !self.files.iter().any(|f| &f.path == rel) {
                bail!("{rel} is referenced but not listed with a digest");
            }
        }
        Ok(())
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => {
            let seed = v.trim().parse().map_err(|_| volgan::Error::Config(format!("{SEED_ENV}={v} is not a seed")))?;
            Ok(Some(seed))
        }
        Err(_) => Ok(None),
    }
}

/// Seed precedence: command-line flag, then the file's `seed` key, then the
/// environment, then the built-in default.
fn resolve_seed(flag: Option<u64>, file_text: Option<&str>, built_in: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(text) = file_text {
        if KvMap::parse(text)?.contains("seed") {
            return Ok(built_in);
        }
    }
    Ok(env_seed()?.unwrap_or(built_in))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_grid(grid: &SurfaceGrid, path: &Path) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    grid.write_csv(std::io::BufWriter::new(file))?;
    Ok(())
}

fn read_grid(path: &Path) -> Result<SurfaceGrid> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(SurfaceGrid::read_csv(std::io::BufReader::new(file))?)
}

/// Summary of a `generate` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub rows: usize,
    pub sets: usize,
    pub dropped_cells: usize,
    pub rejected_sets: Vec<usize>,
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<GenerateSummary> {
    let text = args.spec.as_deref().map(read_text).transpose()?;
    let mut spec = match &text {
        Some(t) => SamplingSpec::from_kv(t)?,
        None => SamplingSpec::training(),
    };
    spec.seed = resolve_seed(args.seed, text.as_deref(), spec.seed)?;
    spec.validate()?;
    prepare_dir(&args.out)?;
    let surf_dir = args.out.join("surfaces");
    prepare_dir(&surf_dir)?;

    log::info!("generating {} parameter sets ({} task, seed {})", spec.n_param_sets, args.task, spec.seed);
    let data = build_dataset(&spec, args.task)?;
    let mut manifest = RunManifest::new("generate", spec.seed, spec.to_kv());
    fs::write(args.out.join("spec.kv"), spec.to_kv())?;
    manifest.add_file(&args.out, "spec.kv")?;
    export_dataset(&data.dataset, &args.out.join("dataset.csv"))?;
    manifest.add_file(&args.out, "dataset.csv")?;
    for set in &data.sets {
        let mut grids = vec![("prices", &set.prices), ("implied", &set.implied)];
        if let Some(local) = &set.local {
            grids.push(("local", local));
        }
        for (name, grid) in grids {
            let rel = format!("surfaces/set_{:03}_{name}.csv", set.index);
            write_grid(grid, &args.out.join(&rel))?;
            manifest.add_file(&args.out, &rel)?;
        }
    }
    manifest.write(&args.out)?;
    Ok(GenerateSummary {
        rows: data.dataset.len(),
        sets: data.sets.len(),
        dropped_cells: data.dropped_cells(),
        rejected_sets: data.rejected_sets,
    })
}

/// Out-of-training surface audit of an implied-vol generator.
fn test_grid_audit(gen: &MlpNetwork, task: Task) -> Result<Option<ArbitrageReport>> {
    if task != Task::Implied {
        return Ok(None);
    }
    let set = volgan::datagen::out_of_training_surfaces(false)?;
    let grid = generate_surface(gen, task, &set.implied.strikes, &set.implied.maturities, &set.context(task))?;
    Ok(Some(audit_surface(&grid, 1.0, set.params.r)?))
}

pub const GENERATOR_CHECKPOINT: &str = "generator.json";
pub const DISCRIMINATOR_CHECKPOINT: &str = "discriminator.json";
pub const REPORT_FILE: &str = "report.json";

pub fn cmd_train(args: &TrainArgs) -> Result<volgan::gan::TrainReport> {
    let text = args.config.as_deref().map(read_text).transpose()?;
    let mut cfg = match &text {
        Some(t) => TrainConfig::from_kv(t)?,
        None => TrainConfig::default(),
    };
    cfg.seed = resolve_seed(args.seed, text.as_deref(), cfg.seed)?;
    cfg.validate()?;
    let dataset = import_dataset(&args.data).with_context(|| format!("importing {}", args.data.display()))?;
    if dataset.is_empty() {
        return Err(volgan::Error::InvalidInput(format!("{} holds no rows", args.data.display())).into());
    }
    if dataset.task != cfg.task {
        return Err(volgan::Error::Config(format!(
            "dataset is for the {} task but the config trains {}",
            dataset.task, cfg.task
        ))
        .into());
    }
    prepare_dir(&args.out)?;
    log::info!("training on {} rows for {} epochs (seed {})", dataset.len(), cfg.epochs, cfg.seed);
    let mut outcome = train(&dataset, &cfg)?;
    if !args.no_test_audit {
        outcome.report.test_audit = test_grid_audit(&outcome.generator, cfg.task)?;
    }

    let mut manifest = RunManifest::new("train", cfg.seed, cfg.to_kv());
    manifest.dataset = Some((args.data.display().to_string(), sha256_file(&args.data)?));
    fs::write(args.out.join("config.kv"), cfg.to_kv())?;
    manifest.add_file(&args.out, "config.kv")?;
    save_checkpoint(&args.out.join(GENERATOR_CHECKPOINT), "generator", &outcome.generator)?;
    manifest.add_file(&args.out, GENERATOR_CHECKPOINT)?;
    manifest.checkpoints.push(GENERATOR_CHECKPOINT.into());
    if let Some(d) = &outcome.discriminator {
        save_checkpoint(&args.out.join(DISCRIMINATOR_CHECKPOINT), "discriminator", d)?;
        manifest.add_file(&args.out, DISCRIMINATOR_CHECKPOINT)?;
        manifest.checkpoints.push(DISCRIMINATOR_CHECKPOINT.into());
    }
    fs::write(args.out.join(REPORT_FILE), serde_json::to_string_pretty(&outcome.report)? + "\n")?;
    manifest.add_file(&args.out, REPORT_FILE)?;
    manifest.report = Some(REPORT_FILE.into());
    manifest.write(&args.out)?;
    Ok(outcome.report)
}

fn load_generator(path: &Path) -> Result<(MlpNetwork, Task)> {
    let ckpt = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
    let task = Task::from_feature_dim(ckpt.network.input_dim())?;
    Ok((ckpt.network, task))
}

/// The single market and evenly spaced grid a `surface` spec describes.
fn surface_market(spec: &SamplingSpec, with_local: bool) -> Result<SetSurfaces> {
    spec.validate()?;
    let params = sample_params(&SamplingSpec { n_param_sets: 1, ..spec.clone() })?;
    let strikes = linspace(spec.moneyness.lo, spec.moneyness.hi, spec.n_strikes);
    let maturities = linspace(spec.maturity.lo, spec.maturity.hi, spec.n_maturities);
    Ok(price_surfaces(0, &params[0], &strikes, &maturities, with_local)?)
}

pub fn cmd_surface(args: &SurfaceArgs) -> Result<SurfaceGrid> {
    let (gen, task) = load_generator(&args.checkpoint)?;
    let spec = match &args.spec {
        Some(p) => SamplingSpec::from_kv(&read_text(p)?)?,
        None => SamplingSpec::out_of_training(),
    };
    let market = surface_market(&spec, false)?;
    let grid = generate_surface(&gen, task, &market.implied.strikes, &market.implied.maturities, &market.context(task))?;
    write_grid(&grid, &args.out)?;
    if let Some(r) = &args.reference {
        write_grid(&market.implied, r)?;
    }
    Ok(grid)
}

pub fn cmd_audit(args: &AuditArgs) -> Result<ArbitrageReport> {
    let grid = read_grid(&args.surface)?;
    let report = audit_surface(&grid, args.s0, args.rate)?;
    if let Some(out) = &args.out {
        fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(report)
}

pub fn cmd_reprice(args: &RepriceArgs) -> Result<RepriceStats> {
    let vol = read_grid(&args.vol)?;
    let prices = read_grid(&args.prices)?;
    let stats = reprice_stats(&[vol], &[prices], &[args.rate], args.s0)?;
    if let Some(h) = &args.heatmap {
        let file = fs::File::create(h).with_context(|| format!("creating {}", h.display()))?;
        stats.write_heatmap_csv(std::io::BufWriter::new(file))?;
    }
    Ok(stats)
}

/// One row of the benchmark comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub method: String,
    /// Training time for learned methods; total fitting or extraction time otherwise.
    pub seconds: f64,
    pub max_arpe: f64,
    pub std_at_max_arpe: f64,
    pub max_mrpe: f64,
    pub cells: usize,
}

fn bench_row(method: &str, seconds: f64, stats: &RepriceStats) -> BenchmarkRow {
    BenchmarkRow {
        method: method.to_string(),
        seconds,
        max_arpe: stats.max_arpe,
        std_at_max_arpe: stats.std_at_max_arpe,
        max_mrpe: stats.max_mrpe,
        cells: stats.samples.iter().sum(),
    }
}

/// Strikes of the auxiliary grid SSVI is calibrated on; it contains the money
/// strike, which the harness axis 0.5, 0.7, … skips.
fn ssvi_strikes() -> Vec<f64> {
    linspace(0.5, 2.5, 21)
}

/// Generated surfaces of a trained run on every harness set.
fn run_surfaces(run: &Path, sets: &[SetSurfaces]) -> Result<(Vec<SurfaceGrid>, f64)> {
    let (gen, task) = load_generator(&run.join(GENERATOR_CHECKPOINT))?;
    let seconds = match fs::read_to_string(run.join(REPORT_FILE)) {
        Ok(text) => serde_json::from_str::<volgan::gan::TrainReport>(&text)?.wall_clock_seconds,
        Err(_) => f64::NAN,
    };
    let grids = sets
        .iter()
        .map(|s| generate_surface(&gen, task, &s.implied.strikes, &s.implied.maturities, &s.context(task)))
        .collect::<volgan::Result<Vec<_>>>()?;
    Ok((grids, seconds))
}

pub fn harness_comparison(
    sets: &[SetSurfaces],
    run: &Path,
    baseline_run: Option<&Path>,
) -> Result<Vec<(BenchmarkRow, RepriceStats)>> {
    let markets: Vec<SurfaceGrid> = sets.iter().map(|s| s.prices.clone()).collect();
    let rates: Vec<f64> = sets.iter().map(|s| s.params.r).collect();
    let mut rows = Vec::new();

    let (grids, secs) = run_surfaces(run, sets)?;
    let stats = reprice_stats(&grids, &markets, &rates, 1.0)?;
    rows.push((bench_row("GAN", secs, &stats), stats));

    if let Some(b) = baseline_run {
        let (grids, secs) = run_surfaces(b, sets)?;
        let stats = reprice_stats(&grids, &markets, &rates, 1.0)?;
        rows.push((bench_row("baseline MLP", secs, &stats), stats));
    }

    let started = Instant::now();
    let mut ssvi_grids = Vec::with_capacity(sets.len());
    for s in sets {
        let aux = price_surfaces(s.index, &s.params, &ssvi_strikes(), &s.implied.maturities, false)?;
        let fit = ssvi_fit(&aux.implied, 1.0)?;
        ssvi_grids.push(fit.implied_vol_grid(1.0, &s.implied.strikes, &s.implied.maturities)?);
    }
    let stats = reprice_stats(&ssvi_grids, &markets, &rates, 1.0)?;
    rows.push((bench_row("SSVI", started.elapsed().as_secs_f64(), &stats), stats));

    let started = Instant::now();
    let fdm: Vec<SurfaceGrid> = sets
        .iter()
        .map(|s| match &s.local {
            Some(l) => Ok(l.clone()),
            None => volgan::surfaces::dupire_fdm(&s.prices, s.params.r),
        })
        .collect::<volgan::Result<Vec<_>>>()?;
    let stats = reprice_stats(&fdm, &markets, &rates, 1.0)?;
    rows.push((bench_row("FDM", started.elapsed().as_secs_f64(), &stats), stats));
    Ok(rows)
}

pub fn cmd_benchmark(args: &BenchmarkArgs) -> Result<Vec<BenchmarkRow>> {
    let seed = resolve_seed(args.seed, None, 0)?;
    if args.sets == 0 {
        return Err(volgan::Error::Config("--sets must be at least 1".into()).into());
    }
    prepare_dir(&args.out)?;
    log::info!("building the {}-set repricing harness (seed {seed})", args.sets);
    let sets = build_harness(&HarnessSpec::new(args.sets, seed))?;
    let results = harness_comparison(&sets, &args.run, args.baseline_run.as_deref())?;

    let mut manifest = RunManifest::new("benchmark", seed, format!("sets = {}\nseed = {seed}\n", args.sets));
    let mut table = String::from("method,seconds,max_arpe,std_at_max_arpe,max_mrpe,cells\n");
    for (row, stats) in &results {
        table.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.method, row.seconds, row.max_arpe, row.std_at_max_arpe, row.max_mrpe, row.cells
        ));
        let rel = format!("heatmap_{}.csv", row.method.replace(' ', "_").to_lowercase());
        let file = fs::File::create(args.out.join(&rel))?;
        stats.write_heatmap_csv(std::io::BufWriter::new(file))?;
        manifest.add_file(&args.out, &rel)?;
    }
    fs::write(args.out.join("benchmark.csv"), &table)?;
    manifest.add_file(&args.out, "benchmark.csv")?;
    manifest.report = Some("benchmark.csv".into());
    manifest.write(&args.out)?;
    Ok(results.into_iter().map(|(r, _)| r).collect())
}

/// Exit status for a failed command, chosen from the innermost library error.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use volgan::Error as E;
    if err.chain().any(|c| c.downcast_ref::<clap::Error>().is_some()) {
        return EXIT_USAGE;
    }
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<E>()) else {
        return if err.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some()) { EXIT_DATA } else { EXIT_INTERNAL };
    };
    match e {
        E::Config(_) | E::InvalidInput(_) => EXIT_USAGE,
        E::Parse { .. } | E::Io(_) | E::Json(_) | E::Shape(_) => EXIT_DATA,
        E::NumericOverflow(_) | E::NonFinite(_) | E::Domain(_) | E::InvalidPrice { .. } => EXIT_NUMERIC,
        E::Convergence(_) | E::Bracket { .. } | E::Fit(_) => EXIT_CONVERGENCE,
        E::State(_) => EXIT_INTERNAL,
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Runs one parsed command, printing its summary to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => print_json(&cmd_generate(&a)?),
        Command::Train(a) => {
            let r = cmd_train(&a)?;
            println!(
                "validation MAE {:.4e}  MAPE {:.4}%  train/val violations {}/{} butterfly, {}/{} calendar",
                r.val_mae,
                100.0 * r.val_mape,
                r.train_violations.butterfly_violations,
                r.validation_violations.butterfly_violations,
                r.train_violations.calendar_violations,
                r.validation_violations.calendar_violations
            );
            if let Some(t) = r.test_audit {
                println!(
                    "test grid: {}/{} butterfly, {}/{} calendar",
                    t.butterfly_violations, t.total_cells, t.calendar_violations, t.total_cells
                );
            }
            Ok(())
        }
        Command::Surface(a) => {
            let g = cmd_surface(&a)?;
            println!("wrote {} × {} {} surface to {}", g.n_strikes(), g.n_maturities(), g.kind, a.out.display());
            Ok(())
        }
        Command::Audit(a) => print_json(&cmd_audit(&a)?),
        Command::Benchmark(a) => {
            let rows = cmd_benchmark(&a)?;
            println!("{:<14} {:>10} {:>22} {:>10}", "method", "seconds", "max ARPE ± std", "MRPE");
            for r in rows {
                println!(
                    "{:<14} {:>10.2} {:>12.4}% ± {:.4}% {:>9.4}%",
                    r.method,
                    r.seconds,
                    100.0 * r.max_arpe,
                    100.0 * r.std_at_max_arpe,
                    100.0 * r.max_mrpe
                );
            }
            Ok(())
        }
        Command::Reprice(a) => {
            let s = cmd_reprice(&a)?;
            print_json(&serde_json::json!({
                "max_arpe": s.max_arpe,
                "std_at_max_arpe": s.std_at_max_arpe,
                "max_mrpe": s.max_mrpe,
                "zero_price_cells": s.zero_price_cells,
            }))
        }
    }
}
