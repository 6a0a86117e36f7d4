//! `otfs` - BER simulation, complexity benchmarking and verification for
//! block-circulant OTFS equalization.
//!
//! Exit codes: 0 success, 1 verification/property failure, 2 usage or
//! configuration error, 3 numerical failure.

mod config;
mod verify;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use otfs_core::channel::{build_time_domain, draw_realization, write_channel};
use otfs_core::sim::{
    complexity_report, headline_ratios, run_ber_sweep, BerRecord, ComplexityRow, SimConfig,
};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

/// Dense baseline rows in `bench` are measured only up to this NM (their
/// cost grows with the cube of NM); larger rows are marked skipped.
const BENCH_DENSE_NM_LIMIT: usize = 1024;

#[derive(Parser)]
#[command(name = "otfs", version, about = "OTFS linear equalization toolkit")]
struct Cli {
    /// Print resolved parameters and per-step diagnostics to stderr
    #[arg(long, short, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo BER sweep and emit a CSV of per-SNR results
    Simulate(SimulateArgs),
    /// Measure equalizer build costs across grid sizes and emit a CSV
    Bench(BenchArgs),
    /// Run the oracle-equivalence verification suite
    Verify(VerifyArgs),
    /// Draw one channel realization and export it as a plain-text record
    ExportChannel(ExportChannelArgs),
}

#[derive(Args)]
struct CommonConfig {
    /// Configuration file (key = value lines; a result CSV also works)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Override the RNG seed
    #[arg(long)]
    seed: Option<u64>,
}

impl CommonConfig {
    fn load(&self) -> Result<SimConfig> {
        let text = match &self.config {
            Some(path) => std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => String::new(),
        };
        let mut draft = config::parse_config_text(&text)?;
        for pair in &self.set {
            draft.apply_override(pair)?;
        }
        let mut cfg = draft.finish()?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonConfig,
    /// Output CSV path (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the frame loop (results are identical either way)
    #[arg(long)]
    jobs: Option<usize>,
    /// Acknowledge a heavy run (suppresses the runtime warning)
    #[arg(long)]
    full_scale: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonConfig,
    /// Output CSV path (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Wall-clock repetitions per measurement (median is reported)
    #[arg(long, default_value_t = 5)]
    reps: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// List the property names without running them
    #[arg(long)]
    list: bool,
    /// Inject a known fault to confirm the suite catches it
    #[arg(long, value_name = "FAULT")]
    inject_fault: Option<String>,
}

#[derive(Args)]
struct ExportChannelArgs {
    #[command(flatten)]
    common: CommonConfig,
    /// Output path (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbose = cli.verbose;
    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(args, verbose),
        Command::Bench(args) => cmd_bench(args, verbose),
        Command::Verify(args) => cmd_verify(args),
        Command::ExportChannel(args) => cmd_export_channel(args, verbose),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            classify(&err)
        }
    }
}

/// Map an error chain onto the exit-code contract.
fn classify(err: &anyhow::Error) -> ExitCode {
    if let Some(core) = err.downcast_ref::<otfs_core::Error>() {
        if core.is_numerical_breakdown() {
            return ExitCode::from(3);
        }
    }
    ExitCode::from(2)
}

fn open_sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        ),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn cmd_simulate(args: SimulateArgs, verbose: bool) -> Result<ExitCode> {
    let cfg = args.common.load()?;
    if verbose {
        describe(&cfg);
    }
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring worker threads")?;
    }
    if !args.full_scale {
        if let Some(total) = heavy_run_estimate(&cfg) {
            eprintln!(
                "warning: this sweep is estimated at roughly {total:.1e} complex multiplies; \
                 it will proceed, pass --full-scale to silence this note"
            );
        }
    }
    let records = run_ber_sweep(&cfg)?;
    if verbose {
        for r in &records {
            eprintln!(
                "{} @ {} dB: ber {:.4e} ({} errors / {} bits, {} skipped)",
                r.equalizer,
                r.snr_db,
                r.ber(),
                r.errors,
                r.bits,
                r.skipped
            );
        }
    }
    let mut sink = open_sink(&args.out)?;
    write_sim_csv(&cfg, &records, &mut sink)?;
    Ok(ExitCode::SUCCESS)
}

/// One-line summary of the resolved experiment, for --verbose.
fn describe(cfg: &SimConfig) {
    match cfg.resolve() {
        Ok((grid, profile)) => eprintln!(
            "grid M={} N={} delta_f={} Hz; profile P={} d={:?} cp={}; f_max={} Hz; \
             {} frames x {} SNR points, seed {}",
            grid.m(),
            grid.n(),
            grid.delta_f(),
            profile.path_count(),
            profile.positions(),
            profile.cp_len(),
            cfg.f_max_hz,
            cfg.frames,
            cfg.snr_db.len(),
            cfg.seed
        ),
        Err(e) => eprintln!("unresolvable config: {e}"),
    }
}

/// Rough multiply estimate for a sweep; `Some` when worth warning about.
fn heavy_run_estimate(cfg: &SimConfig) -> Option<f64> {
    let (grid, profile) = cfg.resolve().ok()?;
    let (m, n) = (grid.m() as f64, grid.n() as f64);
    let dp = profile.max_position() as f64;
    let p = profile.path_count() as f64;
    let per_frame: f64 = cfg
        .equalizers
        .iter()
        .map(|e| match e {
            otfs_core::sim::EqualizerKind::ZfLow => {
                3.0 * m * m * n * n.log2().max(1.0) + 2.0 * n * m * m * dp
            }
            otfs_core::sim::EqualizerKind::MmseLow => {
                3.0 * m * m * n * n.log2().max(1.0) + m * m * n * n * p + 1.5 * n * m * m * m
            }
            _ => 2.5 * (n * m).powi(3),
        })
        .sum();
    let total = per_frame * cfg.frames as f64 * cfg.snr_db.len() as f64;
    (total > 1e11).then_some(total)
}

fn write_sim_csv(cfg: &SimConfig, records: &[BerRecord], out: &mut impl Write) -> Result<()> {
    for line in config::echo_lines(cfg) {
        writeln!(out, "{line}")?;
    }
    writeln!(out, "equalizer,snr_db,bits,errors,ber,frames,skipped,wall_ms,mult_count")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{:.6e},{},{},{:.3},{}",
            r.equalizer,
            r.snr_db,
            r.bits,
            r.errors,
            r.ber(),
            r.frames,
            r.skipped,
            r.wall_ms,
            r.mult_count
        )?;
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs, verbose: bool) -> Result<ExitCode> {
    let cfg = args.common.load()?;
    if verbose {
        eprintln!("size grid {{8,16,32,64}}^2, {} wall repetitions, seed {}", args.reps, cfg.seed);
    }
    let sizes = [8usize, 16, 32, 64];
    let dims: Vec<(usize, usize)> =
        sizes.iter().flat_map(|&m| sizes.iter().map(move |&n| (m, n))).collect();
    let rows = complexity_report(&dims, cfg.seed, args.reps, BENCH_DENSE_NM_LIMIT)?;
    let mut sink = open_sink(&args.out)?;
    write_bench_csv(&rows, &mut sink)?;
    let (zf, mmse) = headline_ratios(32, 32, 6);
    writeln!(sink, "# headline M=N=32 P=6: direct/zf_low = {zf:.1}x, direct/mmse_low = {mmse:.1}x")?;
    eprintln!(
        "headline analytic ratios at M=N=32, P=6: {zf:.0}x for ZF, {mmse:.0}x for MMSE"
    );
    Ok(ExitCode::SUCCESS)
}

fn write_bench_csv(rows: &[ComplexityRow], out: &mut impl Write) -> Result<()> {
    writeln!(out, "scheme,m,n,p,mult_count,wall_ms,analytic")?;
    for r in rows {
        let count = match r.mult_count {
            Some(c) => c.to_string(),
            None => "skipped (guard)".to_string(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{:.3},{:.0}",
            r.scheme, r.m, r.n, r.p, count, r.wall_ms, r.analytic
        )?;
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode> {
    if args.list {
        for name in verify::PROPERTIES {
            println!("{name}");
        }
        return Ok(ExitCode::SUCCESS);
    }
    let fault = match args.inject_fault.as_deref() {
        None => None,
        Some("mmse-index-sign") => Some(verify::Fault::MmseIndexSign),
        Some(other) => anyhow::bail!("unknown fault '{other}' (available: mmse-index-sign)"),
    };
    if verify::run_all(fault) {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_export_channel(args: ExportChannelArgs, verbose: bool) -> Result<ExitCode> {
    let cfg = args.common.load()?;
    let (grid, profile) = cfg.resolve()?;
    if verbose {
        describe(&cfg);
    }
    let realization = draw_realization(&profile, cfg.f_max_hz, cfg.seed);
    let channel = build_time_domain(&realization, &profile, grid)?;
    let mut sink = open_sink(&args.out)?;
    write_channel(&channel, &mut sink)?;
    Ok(ExitCode::SUCCESS)
}
