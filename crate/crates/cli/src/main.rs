use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use hpca_core::calibrate::{CalibrationResult, CorrelationKind};
use hpca_core::engine::backtest::{decide_window, run_backtest, BacktestConfig, BaselineMethod, Strategy};
use hpca_core::engine::data::{ingest_csv, PricePanel, SimulationSpec};
use hpca_core::engine::report::{load_run, write_report, Format};
use hpca_core::selector::Mode;
use hpca_core::tracking::U2Mode;

#[derive(Parser)]
#[command(name = "hpca", version, about = "Index tracking by hybrid principal component selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the skew-normal models over one estimation window.
    Calibrate(CalibrateArgs),
    /// Select a K-asset tracking portfolio from one estimation window.
    Select(SelectArgs),
    /// Run the rolling-window backtest and write a report directory.
    Backtest(BacktestArgs),
    /// Simulate a correlated skew universe and write it as a price CSV.
    Simulate(SimulateArgs),
    /// Regenerate report files from a backtest output directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct WindowArgs {
    /// Price CSV: `date,<benchmark>,<ticker>...`.
    csv: PathBuf,
    /// One-based window number; the window ending at the last row by default.
    #[arg(long)]
    window: Option<usize>,
    /// Estimation window length L in returns.
    #[arg(long, short = 'L', default_value_t = 52)]
    length: usize,
    #[arg(long, default_value = "spearman", value_parser = kebab::<CorrelationKind>)]
    correlation: CorrelationKind,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    window: WindowArgs,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    window: WindowArgs,
    #[arg(long, default_value = "skew", value_parser = parse_mode)]
    mode: Mode,
    /// Portfolio cardinality.
    #[arg(short = 'K', long = "k", default_value_t = 10)]
    k: usize,
    #[arg(long, default_value = "expectation", value_parser = kebab::<U2Mode>)]
    u2_mode: U2Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BacktestArgs {
    csv: PathBuf,
    /// JSON or TOML file with backtest settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sector price CSV with the same dates as the main file.
    #[arg(long)]
    sectors: Option<PathBuf>,
    #[arg(long, default_value = "hpca-out")]
    out: PathBuf,
    /// Output formats besides run.json.
    #[arg(long, value_delimiter = ',', default_value = "json,csv,svg", value_parser = parse_format)]
    format: Vec<Format>,
    #[arg(long, short = 'L')]
    window: Option<usize>,
    #[arg(short = 'K', long = "k")]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_strategy)]
    strategies: Option<Vec<Strategy>>,
    #[arg(long, value_parser = kebab::<U2Mode>)]
    u2_mode: Option<U2Mode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = kebab::<CorrelationKind>)]
    correlation: Option<CorrelationKind>,
    #[arg(long, value_parser = kebab::<BaselineMethod>)]
    baseline_method: Option<BaselineMethod>,
    /// Calibration failures tolerated before aborting with exit code 3.
    #[arg(long)]
    max_failed_windows: Option<usize>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON simulation spec.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    run_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "svg", value_parser = parse_format)]
    format: Vec<Format>,
}

fn kebab<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse().map_err(|e: hpca_core::Error| e.to_string())
}

fn parse_format(s: &str) -> std::result::Result<Format, String> {
    s.parse().map_err(|e: hpca_core::Error| e.to_string())
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    s.parse().map_err(|e: hpca_core::Error| e.to_string())
}

/// Marks errors caused by bad user input (exit code 2).
#[derive(Debug)]
struct InputError;

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("invalid input")
    }
}

impl std::error::Error for InputError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use hpca_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::CalibrationBudget { .. } | E::Calibration { .. } => 3,
                E::SolverBudget(_) => 4,
                E::Domain(_) | E::Input(_) | E::Dimension { .. } | E::Degenerate(_) | E::Format { .. } | E::Io { .. } | E::Json(_) => 2,
            };
        }
        if cause.is::<InputError>() || cause.is::<serde_json::Error>() || cause.is::<toml::de::Error>() || cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Zero-based start of the requested estimation window.
fn window_start(panel: &PricePanel, number: Option<usize>, length: usize) -> Result<usize> {
    let last = panel.n_returns().checked_sub(length).ok_or(InputError).with_context(|| {
        format!("window length {length} exceeds the {} available returns", panel.n_returns())
    })?;
    match number {
        None => Ok(last),
        Some(0) => Err(InputError).context("window numbers start at 1"),
        Some(w) if w - 1 > last => Err(InputError).context(format!("window {w} is past the last window {}", last + 1)),
        Some(w) => Ok(w - 1),
    }
}

#[derive(Serialize)]
struct CalibrationOutput<'a> {
    window: usize,
    date: String,
    benchmark: &'a str,
    tickers: Vec<&'a str>,
    calibration: CalibrationResult,
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    let w = &args.window;
    let panel = ingest_csv(&w.csv)?;
    let tau = window_start(&panel, w.window, w.length)?;
    let cfg = BacktestConfig {
        window: w.length,
        k: 1,
        strategies: vec![Strategy::HpcaSkew],
        correlation: w.correlation,
        ..Default::default()
    };
    let d = decide_window(&panel, &cfg, tau, None)?;
    print_json(&CalibrationOutput {
        window: tau + 1,
        date: panel.dates[tau + w.length].to_string(),
        benchmark: &panel.benchmark_name,
        tickers: d.universe.iter().map(|&i| panel.assets.names[i].as_str()).collect(),
        calibration: d.calibration,
    })
}

#[derive(Serialize)]
struct SelectionOutput<'a> {
    window: usize,
    date: String,
    mode: Mode,
    tickers: Vec<&'a str>,
    weights: Vec<f64>,
    te_ex_post: f64,
    te_ex_ante: f64,
    forecast: f64,
    excluded: usize,
}

fn select(args: SelectArgs) -> Result<()> {
    let w = &args.window;
    let panel = ingest_csv(&w.csv)?;
    let tau = window_start(&panel, w.window, w.length)?;
    let strategy = if args.mode.is_skew() { Strategy::HpcaSkew } else { Strategy::HpcaNormal };
    let cfg = BacktestConfig {
        window: w.length,
        k: args.k,
        strategies: vec![strategy],
        correlation: w.correlation,
        u2_mode: args.u2_mode,
        seed: args.seed,
        ..Default::default()
    };
    if args.k == 0 {
        return Err(InputError).context("K must be at least 1");
    }
    let d = decide_window(&panel, &cfg, tau, None)?;
    let Some(choice) = d.decisions.first() else {
        return Err(InputError).context(d.notes.join("; "));
    };
    print_json(&SelectionOutput {
        window: tau + 1,
        date: panel.dates[tau + w.length].to_string(),
        mode: args.mode,
        tickers: choice.selected.iter().map(|&i| panel.assets.names[i].as_str()).collect(),
        weights: choice.weights.clone(),
        te_ex_post: choice.te_ex_post,
        te_ex_ante: choice.te_ex_ante,
        forecast: choice.forecast,
        excluded: panel.n_assets() - d.universe.len(),
    })
}

fn read_config(path: &Path) -> Result<BacktestConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let cfg = if is_toml {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(cfg)
}

fn backtest(args: BacktestArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => read_config(p)?,
        None => BacktestConfig::default(),
    };
    if let Some(v) = args.window {
        cfg.window = v;
    }
    if let Some(v) = args.k {
        cfg.k = v;
    }
    if let Some(v) = args.strategies {
        cfg.strategies = v;
    }
    if let Some(v) = args.u2_mode {
        cfg.u2_mode = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.correlation {
        cfg.correlation = v;
    }
    if let Some(v) = args.baseline_method {
        cfg.baseline_method = v;
    }
    if args.max_failed_windows.is_some() {
        cfg.max_failed_windows = args.max_failed_windows;
    }
    if args.cache_dir.is_some() {
        cfg.cache_dir = args.cache_dir;
    }

    let mut panel = ingest_csv(&args.csv)?;
    if let Some(s) = &args.sectors {
        panel.attach_sectors(s)?;
    }
    let report = run_backtest(&panel, &cfg)?;
    let files = write_report(&report, &args.out, &args.format)?;
    for note in &report.aggregates.notes {
        eprintln!("note: {note}");
    }
    eprintln!(
        "{} windows, run {} -> {}",
        report.aggregates.windows,
        &report.run_hash[..12.min(report.run_hash.len())],
        args.out.display()
    );
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let spec: SimulationSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", args.spec.display()))?;
    let panel = spec.simulate()?;
    panel.write_csv(&args.out)?;
    eprintln!("{} rows, {} assets -> {}", panel.dates.len(), panel.n_assets(), args.out.display());
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let run = load_run(&args.run_dir)?;
    for f in write_report(&run, &args.run_dir, &args.format)? {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Select(a) => select(a),
        Command::Backtest(a) => backtest(a),
        Command::Simulate(a) => simulate(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
