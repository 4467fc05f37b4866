//! Rolling-window backtest of the four tracking strategies.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::PricePanel;
use super::metrics::{mape, over_performance, win_rate, IntervalPerformance, Mape};
use crate::baselines::{binomial, solve_cardinality, solve_simplex_qp, CardinalityMethod, CardinalityProblem, SimplexQP, ENUMERATION_BUDGET};
use crate::calibrate::{calibrate_window, CalibrationCache, CalibrationResult, CorrelationKind, WindowData};
use crate::error::{Error, Result};
use crate::pcf::{ComponentShapes, PairCov};
use crate::selector::{select_available, Mode};
use crate::skewdist::delta;
use crate::tracking::{
    forecast_return, te_ex_ante, te_ex_post, u2_expectation, u2_filtered, AssetModel, BenchmarkModel, MarketModel, U2Mode, Weights,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    HpcaSkew,
    HpcaNormal,
    Baseline,
    Practitioner,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::HpcaSkew, Strategy::HpcaNormal, Strategy::Baseline, Strategy::Practitioner];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::HpcaSkew => "hpca-skew",
            Strategy::HpcaNormal => "hpca-normal",
            Strategy::Baseline => "baseline",
            Strategy::Practitioner => "practitioner",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMethod {
    /// Exact enumeration when within budget, greedy otherwise.
    #[default]
    Auto,
    Exact,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    /// In-sample window length L.
    #[serde(alias = "L")]
    pub window: usize,
    /// Portfolio cardinality K.
    #[serde(alias = "K")]
    pub k: usize,
    pub strategies: Vec<Strategy>,
    pub u2_mode: U2Mode,
    pub seed: u64,
    pub correlation: CorrelationKind,
    pub baseline_method: BaselineMethod,
    pub component_shapes: ComponentShapes,
    pub annualization: f64,
    /// Window count per over-performance interval.
    pub interval: usize,
    /// Calibration failures tolerated before the run aborts.
    pub max_failed_windows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window: 52,
            k: 10,
            strategies: Strategy::ALL.to_vec(),
            u2_mode: U2Mode::Expectation,
            seed: 0,
            correlation: CorrelationKind::Spearman,
            baseline_method: BaselineMethod::Auto,
            component_shapes: ComponentShapes::AssetShape,
            annualization: 52.0,
            interval: 100,
            max_failed_windows: None,
            cache_dir: None,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self, panel: &PricePanel) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Input("no strategies selected".into()));
        }
        if self.k == 0 {
            return Err(Error::Input("cardinality must be at least 1".into()));
        }
        if self.window < crate::calibrate::MIN_WINDOW {
            return Err(Error::Input(format!(
                "window length {} is below the minimum of {}",
                self.window,
                crate::calibrate::MIN_WINDOW
            )));
        }
        if self.window >= panel.n_returns() {
            return Err(Error::Input(format!(
                "window length {} must be below the {} available returns",
                self.window,
                panel.n_returns()
            )));
        }
        if self.interval == 0 || !(self.annualization > 0.0) {
            return Err(Error::Input("interval and annualization must be positive".into()));
        }
        Ok(())
    }
}

/// Portfolio chosen by one strategy in one window, with its model-based
/// diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub strategy: Strategy,
    /// Indices into the asset block (sector block for the practitioner).
    pub selected: Vec<usize>,
    pub weights: Vec<f64>,
    pub te_ex_post: f64,
    pub te_ex_ante: f64,
    pub forecast: f64,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowDecisions {
    /// Zero-based window index; in-sample returns tau..tau+L-1.
    pub tau: usize,
    pub calibration: CalibrationResult,
    /// Asset indices used in the window (complete data).
    pub universe: Vec<usize>,
    pub sectors: Vec<usize>,
    pub u2_b: f64,
    pub decisions: Vec<Decision>,
    /// Strategy-level problems (insufficient assets, skipped strategies).
    pub notes: Vec<String>,
    #[serde(skip)]
    pub calibration_seconds: f64,
}

fn window_returns(prices: &[Option<f64>], start: usize, len: usize) -> Option<Vec<f64>> {
    (start..start + len)
        .map(|t| match (prices[t], prices[t + 1]) {
            (Some(a), Some(b)) => Some((b / a).ln()),
            _ => None,
        })
        .collect()
}

fn bench_window(panel: &PricePanel, start: usize, len: usize) -> Vec<f64> {
    (start..start + len).map(|t| (panel.benchmark[t + 1] / panel.benchmark[t]).ln()).collect()
}

fn restricted(model: &MarketModel, idx: &[usize], base: &[AssetModel]) -> MarketModel {
    MarketModel {
        benchmark: model.benchmark,
        assets: idx.iter().map(|&i| base[i]).collect(),
        u2_b: model.u2_b,
        elapsed: model.elapsed,
    }
}

fn evaluate(strategy: Strategy, model: &MarketModel, base: &[AssetModel], local: &[usize], weights: &[f64], selected: Vec<usize>, seconds: f64) -> Result<Decision> {
    let m = restricted(model, local, base);
    let w = Weights(weights.to_vec());
    Ok(Decision {
        strategy,
        selected,
        weights: weights.to_vec(),
        te_ex_post: te_ex_post(&m, &w)?,
        te_ex_ante: te_ex_ante(&m, &w)?,
        forecast: forecast_return(&m, &w)?,
        seconds,
    })
}

fn cardinality_method(cfg: &BacktestConfig, n: usize) -> CardinalityMethod {
    match cfg.baseline_method {
        BaselineMethod::Exact => CardinalityMethod::Exact,
        BaselineMethod::Greedy => CardinalityMethod::Greedy,
        BaselineMethod::Auto => {
            if binomial(n, cfg.k) <= ENUMERATION_BUDGET {
                CardinalityMethod::Exact
            } else {
                CardinalityMethod::Greedy
            }
        }
    }
}

/// Calibrates window `tau` and forms every configured portfolio. Reads
/// prices up to row tau + L only.
pub fn decide_window(panel: &PricePanel, cfg: &BacktestConfig, tau: usize, cache: Option<&CalibrationCache>) -> Result<WindowDecisions> {
    let l = cfg.window;
    if tau + l > panel.n_returns() {
        return Err(Error::Input(format!("window {tau} needs returns beyond the panel")));
    }
    let bench = bench_window(panel, tau, l);
    let mut universe = Vec::new();
    let mut series = Vec::new();
    for (i, p) in panel.assets.prices.iter().enumerate() {
        if let Some(r) = window_returns(p, tau, l) {
            universe.push(i);
            series.push(r);
        }
    }
    let want_sectors = cfg.strategies.contains(&Strategy::Practitioner);
    let mut sectors = Vec::new();
    if let (true, Some(block)) = (want_sectors, &panel.sectors) {
        for (i, p) in block.prices.iter().enumerate() {
            if let Some(r) = window_returns(p, tau, l) {
                sectors.push(i);
                series.push(r);
            }
        }
    }
    let n_assets = universe.len();

    let started = Instant::now();
    let data = WindowData { tau, bench, assets: series };
    let cal = match cache {
        Some(c) => c.get_or_compute(&data, cfg.correlation)?,
        None => calibrate_window(&data, cfg.correlation)?,
    };
    let calibration_seconds = started.elapsed().as_secs_f64();

    let b = cal.benchmark;
    let delta_b = delta(b.beta);
    let u2_b = match cfg.u2_mode {
        U2Mode::Expectation => u2_expectation(delta_b, l as f64),
        U2Mode::Filtered => {
            let y = (data.bench.iter().sum::<f64>() - b.mu * l as f64) / b.sigma;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(tau as u64);
            u2_filtered(delta_b, l as f64, y, &mut rng)
        }
    };
    let skew_model = MarketModel {
        benchmark: BenchmarkModel { mu: b.mu, sigma: b.sigma, beta: b.beta },
        assets: Vec::new(),
        u2_b,
        elapsed: l as f64,
    };
    let skew_assets: Vec<AssetModel> = cal
        .assets
        .iter()
        .map(|a| AssetModel { mu: a.mu, sigma: a.sigma, beta: a.beta, rho: a.rho })
        .collect();
    let usable: Vec<bool> = cal.assets.iter().map(|a| a.usable()).collect();

    let mut decisions = Vec::new();
    let mut notes = Vec::new();
    for &strategy in &cfg.strategies {
        let t0 = Instant::now();
        let outcome: Result<Option<Decision>> = match strategy {
            Strategy::HpcaSkew => {
                let pcs: Vec<Option<PairCov>> = (0..n_assets)
                    .map(|j| usable[j].then(|| PairCov { sigma_b: b.sigma, sigma_i: cal.assets[j].sigma, rho: cal.assets[j].rho, delta_b }))
                    .collect();
                select_available(&pcs, cfg.k, Mode::Skew).and_then(|p| {
                    let secs = calibration_seconds + t0.elapsed().as_secs_f64();
                    let selected = p.selected.iter().map(|&j| universe[j]).collect();
                    evaluate(strategy, &skew_model, &skew_assets, &p.selected, &p.weights, selected, secs).map(Some)
                })
            }
            Strategy::HpcaNormal => {
                let normal_assets: Vec<AssetModel> = cal
                    .assets
                    .iter()
                    .map(|a| AssetModel { mu: a.sample_mean, sigma: a.sample_sd, beta: 0.0, rho: a.rho })
                    .collect();
                let pcs: Vec<Option<PairCov>> = normal_assets[..n_assets]
                    .iter()
                    .map(|a| (a.sigma > 0.0 && a.rho.is_finite()).then_some(PairCov { sigma_b: b.sample_sd, sigma_i: a.sigma, rho: a.rho, delta_b: 0.0 }))
                    .collect();
                let normal_model = MarketModel {
                    benchmark: BenchmarkModel { mu: b.sample_mean, sigma: b.sample_sd, beta: 0.0 },
                    assets: Vec::new(),
                    u2_b: 0.0,
                    elapsed: l as f64,
                };
                select_available(&pcs, cfg.k, Mode::Normal).and_then(|p| {
                    let secs = calibration_seconds + t0.elapsed().as_secs_f64();
                    let selected = p.selected.iter().map(|&j| universe[j]).collect();
                    evaluate(strategy, &normal_model, &normal_assets, &p.selected, &p.weights, selected, secs).map(Some)
                })
            }
            Strategy::Baseline => {
                let local: Vec<usize> = (0..n_assets).filter(|&j| usable[j]).collect();
                if local.len() < cfg.k {
                    Err(Error::Input(format!("only {} usable assets for cardinality {}", local.len(), cfg.k)))
                } else {
                    let problem = CardinalityProblem {
                        bench: data.bench.clone(),
                        assets: local.iter().map(|&j| data.assets[j].clone()).collect(),
                        k: cfg.k,
                    };
                    let method = cardinality_method(cfg, local.len());
                    solve_cardinality(&problem, method).and_then(|s| {
                        let secs = t0.elapsed().as_secs_f64();
                        let support: Vec<usize> = s.support.iter().map(|&k| local[k]).collect();
                        let weights: Vec<f64> = s.support.iter().map(|&k| s.weights.as_slice()[k]).collect();
                        let selected = support.iter().map(|&j| universe[j]).collect();
                        evaluate(strategy, &skew_model, &skew_assets, &support, &weights, selected, secs).map(Some)
                    })
                }
            }
            Strategy::Practitioner => {
                if panel.sectors.is_none() {
                    if tau == 0 {
                        notes.push("practitioner skipped: panel has no sector block".into());
                    }
                    Ok(None)
                } else {
                    let local: Vec<usize> = (n_assets..n_assets + sectors.len()).filter(|&j| usable[j]).collect();
                    if local.is_empty() {
                        Err(Error::Input("no usable sector series".into()))
                    } else {
                        let qp = SimplexQP {
                            bench: data.bench.clone(),
                            sectors: local.iter().map(|&j| data.assets[j].clone()).collect(),
                        };
                        solve_simplex_qp(&qp).and_then(|s| {
                            let secs = t0.elapsed().as_secs_f64();
                            let selected = local.iter().map(|&j| sectors[j - n_assets]).collect();
                            evaluate(strategy, &skew_model, &skew_assets, &local, &s.weights, selected, secs).map(Some)
                        })
                    }
                }
            }
        };
        match outcome {
            Ok(Some(d)) => decisions.push(d),
            Ok(None) => {}
            Err(e @ Error::SolverBudget(_)) => return Err(e),
            Err(e) => notes.push(format!("{strategy}: {e}")),
        }
    }
    Ok(WindowDecisions {
        tau,
        calibration: cal,
        universe,
        sectors,
        u2_b,
        decisions,
        notes,
        calibration_seconds,
    })
}

/// One strategy's outcome in one evaluated window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyWindow {
    /// One-based window number.
    pub window: usize,
    /// Date at the end of the holding step.
    pub date: NaiveDate,
    pub te_ex_post: f64,
    pub te_ex_ante: f64,
    pub forecast: f64,
    pub realized: f64,
    pub benchmark: f64,
    pub selected: Vec<String>,
    pub weights: Vec<f64>,
    /// Selected series without a price at the holding step, counted as 0.
    pub missing_realized: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub a: Strategy,
    pub b: Strategy,
    /// Percentage of common windows where `a` has the lower value.
    pub ex_post: f64,
    pub ex_ante: f64,
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub evaluated: usize,
    pub mean_te_ex_post: f64,
    pub mean_te_ex_ante: f64,
    /// RMS of realized benchmark-minus-portfolio returns.
    pub realized_te: f64,
    pub mape: Mape,
    pub over_performance: Vec<IntervalPerformance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub windows: usize,
    pub failed_windows: Vec<usize>,
    pub strategies: BTreeMap<Strategy, StrategySummary>,
    pub win_rates: Vec<WinRate>,
    /// Asset-windows dropped for incomplete data.
    pub excluded_asset_windows: usize,
    /// Asset-windows dropped for failed calibration.
    pub failed_asset_calibrations: usize,
    pub missing_realized: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Timings {
    pub total_seconds: f64,
    pub mean_calibration_seconds: f64,
    /// Mean wall-clock seconds per window to build each portfolio.
    pub mean_seconds: BTreeMap<Strategy, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub run_hash: String,
    pub config: BacktestConfig,
    pub series: BTreeMap<Strategy, Vec<StrategyWindow>>,
    pub aggregates: Aggregates,
    pub timings: Timings,
}

impl BacktestReport {
    /// Aggregates as JSON; identical across runs with the same inputs.
    pub fn aggregates_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.aggregates)?)
    }
}

fn run_hash(panel: &PricePanel, cfg: &BacktestConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(panel)?);
    let mut c = cfg.clone();
    c.cache_dir = None;
    h.update(serde_json::to_vec(&c)?);
    Ok(hex::encode(h.finalize())[..12].to_string())
}

fn realize(prices: &[Option<f64>], t: usize) -> Option<f64> {
    match (prices[t], prices[t + 1]) {
        (Some(a), Some(b)) => Some((b / a).ln()),
        _ => None,
    }
}

pub fn run_backtest(panel: &PricePanel, cfg: &BacktestConfig) -> Result<BacktestReport> {
    panel.validate()?;
    cfg.validate(panel)?;
    let started = Instant::now();
    let cache = cfg.cache_dir.as_ref().map(CalibrationCache::new).transpose()?;
    let l = cfg.window;
    let n_windows = panel.n_returns() - l;

    let mut series: BTreeMap<Strategy, Vec<StrategyWindow>> = BTreeMap::new();
    let mut seconds: BTreeMap<Strategy, Vec<f64>> = BTreeMap::new();
    let mut calibration_seconds = Vec::new();
    let mut failed_windows = Vec::new();
    let mut notes: Vec<String> = Vec::new();
    let mut excluded = 0;
    let mut failed_assets = 0;
    let mut missing_total = 0;

    for tau in 0..n_windows {
        let wd = match decide_window(panel, cfg, tau, cache.as_ref()) {
            Ok(wd) => wd,
            Err(e @ Error::SolverBudget(_)) => return Err(e),
            Err(e) => {
                failed_windows.push(tau + 1);
                notes.push(format!("window {}: {e}", tau + 1));
                if let Some(max) = cfg.max_failed_windows {
                    if failed_windows.len() > max {
                        return Err(Error::CalibrationBudget { failed: failed_windows.len(), budget: max });
                    }
                }
                continue;
            }
        };
        calibration_seconds.push(wd.calibration_seconds);
        excluded += panel.n_assets() - wd.universe.len();
        failed_assets += wd.calibration.failed_assets();
        for n in wd.notes {
            notes.push(format!("window {}: {n}", tau + 1));
        }
        let t = tau + l;
        let rb = (panel.benchmark[t + 1] / panel.benchmark[t]).ln();
        for d in wd.decisions {
            let (block, names) = match d.strategy {
                Strategy::Practitioner => {
                    let s = panel.sectors.as_ref().expect("practitioner needs sectors");
                    (&s.prices, &s.names)
                }
                _ => (&panel.assets.prices, &panel.assets.names),
            };
            let mut missing = 0;
            let mut rp = 0.0;
            for (&i, &w) in d.selected.iter().zip(&d.weights) {
                match realize(&block[i], t) {
                    Some(r) => rp += w * r,
                    None => missing += 1,
                }
            }
            missing_total += missing;
            seconds.entry(d.strategy).or_default().push(d.seconds);
            series.entry(d.strategy).or_default().push(StrategyWindow {
                window: tau + 1,
                date: panel.dates[t + 1],
                te_ex_post: d.te_ex_post,
                te_ex_ante: d.te_ex_ante,
                forecast: d.forecast,
                realized: rp,
                benchmark: rb,
                selected: d.selected.iter().map(|&i| names[i].clone()).collect(),
                weights: d.weights,
                missing_realized: missing,
            });
        }
    }
    notes.dedup();

    let mut strategies = BTreeMap::new();
    for (s, rows) in &series {
        let n = rows.len() as f64;
        let forecasts: Vec<f64> = rows.iter().map(|r| r.forecast).collect();
        let bench: Vec<f64> = rows.iter().map(|r| r.benchmark).collect();
        let realized: Vec<f64> = rows.iter().map(|r| r.realized).collect();
        strategies.insert(
            *s,
            StrategySummary {
                evaluated: rows.len(),
                mean_te_ex_post: rows.iter().map(|r| r.te_ex_post).sum::<f64>() / n,
                mean_te_ex_ante: rows.iter().map(|r| r.te_ex_ante).sum::<f64>() / n,
                realized_te: (rows.iter().map(|r| (r.benchmark - r.realized).powi(2)).sum::<f64>() / n).sqrt(),
                mape: mape(&forecasts, &bench)?,
                over_performance: over_performance(&realized, &bench, cfg.interval, cfg.annualization)?,
            },
        );
    }

    let mut win_rates = Vec::new();
    let keys: Vec<Strategy> = series.keys().copied().collect();
    for &a in &keys {
        for &b in &keys {
            if a == b {
                continue;
            }
            let bmap: BTreeMap<usize, &StrategyWindow> = series[&b].iter().map(|r| (r.window, r)).collect();
            let pairs: Vec<(&StrategyWindow, &StrategyWindow)> =
                series[&a].iter().filter_map(|r| bmap.get(&r.window).map(|o| (r, *o))).collect();
            let (ap, bp): (Vec<f64>, Vec<f64>) = pairs.iter().map(|(x, y)| (x.te_ex_post, y.te_ex_post)).unzip();
            let (aa, ba): (Vec<f64>, Vec<f64>) = pairs.iter().map(|(x, y)| (x.te_ex_ante, y.te_ex_ante)).unzip();
            win_rates.push(WinRate {
                a,
                b,
                ex_post: win_rate(&ap, &bp)?,
                ex_ante: win_rate(&aa, &ba)?,
                windows: pairs.len(),
            });
        }
    }

    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let timings = Timings {
        total_seconds: started.elapsed().as_secs_f64(),
        mean_calibration_seconds: mean(&calibration_seconds),
        mean_seconds: seconds.iter().map(|(s, v)| (*s, mean(v))).collect(),
    };
    Ok(BacktestReport {
        run_hash: run_hash(panel, cfg)?,
        config: cfg.clone(),
        series,
        aggregates: Aggregates {
            windows: n_windows,
            failed_windows,
            strategies,
            win_rates,
            excluded_asset_windows: excluded,
            failed_asset_calibrations: failed_assets,
            missing_realized: missing_total,
            notes,
        },
        timings,
    })
}
