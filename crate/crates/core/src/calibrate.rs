//! Maximum-likelihood calibration of the skew-normal benchmark and asset
//! models over an estimation window.

use std::f64::consts::{LN_2, PI};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optim::NelderMead;
use crate::processes::beta_i;
use crate::skewdist::{delta, SkewNormalParams};
use crate::special::{inv_mills, ln_norm_cdf, ln_norm_pdf, skew_variance_factor, SQRT_2_OVER_PI};

pub const MIN_WINDOW: usize = 10;
pub const BETA_BOUND: f64 = 50.0;
pub const CALIBRATION_VERSION: u32 = 2;

fn sn_loglik(xi: f64, omega: f64, beta: f64, data: &[f64]) -> f64 {
    if !(omega > 0.0) || !omega.is_finite() {
        return f64::NEG_INFINITY;
    }
    let ln_omega = omega.ln();
    data.iter()
        .map(|&x| {
            let z = (x - xi) / omega;
            LN_2 - ln_omega + ln_norm_pdf(z) + ln_norm_cdf(beta * z)
        })
        .sum()
}

/// Skew-normal log-likelihood of `data`; -inf for a non-positive scale.
pub fn loglik_benchmark(params: &SkewNormalParams, data: &[f64]) -> f64 {
    sn_loglik(params.xi, params.omega, params.beta, data)
}

/// Sample mean and standard deviation with denominator L.
pub fn fit_normal(data: &[f64]) -> Result<(f64, f64)> {
    if data.len() < 2 {
        return Err(Error::Input(format!("need at least 2 observations, got {}", data.len())));
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

fn check_window(data: &[f64]) -> Result<(f64, f64)> {
    if data.len() < MIN_WINDOW {
        return Err(Error::Input(format!(
            "window of {} observations is below the minimum of {MIN_WINDOW}",
            data.len()
        )));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("non-finite value in window".into()));
    }
    let (mean, sd) = fit_normal(data)?;
    if !(sd > 0.0) || sd <= 1e-14 * mean.abs() {
        return Err(Error::Degenerate("zero variance window".into()));
    }
    Ok((mean, sd))
}

fn sample_skewness(z: &[f64]) -> f64 {
    let n = z.len() as f64;
    let m = z.iter().sum::<f64>() / n;
    let v = z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let s = z.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    s / v.powf(1.5)
}

/// Shape whose skew-normal skewness equals `gamma`, with |delta| <= 0.99.
fn moment_shape(gamma: f64) -> f64 {
    let r = gamma.abs().powf(2.0 / 3.0);
    let c = ((4.0 - PI) / 2.0).powf(2.0 / 3.0);
    let d = ((PI / 2.0) * r / (r + c)).sqrt().min(0.99).copysign(gamma);
    d / (1.0 - d * d).sqrt()
}

/// Location and log-scale matching unit variance and zero mean for `beta`.
fn moment_start(beta: f64) -> [f64; 3] {
    let d = delta(beta);
    let omega = 1.0 / skew_variance_factor(d).sqrt();
    [-omega * d * SQRT_2_OVER_PI, omega.ln(), beta]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    /// Index of the winning initialization.
    pub start: usize,
    pub converged_starts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkFit {
    pub params: SkewNormalParams,
    pub loglik: f64,
    pub diagnostics: FitDiagnostics,
}

struct Candidate {
    theta: Vec<f64>,
    nll: f64,
    iterations: usize,
    converged: bool,
    start: usize,
}

fn run_start<F: Fn(&[f64]) -> f64>(nm: &NelderMead, f: &F, x0: &[f64], steps: &[f64], start: usize) -> Candidate {
    let first = nm.minimize(f, x0, steps);
    let second = nm.minimize(f, &first.x, steps);
    let (best, other) = if second.fx <= first.fx { (second, first) } else { (first, second) };
    Candidate {
        theta: best.x,
        nll: best.fx,
        iterations: best.iterations + other.iterations,
        converged: best.converged,
        start,
    }
}

fn pick_best(cands: Vec<Candidate>, shape_of: impl Fn(&[f64]) -> f64) -> (Candidate, usize) {
    let converged_starts = cands.iter().filter(|c| c.converged).count();
    let mut best: Option<Candidate> = None;
    for c in cands {
        let better = match &best {
            None => true,
            Some(b) => {
                let tol = 1e-10 * (1.0 + b.nll.abs());
                c.nll < b.nll - tol
                    || ((c.nll - b.nll).abs() <= tol && shape_of(&c.theta).abs() < shape_of(&b.theta).abs())
            }
        };
        if better {
            best = Some(c);
        }
    }
    (best.expect("at least one start"), converged_starts)
}

/// Skew-normal MLE of (mu, sigma, beta) by multi-start Nelder-Mead.
pub fn fit_benchmark(data: &[f64]) -> Result<BenchmarkFit> {
    let (mean, sd) = check_window(data)?;
    let z: Vec<f64> = data.iter().map(|x| (x - mean) / sd).collect();
    let nll = |t: &[f64]| -sn_loglik(t[0], t[1].exp(), t[2].clamp(-BETA_BOUND, BETA_BOUND), &z);

    let gamma = sample_skewness(&z);
    let wide = if gamma < 0.0 { -4.0 } else { 4.0 };
    let starts = [
        moment_start(moment_shape(gamma)),
        moment_start(-2.0),
        moment_start(0.0),
        moment_start(2.0),
        moment_start(wide),
    ];
    let nm = NelderMead::default();
    let steps = [0.2, 0.2, 1.0];
    let cands: Vec<Candidate> = starts
        .iter()
        .enumerate()
        .map(|(k, s)| run_start(&nm, &nll, s, &steps, k))
        .collect();
    let (best, converged_starts) = pick_best(cands, |t| t[2].clamp(-BETA_BOUND, BETA_BOUND));

    let beta = best.theta[2].clamp(-BETA_BOUND, BETA_BOUND);
    let params = SkewNormalParams {
        xi: mean + sd * best.theta[0],
        omega: sd * best.theta[1].exp(),
        beta,
    };
    if converged_starts == 0 || !params.omega.is_finite() || !best.nll.is_finite() {
        return Err(Error::Calibration {
            reason: "no initialization converged".into(),
            best_effort: Some(vec![params.xi, params.omega, params.beta]),
        });
    }
    Ok(BenchmarkFit {
        params,
        loglik: -best.nll - data.len() as f64 * sd.ln(),
        diagnostics: FitDiagnostics {
            converged: best.converged,
            iterations: best.iterations,
            start: best.start,
            converged_starts,
        },
    })
}

/// Shape of the asset given the benchmark shape and the correlation.
pub fn propagate_beta(beta_b_hat: f64, rho_hat: f64) -> f64 {
    beta_i(beta_b_hat, rho_hat)
}

/// Scale multiplier sqrt(rho^2 + (1 - 2 delta_B^2/pi)(1 - rho^2)) linking
/// sigma_i to the skew-normal scale of R_i.
pub fn asset_scale_factor(rho: f64, delta_b: f64) -> f64 {
    (rho * rho + skew_variance_factor(delta_b) * (1.0 - rho * rho)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssetFit {
    pub mu: f64,
    pub sigma: f64,
    pub loglik: f64,
    pub converged: bool,
}

/// Damped Newton ascent on (location, log-scale) with the shape held fixed.
/// None when it stalls, leaving the caller to fall back to a simplex search.
fn location_scale_newton(z: &[f64], beta: f64, start: [f64; 2]) -> Option<Candidate> {
    let n = z.len() as f64;
    let ll = |a: f64, s: f64| sn_loglik(a, s.exp(), beta, z);
    let (mut a, mut s) = (start[0], start[1]);
    let mut f = ll(a, s);
    for it in 1..=100 {
        let w = (-s).exp();
        let (mut sg, mut sgu, mut sdg, mut sdgu, mut sdgu2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &x in z {
            let u = (x - a) * w;
            let r = inv_mills(beta * u);
            let g = -u + beta * r;
            let dg = -1.0 - beta * beta * r * (beta * u + r);
            sg += g;
            sgu += g * u;
            sdg += dg;
            sdgu += dg * u;
            sdgu2 += dg * u * u;
        }
        let grad = [-w * sg, -n - sgu];
        let (haa, has, hss) = (w * w * sdg, w * (sg + sdgu), sdgu2 + sgu);
        let det = haa * hss - has * has;
        // Newton direction when the Hessian is negative definite, else gradient.
        let dir = if haa < 0.0 && det > 0.0 {
            [-(hss * grad[0] - has * grad[1]) / det, -(haa * grad[1] - has * grad[0]) / det]
        } else {
            grad
        };
        let mut t = 1.0;
        let next = loop {
            let (na, ns) = (a + t * dir[0], s + t * dir[1]);
            let fn_ = ll(na, ns);
            if fn_ >= f {
                break Some((na, ns, fn_));
            }
            t *= 0.5;
            if t < 1e-10 {
                break None;
            }
        };
        let (na, ns, fn_) = next?;
        let step = (na - a).abs().max((ns - s).abs());
        (a, s, f) = (na, ns, fn_);
        if step < 1e-12 || grad[0].abs().max(grad[1].abs()) < 1e-10 * n {
            return f.is_finite().then_some(Candidate { theta: vec![a, s], nll: -f, iterations: it, converged: true, start: 0 });
        }
    }
    None
}

/// MLE of (mu_i, sigma_i) with the shape fixed at `beta_i_hat`.
pub fn fit_asset(data: &[f64], beta_i_hat: f64, rho_hat: f64, delta_b_hat: f64) -> Result<AssetFit> {
    let (mean, sd) = check_window(data)?;
    let factor = asset_scale_factor(rho_hat, delta_b_hat);
    if !(factor > 0.0) {
        return Err(Error::Domain(format!("invalid correlation {rho_hat} or delta {delta_b_hat}")));
    }
    let beta = beta_i_hat.clamp(-BETA_BOUND, BETA_BOUND);
    if beta == 0.0 {
        return Ok(AssetFit {
            mu: mean,
            sigma: sd / factor,
            loglik: sn_loglik(mean, sd, 0.0, data),
            converged: true,
        });
    }
    let z: Vec<f64> = data.iter().map(|x| (x - mean) / sd).collect();
    let nll = |t: &[f64]| -sn_loglik(t[0], t[1].exp(), beta, &z);
    let s = moment_start(beta);
    let c = match location_scale_newton(&z, beta, [s[0], s[1]]) {
        Some(c) => c,
        None => run_start(&NelderMead::default(), &nll, &s[..2], &[0.2, 0.2], 0),
    };
    let omega = sd * c.theta[1].exp();
    let mu = mean + sd * c.theta[0];
    if !c.converged || !omega.is_finite() {
        return Err(Error::Calibration {
            reason: "asset likelihood search did not converge".into(),
            best_effort: Some(vec![mu, omega / factor]),
        });
    }
    Ok(AssetFit {
        mu,
        sigma: omega / factor,
        loglik: -c.nll - data.len() as f64 * sd.ln(),
        converged: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub value: f64,
    /// Set when one of the inputs has no variation and the value is 0 by
    /// convention.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationKind {
    #[default]
    Spearman,
    Pearson,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), actual: y.len() });
    }
    if x.len() < 3 {
        return Err(Error::Input(format!("need at least 3 pairs, got {}", x.len())));
    }
    Ok(())
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Correlation { value: 0.0, degenerate: true });
    }
    Ok(Correlation {
        value: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Ranks starting at 1, tied values sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

pub fn correlation(kind: CorrelationKind, x: &[f64], y: &[f64]) -> Result<Correlation> {
    match kind {
        CorrelationKind::Spearman => spearman(x, y),
        CorrelationKind::Pearson => pearson(x, y),
    }
}

/// Returns over one estimation window. `assets[i]` has the same length as
/// `bench`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowData {
    pub tau: usize,
    pub bench: Vec<f64>,
    pub assets: Vec<Vec<f64>>,
}

impl WindowData {
    pub fn validate(&self) -> Result<()> {
        if self.bench.len() < MIN_WINDOW {
            return Err(Error::Input(format!(
                "window of {} observations is below the minimum of {MIN_WINDOW}",
                self.bench.len()
            )));
        }
        for a in &self.assets {
            if a.len() != self.bench.len() {
                return Err(Error::Dimension { expected: self.bench.len(), actual: a.len() });
            }
        }
        if self.bench.iter().chain(self.assets.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::Input("missing or non-finite return inside the window".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the window's returns and the correlation choice.
    pub fn hash(&self, kind: CorrelationKind) -> String {
        let mut h = Sha256::new();
        h.update((self.bench.len() as u64).to_le_bytes());
        h.update((self.assets.len() as u64).to_le_bytes());
        for x in self.bench.iter().chain(self.assets.iter().flatten()) {
            h.update(x.to_le_bytes());
        }
        h.update([kind as u8]);
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCalibration {
    pub mu: f64,
    pub sigma: f64,
    pub beta: f64,
    pub loglik: f64,
    pub diagnostics: FitDiagnostics,
    /// Sample mean and standard deviation.
    pub sample_mean: f64,
    pub sample_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetCalibration {
    pub mu: f64,
    pub sigma: f64,
    pub beta: f64,
    pub rho: f64,
    pub loglik: f64,
    pub sample_mean: f64,
    pub sample_sd: f64,
    pub rho_degenerate: bool,
    /// Reason the skew fit failed; the asset is then unusable this window.
    pub failure: Option<String>,
}

impl AssetCalibration {
    pub fn usable(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub version: u32,
    pub window: usize,
    pub data_hash: String,
    pub correlation: CorrelationKind,
    pub benchmark: BenchmarkCalibration,
    pub assets: Vec<AssetCalibration>,
}

impl CalibrationResult {
    pub fn failed_assets(&self) -> usize {
        self.assets.iter().filter(|a| !a.usable()).count()
    }
}

fn calibrate_asset(series: &[f64], bench: &[f64], beta_b: f64, delta_b: f64, kind: CorrelationKind) -> AssetCalibration {
    let (sample_mean, sample_sd) = fit_normal(series).unwrap_or((f64::NAN, f64::NAN));
    let fail = |rho: f64, degenerate: bool, e: Error| AssetCalibration {
        mu: f64::NAN,
        sigma: f64::NAN,
        beta: f64::NAN,
        rho,
        loglik: f64::NAN,
        sample_mean,
        sample_sd,
        rho_degenerate: degenerate,
        failure: Some(e.to_string()),
    };
    let corr = match correlation(kind, bench, series) {
        Ok(c) => c,
        Err(e) => return fail(f64::NAN, false, e),
    };
    let beta = propagate_beta(beta_b, corr.value);
    match fit_asset(series, beta, corr.value, delta_b) {
        Ok(f) => AssetCalibration {
            mu: f.mu,
            sigma: f.sigma,
            beta,
            rho: corr.value,
            loglik: f.loglik,
            sample_mean,
            sample_sd,
            rho_degenerate: corr.degenerate,
            failure: None,
        },
        Err(e) => fail(corr.value, corr.degenerate, e),
    }
}

/// Fits the benchmark, then every asset in parallel. Asset failures are
/// recorded per asset; a benchmark failure fails the window.
pub fn calibrate_window(window: &WindowData, kind: CorrelationKind) -> Result<CalibrationResult> {
    window.validate()?;
    let fit = fit_benchmark(&window.bench)?;
    let (sample_mean, sample_sd) = fit_normal(&window.bench)?;
    let p = fit.params;
    let delta_b = delta(p.beta);
    let assets = window
        .assets
        .par_iter()
        .map(|a| calibrate_asset(a, &window.bench, p.beta, delta_b, kind))
        .collect();
    Ok(CalibrationResult {
        version: CALIBRATION_VERSION,
        window: window.tau,
        data_hash: window.hash(kind),
        correlation: kind,
        benchmark: BenchmarkCalibration {
            mu: p.xi,
            sigma: p.omega,
            beta: p.beta,
            loglik: fit.loglik,
            diagnostics: fit.diagnostics,
            sample_mean,
            sample_sd,
        },
        assets,
    })
}

/// Directory of calibration documents keyed by window index and data hash.
#[derive(Debug, Clone)]
pub struct CalibrationCache {
    dir: PathBuf,
}

impl CalibrationCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, window: usize, hash: &str) -> PathBuf {
        self.dir.join(format!("calibration_{window}_{}.json", &hash[..hash.len().min(16)]))
    }

    /// A cached result, if present and matching version and hash.
    pub fn load(&self, window: usize, hash: &str) -> Option<CalibrationResult> {
        let text = std::fs::read_to_string(self.path(window, hash)).ok()?;
        let r: CalibrationResult = serde_json::from_str(&text).ok()?;
        (r.version == CALIBRATION_VERSION && r.data_hash == hash && r.window == window).then_some(r)
    }

    pub fn store(&self, result: &CalibrationResult) -> Result<()> {
        let path = self.path(result.window, &result.data_hash);
        let text = serde_json::to_string_pretty(result)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn get_or_compute(&self, window: &WindowData, kind: CorrelationKind) -> Result<CalibrationResult> {
        let hash = window.hash(kind);
        if let Some(r) = self.load(window.tau, &hash) {
            return Ok(r);
        }
        let r = calibrate_window(window, kind)?;
        self.store(&r)?;
        Ok(r)
    }
}
