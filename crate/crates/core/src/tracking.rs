//! Closed-form tracking error and forecast return of a weighted portfolio
//! against the benchmark, one rebalance step ahead.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::processes::{increment_cond_mean, increment_cond_var};
use crate::skewdist::delta;
use crate::special::{skew_variance_factor, SQRT_2_OVER_PI};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkModel {
    pub mu: f64,
    pub sigma: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssetModel {
    pub mu: f64,
    pub sigma: f64,
    pub beta: f64,
    pub rho: f64,
}

/// Per-step log-return model: R_B = mu_B + sigma_B dY_B and
/// R_i = mu_i + sigma_i (rho_i dY_B + sqrt((1 - 2 delta_B^2/pi)(1 - rho_i^2)) dW_i).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    pub benchmark: BenchmarkModel,
    pub assets: Vec<AssetModel>,
    /// Realization of delta_B |W_2| at the conditioning time.
    pub u2_b: f64,
    /// Steps elapsed since the process origin.
    pub elapsed: f64,
}

impl MarketModel {
    pub fn validate(&self) -> Result<()> {
        let b = &self.benchmark;
        if !(b.sigma > 0.0 && b.sigma.is_finite()) || !b.mu.is_finite() || b.beta.is_nan() {
            return Err(Error::Domain(format!("invalid benchmark model {b:?}")));
        }
        for (i, a) in self.assets.iter().enumerate() {
            if !(a.sigma > 0.0 && a.sigma.is_finite()) || !a.mu.is_finite() || !(a.rho.abs() <= 1.0) {
                return Err(Error::Domain(format!("invalid model for asset {i}: {a:?}")));
            }
        }
        if !self.u2_b.is_finite() || self.u2_b * self.delta_b() < 0.0 || (self.delta_b() == 0.0 && self.u2_b != 0.0) {
            return Err(Error::Domain(format!("reflected state {} inconsistent with shape", self.u2_b)));
        }
        Ok(())
    }

    pub fn delta_b(&self) -> f64 {
        delta(self.benchmark.beta)
    }

    /// The same model with every shape and the reflected state set to zero.
    pub fn to_normal(&self) -> MarketModel {
        MarketModel {
            benchmark: BenchmarkModel { beta: 0.0, ..self.benchmark },
            assets: self.assets.iter().map(|a| AssetModel { beta: 0.0, ..*a }).collect(),
            u2_b: 0.0,
            elapsed: self.elapsed,
        }
    }
}

/// Portfolio weights over the whole universe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights(pub Vec<f64>);

impl Weights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::Domain("weights must be finite and nonnegative".into()));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("weights sum to {s}, expected 1")));
        }
        Ok(Self(w))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// Scatters `w[k]` onto position `support[k]` of an `n`-vector.
    pub fn from_support(n: usize, support: &[usize], w: &[f64]) -> Result<Self> {
        if support.len() != w.len() {
            return Err(Error::Dimension { expected: support.len(), actual: w.len() });
        }
        let mut full = vec![0.0; n];
        for (&i, &x) in support.iter().zip(w) {
            if i >= n {
                return Err(Error::Input(format!("asset index {i} out of range {n}")));
            }
            full[i] += x;
        }
        Self::new(full)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

struct Exposure {
    /// mu_B - sum w mu
    m: f64,
    /// sigma_B - sum w sigma rho
    a: f64,
    /// sum w^2 sigma^2 kappa (1 - rho^2)
    idio: f64,
}

fn exposure(model: &MarketModel, w: &Weights) -> Result<Exposure> {
    if w.len() != model.assets.len() {
        return Err(Error::Dimension { expected: model.assets.len(), actual: w.len() });
    }
    model.validate()?;
    let kappa = skew_variance_factor(model.delta_b());
    let mut wmu = 0.0;
    let mut wsr = 0.0;
    let mut idio = 0.0;
    for (a, &x) in model.assets.iter().zip(w.as_slice()) {
        wmu += x * a.mu;
        wsr += x * a.sigma * a.rho;
        idio += x * x * a.sigma * a.sigma * kappa * (1.0 - a.rho * a.rho);
    }
    Ok(Exposure {
        m: model.benchmark.mu - wmu,
        a: model.benchmark.sigma - wsr,
        idio,
    })
}

/// Unconditional one-step tracking error sqrt(E[(R_B - R_P)^2]).
pub fn te_ex_post(model: &MarketModel, w: &Weights) -> Result<f64> {
    let e = exposure(model, w)?;
    let d = model.delta_b();
    let te2 = e.m * e.m + 2.0 * e.m * e.a * d * SQRT_2_OVER_PI + e.a * e.a + e.idio;
    Ok(te2.max(0.0).sqrt())
}

/// Ex-post tracking error under normal returns (all shapes zero).
pub fn te_ex_post_normal(model: &MarketModel, w: &Weights) -> Result<f64> {
    te_ex_post(&model.to_normal(), w)
}

/// E[dY_B | F_{t-1}] and Var[dY_B | F_{t-1}] over one step.
pub fn benchmark_increment_moments(model: &MarketModel) -> (f64, f64) {
    let d = model.delta_b();
    (increment_cond_mean(model.u2_b, d, 1.0), increment_cond_var(model.u2_b, d, 1.0))
}

/// Conditional one-step tracking error sqrt(E[(R_B - R_P)^2 | F_{t-1}]).
pub fn te_ex_ante(model: &MarketModel, w: &Weights) -> Result<f64> {
    let e = exposure(model, w)?;
    let (mean, var) = benchmark_increment_moments(model);
    let am = e.a * mean;
    let te2 = e.m * e.m + 2.0 * e.m * am + e.a * e.a * var + am * am + e.idio;
    Ok(te2.max(0.0).sqrt())
}

/// E[R_P | F_{t-1}].
pub fn forecast_return(model: &MarketModel, w: &Weights) -> Result<f64> {
    let e = exposure(model, w)?;
    let (mean, _) = benchmark_increment_moments(model);
    let wmu = model.benchmark.mu - e.m;
    let wsr = model.benchmark.sigma - e.a;
    Ok(wmu + wsr * mean)
}

/// Root mean square of r_B - r_P over the sample. `asset_returns[i]` is the
/// series of asset `i`.
pub fn te_sample(bench_returns: &[f64], asset_returns: &[Vec<f64>], w: &Weights) -> Result<f64> {
    let l = bench_returns.len();
    if l < 2 {
        return Err(Error::Input(format!("need at least 2 observations, got {l}")));
    }
    if asset_returns.len() != w.len() {
        return Err(Error::Dimension { expected: w.len(), actual: asset_returns.len() });
    }
    if let Some(bad) = asset_returns.iter().find(|r| r.len() != l) {
        return Err(Error::Dimension { expected: l, actual: bad.len() });
    }
    let mut ss = 0.0;
    for j in 0..l {
        let rp: f64 = asset_returns.iter().zip(w.as_slice()).map(|(r, x)| x * r[j]).sum();
        let diff = bench_returns[j] - rp;
        ss += diff * diff;
    }
    Ok((ss / l as f64).sqrt())
}

/// How the latent reflected state of the benchmark is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum U2Mode {
    /// Unconditional mean delta sqrt(2 elapsed / pi).
    #[default]
    Expectation,
    /// A draw from the law of the state given the observed Y_B.
    Filtered,
}

pub fn u2_expectation(delta_b: f64, elapsed: f64) -> f64 {
    delta_b * (2.0 * elapsed / std::f64::consts::PI).sqrt()
}

/// Draws delta |W_2(elapsed)| given Y(elapsed) = y. Given y, |W_2| is
/// N(delta y, (1 - delta^2) elapsed) truncated to [0, inf).
pub fn u2_filtered<R: Rng + ?Sized>(delta_b: f64, elapsed: f64, y: f64, rng: &mut R) -> f64 {
    if delta_b == 0.0 || !(elapsed > 0.0) {
        return 0.0;
    }
    let sd = ((1.0 - delta_b * delta_b) * elapsed).sqrt();
    let m = delta_b * y;
    if sd == 0.0 {
        return delta_b * m.max(0.0);
    }
    let z = truncated_std_normal(-m / sd, rng);
    delta_b * (m + sd * z)
}

/// Standard normal conditioned on z >= a.
fn truncated_std_normal<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a <= 0.0 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z >= a {
                return z;
            }
        }
    }
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    let exp = Exp::new(alpha).expect("positive rate");
    loop {
        let z = a + exp.sample(rng);
        let u: f64 = rng.random();
        if u <= (-0.5 * (z - alpha) * (z - alpha)).exp() {
            return z;
        }
    }
}
