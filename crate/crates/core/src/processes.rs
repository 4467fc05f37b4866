//! Skew arithmetic Brownian motion (a Brownian motion plus a delta-weighted
//! reflected Brownian motion), its conditional moments, and skew geometric
//! Brownian motion price paths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skewdist::delta;
use crate::special::{norm_cdf, skew_variance_factor, SQRT_2_OVER_PI};

/// Filtration state of Y(t) = sqrt(1-delta^2) W1(t) + delta |W2(t)|.
///
/// `u1` and `u2` are the realized values of the two components, so `u2`
/// shares the sign of `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SabmState {
    pub t: f64,
    pub u1: f64,
    pub u2: f64,
    pub delta: f64,
}

impl SabmState {
    pub fn origin(beta: f64) -> Self {
        Self {
            t: 0.0,
            u1: 0.0,
            u2: 0.0,
            delta: delta(beta),
        }
    }

    pub fn value(&self) -> f64 {
        self.u1 + self.u2
    }

    fn reflected(&self) -> f64 {
        if self.delta == 0.0 {
            0.0
        } else {
            self.u2 / self.delta
        }
    }

    /// Advances the state by `dt`, reflecting the driving path of the second
    /// component.
    pub fn step<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        let sd = dt.sqrt();
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let u1 = self.u1 + (1.0 - self.delta * self.delta).sqrt() * sd * z1;
        let u2 = if self.delta == 0.0 {
            0.0
        } else {
            self.delta * (self.reflected() + sd * z2).abs()
        };
        Ok(Self {
            t: self.t + dt,
            u1,
            u2,
            delta: self.delta,
        })
    }

    fn horizon(&self, t: f64) -> Result<f64> {
        let tau = t - self.t;
        if !(tau > 0.0) {
            return Err(Error::Domain(format!(
                "conditioning time {} must precede target time {t}",
                self.t
            )));
        }
        Ok(tau)
    }

    /// E[Y(t) | F_s].
    pub fn cond_mean(&self, t: f64) -> Result<f64> {
        let tau = self.horizon(t)?;
        Ok(self.u1 + self.u2 + increment_cond_mean(self.u2, self.delta, tau))
    }

    /// Var[Y(t) | F_s].
    pub fn cond_var(&self, t: f64) -> Result<f64> {
        let tau = self.horizon(t)?;
        Ok(increment_cond_var(self.u2, self.delta, tau))
    }
}

/// E[Y(s+tau) - Y(s) | F_s] given the reflected-component realization `u2`.
///
/// Equals -2 u2 Phi(-a) + delta sqrt(2 tau / pi) exp(-a^2/2) with
/// a = u2 / (delta sqrt(tau)); this is E[delta |W2(t)| | F_s] - u2.
pub fn increment_cond_mean(u2: f64, delta: f64, tau: f64) -> f64 {
    let scale = delta * tau.sqrt();
    if scale == 0.0 {
        return 0.0;
    }
    let a = u2 / scale;
    -2.0 * u2 * norm_cdf(-a) + scale * SQRT_2_OVER_PI * (-0.5 * a * a).exp()
}

/// Var[Y(s+tau) | F_s] = tau + u2^2 - (E[delta |W2(t)| | F_s])^2, evaluated
/// in the cancellation-free form tau - 2 u2 g - g^2 with g the increment mean.
pub fn increment_cond_var(u2: f64, delta: f64, tau: f64) -> f64 {
    let g = increment_cond_mean(u2, delta, tau);
    (tau - 2.0 * u2 * g - g * g).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgbmParams {
    pub s0: f64,
    pub mu: f64,
    pub sigma: f64,
    pub beta: f64,
}

impl SgbmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.s0 > 0.0) || !self.s0.is_finite() {
            return Err(Error::Domain(format!("initial price must be positive, got {}", self.s0)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Domain(format!("volatility must be positive, got {}", self.sigma)));
        }
        if !self.mu.is_finite() || self.beta.is_nan() {
            return Err(Error::Domain("non-finite drift or shape".into()));
        }
        Ok(())
    }
}

/// Prices S(k dt), k = 0..=n_steps.
pub fn sgbm_path(p: &SgbmParams, n_steps: usize, dt: f64, seed: u64) -> Result<Vec<f64>> {
    p.validate()?;
    if n_steps == 0 {
        return Err(Error::Input("path needs at least one step".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = SabmState::origin(p.beta);
    let mut prices = Vec::with_capacity(n_steps + 1);
    prices.push(p.s0);
    for _ in 0..n_steps {
        state = state.step(dt, &mut rng)?;
        prices.push(p.s0 * (p.mu * state.t + p.sigma * state.value()).exp());
    }
    Ok(prices)
}

/// Shape of Y_i = rho Y_B + sqrt((1 - 2 delta_B^2/pi)(1 - rho^2)) W_i.
/// Defined as 0 at rho = 0.
pub fn beta_i(beta_b: f64, rho: f64) -> f64 {
    if rho == 0.0 || beta_b == 0.0 {
        return 0.0;
    }
    let kappa = skew_variance_factor(delta(beta_b));
    beta_b / (1.0 + (1.0 + beta_b * beta_b) * kappa * (1.0 / (rho * rho) - 1.0)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssetSpec {
    #[serde(default = "default_s0")]
    pub s0: f64,
    pub mu: f64,
    pub sigma: f64,
    pub rho: f64,
}

fn default_s0() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniverseSpec {
    pub benchmark: SgbmParams,
    pub assets: Vec<AssetSpec>,
}

impl UniverseSpec {
    pub fn validate(&self) -> Result<()> {
        self.benchmark.validate()?;
        for (i, a) in self.assets.iter().enumerate() {
            if !(a.rho.abs() < 1.0) {
                return Err(Error::Domain(format!("asset {i}: correlation {} outside (-1, 1)", a.rho)));
            }
            if !(a.sigma > 0.0) || !(a.s0 > 0.0) || !a.mu.is_finite() {
                return Err(Error::Domain(format!("asset {i}: invalid price dynamics")));
            }
        }
        Ok(())
    }

    /// Implied shape of each asset's driving process.
    pub fn asset_betas(&self) -> Vec<f64> {
        self.assets.iter().map(|a| beta_i(self.benchmark.beta, a.rho)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPanel {
    pub benchmark: Vec<f64>,
    /// One price path per asset, each `n_steps + 1` long.
    pub assets: Vec<Vec<f64>>,
}

/// Benchmark and asset price paths driven by a shared skew process.
pub fn correlated_universe(spec: &UniverseSpec, n_steps: usize, dt: f64, seed: u64) -> Result<SimulatedPanel> {
    spec.validate()?;
    if n_steps == 0 {
        return Err(Error::Input("path needs at least one step".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    let b = &spec.benchmark;
    let kappa = skew_variance_factor(delta(b.beta));
    let loadings: Vec<f64> = spec
        .assets
        .iter()
        .map(|a| (kappa * (1.0 - a.rho * a.rho)).sqrt())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = SabmState::origin(b.beta);
    let mut idio = vec![0.0; spec.assets.len()];
    let sd = dt.sqrt();

    let mut bench = Vec::with_capacity(n_steps + 1);
    bench.push(b.s0);
    let mut assets: Vec<Vec<f64>> = spec
        .assets
        .iter()
        .map(|a| {
            let mut v = Vec::with_capacity(n_steps + 1);
            v.push(a.s0);
            v
        })
        .collect();

    for _ in 0..n_steps {
        state = state.step(dt, &mut rng)?;
        let yb = state.value();
        bench.push(b.s0 * (b.mu * state.t + b.sigma * yb).exp());
        for (i, a) in spec.assets.iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            idio[i] += sd * z;
            let yi = a.rho * yb + loadings[i] * idio[i];
            assets[i].push(a.s0 * (a.mu * state.t + a.sigma * yi).exp());
        }
    }
    Ok(SimulatedPanel { benchmark: bench, assets })
}

/// Independent draws of the unit-step pair (dY_B, dY_i) started at the
/// process origin, where dY_B ~ SN(0, 1, beta_B). Returns `(bench, assets)`
/// with `assets[i][k]` paired to `bench[k]`.
pub fn one_step_draws(beta_b: f64, rhos: &[f64], n: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = delta(beta_b);
    let c = (1.0 - d * d).sqrt();
    let kappa = skew_variance_factor(d);
    let loadings: Vec<f64> = rhos.iter().map(|r| (kappa * (1.0 - r * r)).sqrt()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bench = Vec::with_capacity(n);
    let mut assets = vec![Vec::with_capacity(n); rhos.len()];
    for _ in 0..n {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let yb = c * z1 + d * z2.abs();
        bench.push(yb);
        for (i, r) in rhos.iter().enumerate() {
            let w: f64 = StandardNormal.sample(&mut rng);
            assets[i].push(r * yb + loadings[i] * w);
        }
    }
    (bench, assets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::norm_pdf;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
    }

    fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let (mx, vx) = mean_var(x);
        let (my, vy) = mean_var(y);
        let c = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64;
        c / (vx * vy).sqrt()
    }

    #[test]
    fn zero_delta_keeps_reflected_component_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = SabmState::origin(0.0);
        for _ in 0..100 {
            s = s.step(1.0, &mut rng).unwrap();
            assert_eq!(s.u2, 0.0);
        }
    }

    #[test]
    fn step_rejects_nonpositive_dt() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(SabmState::origin(1.0).step(0.0, &mut rng).is_err());
    }

    #[test]
    fn reflected_component_stays_on_delta_side() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for beta in [3.0, -3.0] {
            let mut s = SabmState::origin(beta);
            for _ in 0..1000 {
                s = s.step(0.3, &mut rng).unwrap();
                assert!(s.u2 * s.delta >= 0.0);
            }
        }
    }

    #[test]
    fn unit_time_second_moment() {
        // E[Y(1)^2] = 1 and Var[Y(1)] = 1 - 2 delta^2 / pi.
        for (seed, beta) in [0.0, 2.0].into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
            let ys: Vec<f64> = (0..100_000)
                .map(|_| SabmState::origin(beta).step(1.0, &mut rng).unwrap().value())
                .collect();
            let second = ys.iter().map(|y| y * y).sum::<f64>() / ys.len() as f64;
            assert!((second - 1.0).abs() < 0.02);
            let (_, v) = mean_var(&ys);
            assert!((v - skew_variance_factor(delta(beta))).abs() < 0.02);
        }
    }

    #[test]
    fn cond_mean_examples() {
        let s = SabmState { t: 0.0, u1: 0.3, u2: 0.0, delta: 1e-300 };
        assert!((s.cond_mean(1.0).unwrap() - 0.3).abs() < 1e-12);
        let s = SabmState { t: 2.0, u1: 0.3, u2: 0.0, delta: 0.0 };
        assert_eq!(s.cond_mean(3.0).unwrap(), 0.3);
        assert_eq!(s.cond_var(3.0).unwrap(), 1.0);

        // At the origin the increment mean is delta * E|Z| = delta sqrt(2/pi).
        let s = SabmState { t: 0.0, u1: 0.0, u2: 0.0, delta: 0.5 };
        assert!((s.cond_mean(1.0).unwrap() - 0.5 * SQRT_2_OVER_PI).abs() < 1e-15);
        assert!((2.0 * 0.5 * norm_pdf(0.0) - 0.5 * SQRT_2_OVER_PI).abs() < 1e-15);

        let s = SabmState { t: 0.0, u1: 0.1, u2: 3.5, delta: 0.5 };
        assert!((s.cond_mean(1.0).unwrap() - 3.6).abs() < 1e-8);
        assert!((s.cond_var(1.0).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn cond_moments_reject_past_target() {
        let s = SabmState { t: 1.0, u1: 0.0, u2: 0.1, delta: 0.5 };
        assert!(matches!(s.cond_mean(1.0), Err(Error::Domain(_))));
        assert!(matches!(s.cond_var(0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn normal_limit_matches_brownian_formulas() {
        let s = SabmState { t: 0.0, u1: -0.7, u2: 0.0, delta: 1e-10 };
        assert!((s.cond_mean(2.5).unwrap() + 0.7).abs() < 1e-6);
        assert!((s.cond_var(2.5).unwrap() - 2.5).abs() < 1e-6);
    }

    #[test]
    fn cond_var_origin_closed_form() {
        // u2 = 0: Var = 1 - 2 delta^2 / pi.
        let s = SabmState { t: 0.0, u1: 0.0, u2: 0.0, delta: 0.7 };
        assert!((s.cond_var(1.0).unwrap() - skew_variance_factor(0.7)).abs() < 1e-14);
    }

    #[test]
    fn sgbm_vanishing_volatility_is_exponential_growth() {
        let p = SgbmParams { s0: 50.0, mu: 0.01, sigma: 1e-14, beta: 3.0 };
        let path = sgbm_path(&p, 20, 1.0, 4).unwrap();
        for (k, s) in path.iter().enumerate() {
            let exact = 50.0 * (0.01 * k as f64).exp();
            assert!((s / exact - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sgbm_prices_positive() {
        let p = SgbmParams { s0: 1.0, mu: -0.2, sigma: 0.8, beta: -4.0 };
        assert!(sgbm_path(&p, 500, 1.0, 3).unwrap().iter().all(|&s| s > 0.0));
        assert!(sgbm_path(&p, 0, 1.0, 3).is_err());
    }

    fn log_returns(path: &[f64]) -> Vec<f64> {
        path.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
    }

    fn skew_kurt(xs: &[f64]) -> (f64, f64) {
        let (m, v) = mean_var(xs);
        let n = xs.len() as f64;
        let s = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n / v.powf(1.5);
        let k = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n / (v * v);
        (s, k)
    }

    #[test]
    fn sgbm_normal_case_passes_jarque_bera() {
        let p = SgbmParams { s0: 1.0, mu: 0.0, sigma: 0.01, beta: 0.0 };
        let r = log_returns(&sgbm_path(&p, 100_000, 1.0, 21).unwrap());
        let (s, k) = skew_kurt(&r);
        let n = r.len() as f64;
        let jb = n / 6.0 * (s * s + 0.25 * (k - 3.0).powi(2));
        assert!(jb < 9.21, "JB = {jb}");
    }

    #[test]
    fn sgbm_skewed_returns_positive_skewness() {
        // The first increment from the origin carries the full skew; sample
        // it across independent paths.
        let p = SgbmParams { s0: 1.0, mu: 0.0, sigma: 0.02, beta: 5.0 };
        let r: Vec<f64> = (0..100_000)
            .map(|seed| {
                let path = sgbm_path(&p, 1, 1.0, seed).unwrap();
                (path[1] / path[0]).ln()
            })
            .collect();
        assert!(skew_kurt(&r).0 > 0.0);
    }

    #[test]
    fn beta_i_examples() {
        assert_eq!(beta_i(0.0, 0.4), 0.0);
        assert_eq!(beta_i(2.0, 0.0), 0.0);
        assert!((beta_i(2.0, 1.0 - 1e-12) - 2.0).abs() < 1e-9);
        let kappa = skew_variance_factor(delta(1.0));
        let direct = 1.0 / (1.0 + 2.0 * kappa * 3.0f64).sqrt();
        assert!((beta_i(1.0, 0.5) - direct).abs() < 1e-15);
        // beta_B = 2, rho = 0.6 by hand.
        let d = 2.0 / 5f64.sqrt();
        let expected = 2.0 / (1.0 + 5.0 * skew_variance_factor(d) * (1.0 / 0.36 - 1.0)).sqrt();
        assert!((beta_i(2.0, 0.6) - expected).abs() < 1e-15);
    }

    #[test]
    fn correlated_universe_rejects_unit_correlation() {
        let spec = UniverseSpec {
            benchmark: SgbmParams { s0: 100.0, mu: 0.0, sigma: 0.02, beta: 1.0 },
            assets: vec![AssetSpec { s0: 10.0, mu: 0.0, sigma: 0.03, rho: 1.0 }],
        };
        assert!(matches!(correlated_universe(&spec, 10, 1.0, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn correlated_universe_shapes_and_positivity() {
        let spec = UniverseSpec {
            benchmark: SgbmParams { s0: 100.0, mu: 0.001, sigma: 0.02, beta: 3.0 },
            assets: (0..4)
                .map(|i| AssetSpec { s0: 20.0, mu: 0.0, sigma: 0.03, rho: 0.2 * i as f64 })
                .collect(),
        };
        let panel = correlated_universe(&spec, 200, 1.0, 5).unwrap();
        assert_eq!(panel.benchmark.len(), 201);
        assert_eq!(panel.assets.len(), 4);
        assert!(panel.assets.iter().all(|p| p.len() == 201 && p.iter().all(|&s| s > 0.0)));
        assert_eq!(panel, correlated_universe(&spec, 200, 1.0, 5).unwrap());
    }

    #[test]
    fn zero_correlation_gives_independent_increments() {
        let spec = UniverseSpec {
            benchmark: SgbmParams { s0: 100.0, mu: 0.0, sigma: 0.02, beta: 2.0 },
            assets: vec![AssetSpec { s0: 20.0, mu: 0.0, sigma: 0.03, rho: 0.0 }],
        };
        let panel = correlated_universe(&spec, 100_000, 1.0, 6).unwrap();
        let rb = log_returns(&panel.benchmark);
        let ri = log_returns(&panel.assets[0]);
        assert!(pearson(&rb, &ri).abs() < 0.01);
    }

    #[test]
    fn near_unit_correlation_tracks_benchmark_driver() {
        let spec = UniverseSpec {
            benchmark: SgbmParams { s0: 1.0, mu: 0.0, sigma: 1.0, beta: 2.0 },
            assets: vec![AssetSpec { s0: 1.0, mu: 0.0, sigma: 1.0, rho: 1.0 - 1e-9 }],
        };
        let panel = correlated_universe(&spec, 1000, 1.0, 8).unwrap();
        for (b, a) in panel.benchmark.iter().zip(&panel.assets[0]) {
            assert!((b.ln() - a.ln()).abs() < 1e-3);
        }
    }

    #[test]
    fn one_step_pearson_converges_to_rho() {
        let rhos = [0.6, 0.3, -0.5, 0.9];
        let (b, a) = one_step_draws(2.0, &rhos, 100_000, 13);
        for (r, xs) in rhos.iter().zip(&a) {
            assert!((pearson(&b, xs) - r).abs() < 0.01, "rho {r}");
        }
    }

    #[test]
    fn normal_paths_increment_correlation() {
        let spec = UniverseSpec {
            benchmark: SgbmParams { s0: 100.0, mu: 0.0, sigma: 0.02, beta: 0.0 },
            assets: vec![AssetSpec { s0: 20.0, mu: 0.0, sigma: 0.03, rho: 0.7 }],
        };
        let panel = correlated_universe(&spec, 100_000, 1.0, 9).unwrap();
        let c = pearson(&log_returns(&panel.benchmark), &log_returns(&panel.assets[0]));
        assert!((c - 0.7).abs() < 0.01);
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn cond_var_nonnegative(u1 in -5.0..5.0f64, r in 0.0..20.0f64, beta in -30.0..30.0f64, tau in 1e-6..50.0f64) {
            let d = delta(beta);
            let s = SabmState { t: 0.0, u1, u2: d * r, delta: d };
            let v = s.cond_var(tau).unwrap();
            prop_assert!(v >= 0.0);
            prop_assert!(v <= tau + 1e-12);
        }

        #[test]
        fn beta_i_monotone_in_abs_rho(beta_b in -20.0..20.0f64, r1 in 0.01..0.99f64, r2 in 0.01..0.99f64) {
            let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(beta_i(beta_b, lo).abs() <= beta_i(beta_b, hi).abs() + 1e-15);
            prop_assert!(beta_i(beta_b, hi).abs() <= beta_b.abs() + 1e-15);
            prop_assert!(beta_i(beta_b, -hi) == beta_i(beta_b, hi));
            if beta_b != 0.0 {
                prop_assert_eq!(beta_i(beta_b, hi).signum(), beta_b.signum());
            }
        }
    }
}
