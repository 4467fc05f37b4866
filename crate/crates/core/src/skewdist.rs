//! Univariate skew-normal law SN(xi, omega^2, beta).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{
    ln_norm_cdf, ln_norm_pdf, norm_cdf, norm_pdf, skew_variance_factor, SQRT_2_OVER_PI,
};

/// Scales below this are treated as a point mass when combining laws.
const DEGENERATE_SCALE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewNormalParams {
    /// Location.
    pub xi: f64,
    /// Scale, strictly positive.
    pub omega: f64,
    /// Shape; zero gives the normal law.
    pub beta: f64,
}

/// Weight of the reflected component, beta / sqrt(1 + beta^2).
#[inline]
pub fn delta(beta: f64) -> f64 {
    if beta.is_infinite() {
        return beta.signum();
    }
    beta / (1.0 + beta * beta).sqrt()
}

impl SkewNormalParams {
    pub fn new(xi: f64, omega: f64, beta: f64) -> Result<Self> {
        let p = Self { xi, omega, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn standard(beta: f64) -> Self {
        Self {
            xi: 0.0,
            omega: 1.0,
            beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(Error::Domain(format!(
                "skew-normal scale must be positive, got {}",
                self.omega
            )));
        }
        if !self.xi.is_finite() || self.beta.is_nan() {
            return Err(Error::Domain("non-finite skew-normal parameter".into()));
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        delta(self.beta)
    }

    /// Density at `y`. An infinite shape gives the half-normal limit.
    pub fn pdf(&self, y: f64) -> Result<f64> {
        self.validate()?;
        let z = (y - self.xi) / self.omega;
        let tilt = if self.beta.is_infinite() {
            if z * self.beta > 0.0 {
                1.0
            } else if z == 0.0 {
                0.5
            } else {
                0.0
            }
        } else {
            norm_cdf(self.beta * z)
        };
        Ok(2.0 / self.omega * norm_pdf(z) * tilt)
    }

    /// Log-density; stays finite deep in the suppressed tail.
    pub fn ln_pdf(&self, y: f64) -> f64 {
        let z = (y - self.xi) / self.omega;
        std::f64::consts::LN_2 - self.omega.ln() + ln_norm_pdf(z) + ln_norm_cdf(self.beta * z)
    }

    pub fn mean(&self) -> f64 {
        self.xi + self.omega * self.delta() * SQRT_2_OVER_PI
    }

    pub fn variance(&self) -> f64 {
        skew_variance_factor(self.delta()) * self.omega * self.omega
    }

    /// Third standardized moment.
    pub fn skewness(&self) -> f64 {
        let b = self.delta() * SQRT_2_OVER_PI;
        0.5 * (4.0 - std::f64::consts::PI) * b.powi(3) / (1.0 - b * b).powf(1.5)
    }

    /// Moment-generating function E[exp(kY)].
    pub fn mgf(&self, k: f64) -> f64 {
        2.0 * (k * self.xi + 0.5 * k * k * self.omega * self.omega).exp()
            * norm_cdf(k * self.delta() * self.omega)
    }

    /// Draws `n` variates as xi + omega * (sqrt(1-delta^2) Z1 + delta |Z2|).
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, n)
    }

    pub fn sample_with<R: rand::Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        let d = self.delta();
        let c = (1.0 - d * d).sqrt();
        (0..n)
            .map(|_| {
                let z1: f64 = StandardNormal.sample(rng);
                let z2: f64 = StandardNormal.sample(rng);
                self.xi + self.omega * (c * z1 + d * z2.abs())
            })
            .collect()
    }

    /// Law of `self + N(mu, sigma2)` for an independent normal summand.
    pub fn sum_with_normal(&self, mu: f64, sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0) {
            return Err(Error::Domain(format!(
                "normal variance must be nonnegative, got {sigma2}"
            )));
        }
        let omega2 = self.omega * self.omega;
        let beta = if self.omega < DEGENERATE_SCALE {
            0.0
        } else {
            self.beta / (1.0 + (1.0 + self.beta * self.beta) * sigma2 / omega2).sqrt()
        };
        Ok(Self {
            xi: self.xi + mu,
            omega: (omega2 + sigma2).sqrt(),
            beta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::FRAC_1_SQRT_2PI;

    fn moments(xs: &[f64]) -> (f64, f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let s = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n / v.powf(1.5);
        (m, v, s)
    }

    /// Composite Simpson on [a, b] with `n` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn pdf_examples() {
        let p = SkewNormalParams::standard(0.0);
        assert!((p.pdf(0.0).unwrap() - FRAC_1_SQRT_2PI).abs() < 1e-15);
        let half = SkewNormalParams::standard(f64::INFINITY);
        assert_eq!(half.pdf(-0.3).unwrap(), 0.0);
        assert!((half.pdf(0.3).unwrap() - 2.0 * norm_pdf(0.3)).abs() < 1e-15);
        let p1 = SkewNormalParams::standard(1.0);
        assert!((p1.pdf(0.0).unwrap() - 0.398_942).abs() < 1e-6);
    }

    #[test]
    fn invalid_scale_rejected() {
        assert!(SkewNormalParams::new(0.0, 0.0, 1.0).is_err());
        assert!(SkewNormalParams::new(0.0, -1.0, 1.0).is_err());
        let bad = SkewNormalParams {
            xi: 0.0,
            omega: 0.0,
            beta: 0.0,
        };
        assert!(matches!(bad.pdf(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta(0.0), 0.0);
        assert!((delta(1.0) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((delta(-3.0) + 0.948_68).abs() < 1e-5);
        assert_eq!(delta(f64::INFINITY), 1.0);
    }

    #[test]
    fn moment_examples() {
        assert_eq!(SkewNormalParams::standard(0.0).mean(), 0.0);
        let lim = SkewNormalParams::standard(1e12).variance();
        assert!((lim - 0.363_38).abs() < 1e-5);
        let m = SkewNormalParams::standard(0.0).mgf(1.0);
        assert!((m - 1.648_72).abs() < 1e-5);
    }

    #[test]
    fn pdf_integrates_to_one() {
        for &(xi, omega, beta) in &[(0.0, 1.0, 0.0), (2.0, 3.0, 1.0), (-1.0, 0.2, -7.0), (0.5, 2.0, 40.0)] {
            let p = SkewNormalParams::new(xi, omega, beta).unwrap();
            let mass = simpson(|y| p.pdf(y).unwrap(), xi - 10.0 * omega, xi + 10.0 * omega, 20_000);
            assert!((mass - 1.0).abs() < 1e-8, "({xi},{omega},{beta}) -> {mass}");
        }
    }

    #[test]
    fn mgf_derivative_is_mean() {
        for &(xi, omega, beta) in &[(0.0, 1.0, 0.0), (2.0, 3.0, 1.0), (-0.5, 0.7, -4.0)] {
            let p = SkewNormalParams::new(xi, omega, beta).unwrap();
            let h = 1e-5;
            let d = (p.mgf(h) - p.mgf(-h)) / (2.0 * h);
            assert!((d - p.mean()).abs() < 1e-6, "{d} vs {}", p.mean());
        }
    }

    #[test]
    fn sample_mean_standard_normal() {
        let xs = SkewNormalParams::standard(0.0).sample(1_000_000, 7);
        let (m, _, _) = moments(&xs);
        assert!(m.abs() < 0.01);
    }

    #[test]
    fn sample_right_skewed() {
        let xs = SkewNormalParams::standard(5.0).sample(1_000_000, 8);
        let (_, _, s) = moments(&xs);
        assert!(s > 0.0);
    }

    #[test]
    fn sample_mean_matches_closed_form() {
        let p = SkewNormalParams::new(2.0, 3.0, 1.0).unwrap();
        let xs = p.sample(1_000_000, 9);
        let (m, v, _) = moments(&xs);
        let expected = 2.0 + 3.0 * std::f64::consts::FRAC_1_SQRT_2 * SQRT_2_OVER_PI;
        assert!((m - expected).abs() < 0.02);
        let _ = v;
    }

    #[test]
    fn sample_moments_within_four_over_sqrt_n() {
        for (seed, &(xi, omega, beta)) in [(0.0, 1.0, 0.0), (1.0, 2.0, 3.0), (-2.0, 0.5, -8.0)].iter().enumerate() {
            let p = SkewNormalParams::new(xi, omega, beta).unwrap();
            let n = 100_000;
            let xs = p.sample(n, 100 + seed as u64);
            let (m, v, _) = moments(&xs);
            let bound = 4.0 / (n as f64).sqrt();
            assert!((m - p.mean()).abs() / p.variance().sqrt() < bound);
            assert!((v / p.variance() - 1.0).abs() < bound * 2f64.sqrt());
        }
    }

    #[test]
    fn sum_with_normal_matches_summed_samples_ks() {
        let p = SkewNormalParams::new(0.0, 1.0, 3.0).unwrap();
        let (mu, sigma2) = (0.5f64, 0.8f64);
        let n = 100_000;
        let a = p.sample(n, 11);
        let b = SkewNormalParams::standard(0.0).sample(n, 12);
        let mut sums: Vec<f64> = a.iter().zip(&b).map(|(x, z)| x + mu + sigma2.sqrt() * z).collect();
        sums.sort_by(f64::total_cmp);

        let q = p.sum_with_normal(mu, sigma2).unwrap();
        // CDF of q by cumulative Simpson on a fine grid.
        let lo = q.xi - 12.0 * q.omega;
        let hi = q.xi + 12.0 * q.omega;
        let cells = 40_000;
        let h = (hi - lo) / cells as f64;
        let mut cdf = vec![0.0; cells + 1];
        for i in 0..cells {
            let x0 = lo + i as f64 * h;
            let f = |x: f64| q.pdf(x).unwrap();
            cdf[i + 1] = cdf[i] + h / 6.0 * (f(x0) + 4.0 * f(x0 + 0.5 * h) + f(x0 + h));
        }
        let eval = |x: f64| {
            let t = ((x - lo) / h).clamp(0.0, cells as f64 - 1e-9);
            let i = t.floor() as usize;
            cdf[i] + (t - i as f64) * (cdf[i + 1] - cdf[i])
        };
        let mut ks: f64 = 0.0;
        for (i, &x) in sums.iter().enumerate() {
            let f = eval(x);
            ks = ks.max((f - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - f).abs());
        }
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn sample_deterministic_for_seed() {
        let p = SkewNormalParams::standard(2.0);
        assert_eq!(p.sample(50, 3), p.sample(50, 3));
        assert_ne!(p.sample(50, 3), p.sample(50, 4));
    }

    #[test]
    fn sum_with_normal_examples() {
        let p = SkewNormalParams::standard(2.5);
        assert_eq!(p.sum_with_normal(0.0, 0.0).unwrap().beta, 2.5);
        let n = SkewNormalParams::standard(0.0).sum_with_normal(1.0, 4.0).unwrap();
        assert_eq!(n.beta, 0.0);
        let s = SkewNormalParams::standard(1.0).sum_with_normal(0.0, 1.0).unwrap();
        assert!((s.beta - 0.577_35).abs() < 1e-5);
        assert!((s.omega - 2f64.sqrt()).abs() < 1e-15);
        assert!(SkewNormalParams::standard(1.0).sum_with_normal(0.0, -1.0).is_err());
    }

    #[test]
    fn sum_with_normal_degenerate_scale() {
        let p = SkewNormalParams {
            xi: 1.0,
            omega: 1e-13,
            beta: 3.0,
        };
        let s = p.sum_with_normal(0.0, 1.0).unwrap();
        assert_eq!(s.beta, 0.0);
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn reflection_symmetry(xi in -5.0..5.0f64, omega in 0.05..5.0f64, beta in -20.0..20.0f64, y in -10.0..10.0f64) {
            let p = SkewNormalParams::new(xi, omega, beta).unwrap();
            let q = SkewNormalParams::new(xi, omega, -beta).unwrap();
            let a = p.pdf(y).unwrap();
            let b = q.pdf(2.0 * xi - y).unwrap();
            prop_assert!((a - b).abs() <= 1e-14 * a.max(1.0));
        }

        #[test]
        fn delta_is_odd_and_bounded(beta in -1e6..1e6f64) {
            let d = delta(beta);
            prop_assert!(d > -1.0 && d < 1.0 || beta.abs() > 1e7);
            prop_assert_eq!(delta(-beta), -d);
        }

        #[test]
        fn ln_pdf_matches_pdf(xi in -1.0..1.0f64, omega in 0.1..3.0f64, beta in -10.0..10.0f64, y in -4.0..4.0f64) {
            let p = SkewNormalParams::new(xi, omega, beta).unwrap();
            let d = p.pdf(y).unwrap();
            prop_assume!(d > 1e-200);
            prop_assert!((p.ln_pdf(y) - d.ln()).abs() < 1e-10);
        }
    }
}
