//! Pairwise benchmark/asset principal component factorization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skewdist::delta;
use crate::special::{skew_variance_factor, SQRT_2_OVER_PI};

/// Covariance of (R_B, R_i): [[sigma_b^2, rho sigma_b sigma_i], [., sigma_i^2]],
/// rescaled by 1 - 2 delta_b^2 / pi in the skew case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCov {
    pub sigma_b: f64,
    pub sigma_i: f64,
    pub rho: f64,
    #[serde(default)]
    pub delta_b: f64,
}

impl PairCov {
    pub fn new(sigma_b: f64, sigma_i: f64, rho: f64, delta_b: f64) -> Result<Self> {
        let pc = Self { sigma_b, sigma_i, rho, delta_b };
        pc.validate()?;
        Ok(pc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_b > 0.0 && self.sigma_b.is_finite()) || !(self.sigma_i > 0.0 && self.sigma_i.is_finite()) {
            return Err(Error::Domain(format!(
                "volatilities must be positive, got ({}, {})",
                self.sigma_b, self.sigma_i
            )));
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(Error::Domain(format!("correlation {} outside [-1, 1]", self.rho)));
        }
        if !(self.delta_b.abs() < 1.0) {
            return Err(Error::Domain(format!("delta {} outside (-1, 1)", self.delta_b)));
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        skew_variance_factor(self.delta_b)
    }

    fn cov(&self) -> f64 {
        self.rho * self.sigma_b * self.sigma_i
    }

    /// Entries (s_bb, s_bi, s_ii) of the normal-case matrix.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        let c = self.cov();
        [[self.sigma_b * self.sigma_b, c], [c, self.sigma_i * self.sigma_i]]
    }
}

/// Eigenvalues in decreasing order with unit eigenvectors `e1`, `e2`.
/// Coordinates are (benchmark, asset).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda1: f64,
    pub lambda2: f64,
    pub e1: [f64; 2],
    pub e2: [f64; 2],
}

impl EigenPair {
    pub fn reconstruct(&self) -> [[f64; 2]; 2] {
        let mut m = [[0.0; 2]; 2];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.lambda1 * self.e1[r] * self.e1[c] + self.lambda2 * self.e2[r] * self.e2[c];
            }
        }
        m
    }
}

fn normal_eigenvalues(pc: &PairCov) -> (f64, f64) {
    let a = pc.sigma_b * pc.sigma_b;
    let d = pc.sigma_i * pc.sigma_i;
    let disc = (a - d).hypot(2.0 * pc.cov());
    let l1 = 0.5 * (a + d + disc);
    let det = a * d * (1.0 - pc.rho * pc.rho);
    let l2 = if l1 > 0.0 { (det / l1).max(0.0) } else { 0.0 };
    (l1, l2)
}

fn orient(v: [f64; 2]) -> [f64; 2] {
    if v[1] < 0.0 || (v[1] == 0.0 && v[0] < 0.0) {
        [-v[0], -v[1]]
    } else {
        v
    }
}

/// Closed-form eigendecomposition. The skew case rescales the eigenvalues
/// and keeps the eigenvectors.
pub fn eigen2x2(pc: &PairCov, skew: bool) -> EigenPair {
    let (l1, l2) = normal_eigenvalues(pc);
    let a = pc.sigma_b * pc.sigma_b;
    let d = pc.sigma_i * pc.sigma_i;
    let c = pc.cov();

    // Null vector of (S - l1 I) taken from its larger row.
    let r1 = [c, l1 - a];
    let r2 = [l1 - d, c];
    let v = if r1[0].hypot(r1[1]) >= r2[0].hypot(r2[1]) { r1 } else { r2 };
    let n = v[0].hypot(v[1]);
    let e1 = if n > 0.0 { orient([v[0] / n, v[1] / n]) } else { [1.0, 0.0] };
    let e2 = orient([-e1[1], e1[0]]);

    let k = if skew { pc.kappa() } else { 1.0 };
    EigenPair {
        lambda1: k * l1,
        lambda2: k * l2,
        e1,
        e2,
    }
}

/// How the shapes of the two component scores are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ComponentShapes {
    /// Both components take the asset's propagated shape.
    #[default]
    AssetShape,
    Explicit { beta1: f64, beta2: f64 },
}

impl ComponentShapes {
    /// Variance factors (xi_1, xi_2) = 1 - 2 delta_q^2 / pi.
    pub fn xis(&self, beta_i: f64) -> (f64, f64) {
        let (b1, b2) = match *self {
            ComponentShapes::AssetShape => (beta_i, beta_i),
            ComponentShapes::Explicit { beta1, beta2 } => (beta1, beta2),
        };
        (skew_variance_factor(delta(b1)), skew_variance_factor(delta(b2)))
    }

    pub fn deltas(&self, beta_i: f64) -> (f64, f64) {
        match *self {
            ComponentShapes::AssetShape => (delta(beta_i), delta(beta_i)),
            ComponentShapes::Explicit { beta1, beta2 } => (delta(beta1), delta(beta2)),
        }
    }
}

fn product_share(c: f64, g: f64) -> f64 {
    let den = c * c + g * g;
    if den == 0.0 {
        0.0
    } else {
        (c * g) / den
    }
}

/// Component contributions (C1, C2) to Cov(R_B, R_i).
///
/// Normal: C_q = e_1q e_2q lambda_q. Skew: the same weights times
/// xi_q * lambda~_q. `xi1`/`xi2` are ignored in the normal case.
pub fn cov_coeffs(pc: &PairCov, skew: bool, xi1: f64, xi2: f64) -> Result<(f64, f64)> {
    pc.validate()?;
    let lo = 1.0 - 2.0 / std::f64::consts::PI;
    if skew {
        for xi in [xi1, xi2] {
            if !(xi > lo && xi <= 1.0) {
                return Err(Error::Domain(format!("variance factor {xi} outside (1 - 2/pi, 1]")));
            }
        }
    }
    let (l1, l2) = normal_eigenvalues(pc);
    let a = pc.sigma_b * pc.sigma_b;
    let c = pc.cov();
    let s1 = product_share(c, l1 - a);
    let s2 = product_share(c, l2 - a);
    let (c1, c2) = if skew {
        let k = pc.kappa();
        (xi1 * (k * l1) * s1, xi2 * (k * l2) * s2)
    } else {
        (l1 * s1, l2 * s2)
    };
    Ok((c1 + 0.0, c2 + 0.0))
}

/// Distance of the eigenvalue pair from the ideal tracker's (2 sigma_b^2, 0),
/// both rescaled in the skew case.
pub fn eigen_distance(pc: &PairCov, skew: bool) -> f64 {
    let (l1, l2) = normal_eigenvalues(pc);
    let target = 2.0 * pc.sigma_b * pc.sigma_b;
    if skew {
        let k = pc.kappa();
        (k * l1 - k * target).hypot(k * l2)
    } else {
        (l1 - target).hypot(l2)
    }
}

/// Two-factor representation R_B = alpha_b + g11 Z1 + g12 Z2,
/// R_i = alpha_i + g21 Z1 + g22 Z2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorLoadings {
    pub eigen: EigenPair,
    pub gamma: [[f64; 2]; 2],
    pub alpha_b: f64,
    pub alpha_i: f64,
}

/// Loadings and intercepts given the means of R_B and R_i. In the skew
/// case the intercepts remove the sqrt(2/pi) drift of the component scores.
pub fn factor_loadings(
    pc: &PairCov,
    skew: bool,
    mean_b: f64,
    mean_i: f64,
    beta_i: f64,
    shapes: ComponentShapes,
) -> FactorLoadings {
    let eigen = eigen2x2(pc, skew);
    let s1 = eigen.lambda1.sqrt();
    let s2 = eigen.lambda2.sqrt();
    let gamma = [[eigen.e1[0] * s1, eigen.e2[0] * s2], [eigen.e1[1] * s1, eigen.e2[1] * s2]];
    let (alpha_b, alpha_i) = if skew {
        let (d1, d2) = shapes.deltas(beta_i);
        (
            mean_b - SQRT_2_OVER_PI * (gamma[0][0] * d1 + gamma[0][1] * d2),
            mean_i - SQRT_2_OVER_PI * (gamma[1][0] * d1 + gamma[1][1] * d2),
        )
    } else {
        (mean_b, mean_i)
    };
    FactorLoadings { eigen, gamma, alpha_b, alpha_i }
}
