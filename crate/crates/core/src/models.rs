//! Closed-form model families.
//!
//! * Multiquadratic bivariate covariance on S^d (d ≥ 2), with Schoenberg
//!   coefficients `b_n(i,j) = ρ_ij σ_i σ_j binom(d+n−2, n) α_ij^n (1−α_ij)^{d−1}`.
//! * Legendre–Matérn operator family on S² with Fourier-diagonal coefficients
//!   `(2l+1) γ_{l,k} = σ² / (α + k² + l²)^{ν+1/2}`.
//!
//! The multiquadratic coefficients above expand the kernel in the normalized
//! polynomials `C_n^λ(t) / C_n^λ(1)`. [`build_sequence`] divides by `C_n^λ(1)`
//! so that the resulting sequence follows the crate-wide convention
//! `R(t) = Σ b_n C_n^λ(t)`. The rescaling is common to every entry of a
//! degree, so validity and equivalence are unaffected.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{ln_gegenbauer_at_one, SphereDim};
use crate::schoenberg::{GeometricComponent, SchoenbergOperator, SchoenbergSequence, TailDescriptor};

pub const DEFAULT_L_MAX: usize = 200;
pub const DEFAULT_K_MAX: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiquadraticParams {
    pub d: SphereDim,
    /// Marginal scales `(σ_1, σ_2)`.
    pub sigma: [f64; 2],
    /// Cross-correlation `ρ_12 ∈ (0, 1)`.
    pub rho12: f64,
    /// Geodesic decay `(α_11, α_22, α_12)`, each in (0, 1).
    pub alpha: [f64; 3],
}

/// Outcome of the multiquadratic validity conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiquadraticValidity {
    pub valid: bool,
    /// `min(√(α_11 α_22) − α_12, ρ_bound − ρ_12)`.
    pub margin: f64,
    /// `α_12 ≤ √(α_11 α_22)`.
    pub alpha_condition: bool,
    /// `ρ_12 < ρ_bound`.
    pub rho_condition: bool,
    /// `((1−α_11)(1−α_22)/(1−α_12)²)^{(d−1)/2}`.
    pub rho_bound: f64,
}

impl MultiquadraticValidity {
    /// Human-readable description of the first violated condition.
    pub fn violation(&self, p: &MultiquadraticParams) -> Option<String> {
        let [a11, a22, a12] = p.alpha;
        if !self.alpha_condition {
            Some(format!("alpha12 <= sqrt(alpha11 * alpha22) violated: {a12} > {}", (a11 * a22).sqrt()))
        } else if !self.rho_condition {
            Some(format!(
                "rho12 < ((1 - alpha11)(1 - alpha22) / (1 - alpha12)^2)^((d - 1) / 2) violated: {} >= {}",
                p.rho12, self.rho_bound
            ))
        } else {
            None
        }
    }
}

impl MultiquadraticParams {
    /// Checks parameter ranges (not the validity conditions).
    pub fn check_ranges(&self) -> Result<()> {
        let open01 = |v: f64| v > 0.0 && v < 1.0;
        if self.d.get() < 2 {
            return Err(Error::InvalidModel(
                "multiquadratic model needs d >= 2 (the coefficients degenerate on the circle)".into(),
            ));
        }
        if !self.sigma.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::InvalidModel(format!("sigma must be positive, got {:?}", self.sigma)));
        }
        if !open01(self.rho12) {
            return Err(Error::InvalidModel(format!("rho12 must lie in (0, 1), got {}", self.rho12)));
        }
        if !self.alpha.iter().all(|&a| open01(a)) {
            return Err(Error::InvalidModel(format!("alpha entries must lie in (0, 1), got {:?}", self.alpha)));
        }
        Ok(())
    }

    fn entry_params(&self, i: usize, j: usize) -> (f64, f64) {
        let rho = if i == j { 1.0 } else { self.rho12 };
        let alpha = if i == j { self.alpha[i] } else { self.alpha[2] };
        (rho * self.sigma[i] * self.sigma[j], alpha)
    }

    fn ln_entry(&self, i: usize, j: usize, n: usize, with_binom: bool) -> f64 {
        let (scale, alpha) = self.entry_params(i, j);
        let dm1 = self.d.get() as f64 - 1.0;
        let binom = if with_binom { ln_gegenbauer_at_one(self.d.gegenbauer_order(), n) } else { 0.0 };
        scale.ln() + binom + n as f64 * alpha.ln() + dm1 * (1.0 - alpha).ln()
    }

    fn coeff_matrix(&self, n: usize, with_binom: bool) -> DMatrix<f64> {
        DMatrix::from_fn(2, 2, |i, j| self.ln_entry(i.min(j), i.max(j), n, with_binom).exp())
    }
}

pub fn multiquadratic_validity(p: &MultiquadraticParams) -> MultiquadraticValidity {
    let [a11, a22, a12] = p.alpha;
    let geo = (a11 * a22).sqrt();
    let rho_bound = ((1.0 - a11) * (1.0 - a22) / (1.0 - a12).powi(2)).powf((p.d.get() as f64 - 1.0) / 2.0);
    let alpha_condition = a12 <= geo;
    let rho_condition = p.rho12 < rho_bound;
    MultiquadraticValidity {
        valid: alpha_condition && rho_condition,
        margin: (geo - a12).min(rho_bound - p.rho12),
        alpha_condition,
        rho_condition,
        rho_bound,
    }
}

/// The 2×2 coefficient `b_n` in the normalized-Gegenbauer convention, evaluated
/// in log space. Not checked for definiteness: invalid parameters may give an
/// indefinite matrix.
pub fn multiquadratic_coeff(p: &MultiquadraticParams, n: usize) -> SchoenbergOperator {
    SchoenbergOperator::Matrix(p.coeff_matrix(n, true))
}

/// Closed-form kernel value together with whether it matches the coefficient
/// series (only on S³).
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormKernel {
    pub value: DMatrix<f64>,
    pub series_consistent: bool,
}

/// `ρ_ij σ_i σ_j (1−α_ij)² / (1 + α_ij² − 2 α_ij cos θ)`.
pub fn multiquadratic_kernel_closed_form(p: &MultiquadraticParams, theta: f64) -> ClosedFormKernel {
    let c = theta.cos();
    let value = DMatrix::from_fn(2, 2, |i, j| {
        let (scale, a) = p.entry_params(i, j);
        scale * (1.0 - a).powi(2) / (1.0 + a * a - 2.0 * a * c)
    });
    ClosedFormKernel { value, series_consistent: p.d.get() == 3 }
}

/// Kernel summed from the coefficients in closed form for any d, via the
/// Gegenbauer generating function:
/// `ρ_ij σ_i σ_j (1−α_ij)^{d−1} / (1 − 2 α_ij cos θ + α_ij²)^{(d−1)/2}`.
pub fn multiquadratic_kernel_generating(p: &MultiquadraticParams, theta: f64) -> DMatrix<f64> {
    let c = theta.cos();
    let lam = (p.d.get() as f64 - 1.0) / 2.0;
    DMatrix::from_fn(2, 2, |i, j| {
        let (scale, a) = p.entry_params(i, j);
        scale * ((1.0 - a).powi(2) / (1.0 - 2.0 * a * c + a * a)).powf(lam)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegendreMaternParams {
    pub sigma: f64,
    pub alpha: f64,
    pub nu: f64,
    #[serde(default = "default_l_max", rename = "L_max", alias = "l_max")]
    pub l_max: usize,
    #[serde(default = "default_k_max", rename = "K_max", alias = "k_max")]
    pub k_max: usize,
}

fn default_l_max() -> usize {
    DEFAULT_L_MAX
}

fn default_k_max() -> usize {
    DEFAULT_K_MAX
}

impl LegendreMaternParams {
    pub fn new(sigma: f64, alpha: f64, nu: f64) -> Self {
        LegendreMaternParams { sigma, alpha, nu, l_max: DEFAULT_L_MAX, k_max: DEFAULT_K_MAX }
    }

    pub fn with_truncation(mut self, l_max: usize, k_max: usize) -> Self {
        self.l_max = l_max;
        self.k_max = k_max;
        self
    }

    pub fn check(&self) -> Result<()> {
        for (name, v) in [("sigma", self.sigma), ("alpha", self.alpha), ("nu", self.nu)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidModel(format!("{name} must be positive, got {v}")));
            }
        }
        if self.l_max < 1 || self.k_max < 1 {
            return Err(Error::InvalidModel("L_max and K_max must be >= 1".into()));
        }
        Ok(())
    }

    /// `γ_{l,k} = σ² / ((2l+1)(α + k² + l²)^{ν+1/2})`.
    pub fn gamma(&self, l: usize, k: usize) -> f64 {
        legendre_matern_gamma(self, l, k)
    }
}

pub fn legendre_matern_gamma(p: &LegendreMaternParams, l: usize, k: usize) -> f64 {
    let (l, k) = (l as f64, k as f64);
    p.sigma * p.sigma / ((2.0 * l + 1.0) * (p.alpha + k * k + l * l).powf(p.nu + 0.5))
}

/// A model block from a parameter file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Multiquadratic(MultiquadraticParams),
    LegendreMatern(LegendreMaternParams),
}

impl ModelSpec {
    pub fn dim(&self) -> SphereDim {
        match self {
            ModelSpec::Multiquadratic(p) => p.d,
            ModelSpec::LegendreMatern(_) => SphereDim::new(2).expect("2 >= 1"),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            ModelSpec::Multiquadratic(_) => "multiquadratic",
            ModelSpec::LegendreMatern(_) => "legendre_matern",
        }
    }

    /// Checks ranges and, for the multiquadratic family, the validity conditions.
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Multiquadratic(p) => {
                p.check_ranges()?;
                let v = multiquadratic_validity(p);
                match v.violation(p) {
                    Some(msg) => Err(Error::InvalidModel(msg)),
                    None => Ok(()),
                }
            }
            ModelSpec::LegendreMatern(p) => p.check(),
        }
    }

    /// Multiplies every covariance by `c² ` (σ → c·σ).
    pub fn with_sigma_scaled(&self, c: f64) -> ModelSpec {
        match *self {
            ModelSpec::Multiquadratic(mut p) => {
                p.sigma = [p.sigma[0] * c, p.sigma[1] * c];
                ModelSpec::Multiquadratic(p)
            }
            ModelSpec::LegendreMatern(mut p) => {
                p.sigma *= c;
                ModelSpec::LegendreMatern(p)
            }
        }
    }
}

/// Materializes the family's Schoenberg sequence up to `l_max`, with its
/// closed-form tail descriptor. Legendre–Matérn uses its own `K_max`.
pub fn build_sequence(spec: &ModelSpec, l_max: usize) -> Result<SchoenbergSequence> {
    spec.validate()?;
    match spec {
        ModelSpec::Multiquadratic(p) => {
            let coeffs = (0..=l_max).map(|n| SchoenbergOperator::Matrix(p.coeff_matrix(n, false))).collect();
            let dm1 = p.d.get() as i32 - 1;
            let components = (0..2)
                .map(|i| GeometricComponent {
                    scale: p.sigma[i] * p.sigma[i] * (1.0 - p.alpha[i]).powi(dm1),
                    ratio: p.alpha[i],
                })
                .collect();
            SchoenbergSequence::new(p.d, coeffs, Some(TailDescriptor::Geometric { components }))
        }
        ModelSpec::LegendreMatern(p) => {
            let coeffs = (0..=l_max)
                .map(|l| SchoenbergOperator::FourierDiagonal((0..=p.k_max).map(|k| p.gamma(l, k)).collect()))
                .collect();
            SchoenbergSequence::new(
                spec.dim(),
                coeffs,
                Some(TailDescriptor::LegendreMatern { sigma: p.sigma, alpha: p.alpha, nu: p.nu }),
            )
        }
    }
}
