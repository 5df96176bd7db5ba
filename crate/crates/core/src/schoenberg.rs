//! Operator-valued Schoenberg sequences and the isotropic kernels they induce.
//!
//! A sequence `{b_l}` of positive semi-definite trace-class operators defines
//! the kernel `R(t) = Σ_l b_l C_l^λ(t)`, `λ = (d-1)/2`. Three concrete operator
//! shapes are supported: scalars, `p × p` symmetric matrices, and operators that
//! are diagonal in the real Fourier basis of L²([0,1]).
//!
//! Coefficients follow the unnormalized Gegenbauer convention above. Sampling
//! with orthonormal harmonics uses the rescaled operators
//! `b̂_l = b_l · ω_d C_l^λ(1) / h(l)` (see [`SchoenbergSequence::synthesis_coeff`]).

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::harmonics::{
    gegenbauer_at_one, gegenbauer_table, h_weight, ln_gegenbauer_at_one, surface_measure, SphereDim,
};

/// Relative tolerance for symmetry and PSD checks (`min eig ≥ −tol · trace`).
pub const PSD_REL_TOL: f64 = 1e-12;

/// Multiplicity of the folded Fourier index `k`: 1 for k = 0, 2 otherwise.
#[inline]
pub fn fold_multiplicity(k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Scalar,
    Matrix,
    FourierDiagonal,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Scalar => "scalar",
            Variant::Matrix => "matrix",
            Variant::FourierDiagonal => "fourier_diagonal",
        })
    }
}

/// One Schoenberg coefficient `b_l`.
///
/// `FourierDiagonal(γ)` stands for `Σ_k γ_k e_k ⊗ e_k` over all integer
/// frequencies with `γ_k = γ_{-k}`; entry `k` of the vector carries both signs.
/// Use the checked constructors; the variants are public for pattern matching.
#[derive(Debug, Clone, PartialEq)]
pub enum SchoenbergOperator {
    Scalar(f64),
    Matrix(DMatrix<f64>),
    FourierDiagonal(Vec<f64>),
}

impl SchoenbergOperator {
    pub fn scalar(b: f64) -> Result<Self> {
        let op = SchoenbergOperator::Scalar(b);
        op.check()?;
        Ok(op)
    }

    pub fn matrix(m: DMatrix<f64>) -> Result<Self> {
        let op = SchoenbergOperator::Matrix(m);
        op.check()?;
        Ok(op)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if p == 0 || rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidArgument("matrix coefficient must be square and nonempty".into()));
        }
        SchoenbergOperator::matrix(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
    }

    pub fn fourier_diagonal(gammas: Vec<f64>) -> Result<Self> {
        let op = SchoenbergOperator::FourierDiagonal(gammas);
        op.check()?;
        Ok(op)
    }

    /// Checks the variant invariants: finite entries, symmetry and PSD for
    /// matrices, strictly positive Fourier entries, nonnegative scalars.
    pub fn check(&self) -> Result<()> {
        match self {
            SchoenbergOperator::Scalar(b) => {
                if !(b.is_finite() && *b >= 0.0) {
                    return Err(Error::InvalidArgument(format!("scalar coefficient must be >= 0, got {b}")));
                }
            }
            SchoenbergOperator::Matrix(m) => {
                if m.nrows() == 0 || m.nrows() != m.ncols() {
                    return Err(Error::InvalidArgument("matrix coefficient must be square and nonempty".into()));
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("matrix coefficient has non-finite entries".into()));
                }
                let norm = m.norm();
                let asym = (m - m.transpose()).norm();
                if asym > PSD_REL_TOL * norm {
                    return Err(Error::InvalidArgument(format!(
                        "matrix coefficient not symmetric (asymmetry {asym:e})"
                    )));
                }
                let tr = m.trace();
                let min = self.min_eigenvalue();
                if min < -PSD_REL_TOL * tr.abs() {
                    return Err(Error::InvalidArgument(format!(
                        "matrix coefficient not positive semi-definite (min eigenvalue {min:e}, trace {tr:e})"
                    )));
                }
            }
            SchoenbergOperator::FourierDiagonal(g) => {
                if g.is_empty() {
                    return Err(Error::InvalidArgument("Fourier-diagonal coefficient is empty".into()));
                }
                if let Some(v) = g.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                    return Err(Error::InvalidArgument(format!("Fourier-diagonal entries must be > 0, got {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn variant(&self) -> Variant {
        match self {
            SchoenbergOperator::Scalar(_) => Variant::Scalar,
            SchoenbergOperator::Matrix(_) => Variant::Matrix,
            SchoenbergOperator::FourierDiagonal(_) => Variant::FourierDiagonal,
        }
    }

    /// Size of the stored representation: 1, `p`, or `K_max + 1`.
    pub fn dim(&self) -> usize {
        match self {
            SchoenbergOperator::Scalar(_) => 1,
            SchoenbergOperator::Matrix(m) => m.nrows(),
            SchoenbergOperator::FourierDiagonal(g) => g.len(),
        }
    }

    /// Dimension of the real vector space the operator acts on
    /// (`2 K_max + 1` for the Fourier variant).
    pub fn real_dim(&self) -> usize {
        match self {
            SchoenbergOperator::FourierDiagonal(g) => 2 * g.len() - 1,
            _ => self.dim(),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            SchoenbergOperator::Scalar(b) => *b,
            SchoenbergOperator::Matrix(m) => m.trace(),
            SchoenbergOperator::FourierDiagonal(g) => g.iter().enumerate().map(|(k, v)| fold_multiplicity(k) * v).sum(),
        }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        match self {
            SchoenbergOperator::Scalar(b) => vec![*b],
            SchoenbergOperator::Matrix(m) => m.clone().symmetric_eigenvalues().iter().copied().collect(),
            SchoenbergOperator::FourierDiagonal(g) => g.clone(),
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// `min eigenvalue / trace`; 0 for the zero operator.
    pub fn psd_margin(&self) -> f64 {
        let tr = self.trace();
        if tr > 0.0 {
            self.min_eigenvalue() / tr
        } else {
            0.0
        }
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -PSD_REL_TOL * self.trace().abs()
    }

    /// `min eigenvalue / p` of `D b D` with `D = diag(b)^{-1/2}`; 0 when a
    /// diagonal entry is not positive. Invariant under positive diagonal
    /// rescaling, unlike [`Self::psd_margin`].
    pub fn equilibrated_margin(&self) -> f64 {
        match self {
            SchoenbergOperator::Scalar(b) => f64::from(*b > 0.0),
            SchoenbergOperator::FourierDiagonal(g) => f64::from(g.iter().all(|v| *v > 0.0)),
            SchoenbergOperator::Matrix(m) => {
                let p = m.nrows();
                if (0..p).any(|i| !(m[(i, i)] > 0.0)) {
                    return 0.0;
                }
                let s: Vec<f64> = (0..p).map(|i| 1.0 / m[(i, i)].sqrt()).collect();
                let eq = DMatrix::from_fn(p, p, |i, j| m[(i, j)] * s[i] * s[j]);
                eq.symmetric_eigenvalues().min() / p as f64
            }
        }
    }

    /// Positive definite beyond rounding jitter, judged on the equilibrated operator.
    pub fn is_strictly_positive(&self) -> bool {
        self.equilibrated_margin() > PSD_REL_TOL
    }

    pub fn scaled(&self, c: f64) -> Self {
        match self {
            SchoenbergOperator::Scalar(b) => SchoenbergOperator::Scalar(c * b),
            SchoenbergOperator::Matrix(m) => SchoenbergOperator::Matrix(m * c),
            SchoenbergOperator::FourierDiagonal(g) => {
                SchoenbergOperator::FourierDiagonal(g.iter().map(|v| c * v).collect())
            }
        }
    }

    pub fn require_compatible(&self, other: &SchoenbergOperator) -> Result<()> {
        if self.variant() != other.variant() || self.dim() != other.dim() {
            return Err(Error::Incompatible(format!(
                "{} of size {} vs {} of size {}",
                self.variant(),
                self.dim(),
                other.variant(),
                other.dim()
            )));
        }
        Ok(())
    }

    /// `⟨b u, u⟩`. For the Fourier variant `u` is folded: `u_k` multiplies
    /// both real basis functions of frequency k.
    pub fn quadratic_form(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "direction has length {}, operator needs {}",
                u.len(),
                self.dim()
            )));
        }
        Ok(match self {
            SchoenbergOperator::Scalar(b) => b * u[0] * u[0],
            SchoenbergOperator::Matrix(m) => {
                let v = nalgebra::DVector::from_column_slice(u);
                (v.transpose() * m * &v)[(0, 0)]
            }
            SchoenbergOperator::FourierDiagonal(g) => {
                g.iter().zip(u).enumerate().map(|(k, (gk, uk))| fold_multiplicity(k) * gk * uk * uk).sum()
            }
        })
    }

    /// Dense matrix form (the Fourier variant as its folded diagonal).
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            SchoenbergOperator::Scalar(b) => DMatrix::from_element(1, 1, *b),
            SchoenbergOperator::Matrix(m) => m.clone(),
            SchoenbergOperator::FourierDiagonal(g) => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(g)),
        }
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mapped = eig.eigenvalues.map(f);
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&mapped) * v.transpose()))
}

fn strictness_error(op: &SchoenbergOperator) -> Error {
    let ev = op.eigenvalues();
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tr = op.trace();
    Error::NotStrictlyPositive {
        min_eigenvalue: min,
        threshold: PSD_REL_TOL * tr,
        trace: tr,
        condition: if min > 0.0 { max / min } else { f64::INFINITY },
    }
}

/// `b^{-1/2}` for a strictly positive operator.
pub fn operator_inv_sqrt(op: &SchoenbergOperator) -> Result<SchoenbergOperator> {
    let tr = op.trace();
    if !(tr > 0.0 && op.min_eigenvalue() > PSD_REL_TOL * tr) {
        return Err(strictness_error(op));
    }
    Ok(match op {
        SchoenbergOperator::Scalar(b) => SchoenbergOperator::Scalar(1.0 / b.sqrt()),
        SchoenbergOperator::Matrix(m) => SchoenbergOperator::Matrix(spectral_map(m, |v| 1.0 / v.sqrt())),
        SchoenbergOperator::FourierDiagonal(g) => {
            SchoenbergOperator::FourierDiagonal(g.iter().map(|v| 1.0 / v.sqrt()).collect())
        }
    })
}

/// PSD square root `b^{1/2}`; eigenvalues below zero (rounding dust) become zero modes.
pub fn operator_sqrt(op: &SchoenbergOperator) -> SchoenbergOperator {
    match op {
        SchoenbergOperator::Scalar(b) => SchoenbergOperator::Scalar(b.max(0.0).sqrt()),
        SchoenbergOperator::Matrix(m) => SchoenbergOperator::Matrix(spectral_map(m, |v| v.max(0.0).sqrt())),
        SchoenbergOperator::FourierDiagonal(g) => {
            SchoenbergOperator::FourierDiagonal(g.iter().map(|v| v.sqrt()).collect())
        }
    }
}

/// `‖op − I‖²` in Hilbert–Schmidt norm. The Fourier variant counts each
/// folded frequency k ≥ 1 twice.
pub fn hs_distance_to_identity(op: &SchoenbergOperator) -> f64 {
    match op {
        SchoenbergOperator::Scalar(b) => (b - 1.0).powi(2),
        SchoenbergOperator::Matrix(m) => {
            let p = m.nrows();
            (m - DMatrix::<f64>::identity(p, p)).norm_squared()
        }
        SchoenbergOperator::FourierDiagonal(g) => {
            g.iter().enumerate().map(|(k, v)| fold_multiplicity(k) * (v - 1.0).powi(2)).sum()
        }
    }
}

/// `outer^{-1/2} (inner − outer) outer^{-1/2}`, i.e. the whitened operator
/// minus the identity.
///
/// The difference is formed before conjugating so that nearly equal pairs
/// keep their relative accuracy. Matrices are first equilibrated by
/// `D = diag(outer)^{-1/2}`; the result is congruence-invariant, and the
/// rescaling keeps coefficients whose diagonal entries decay at different
/// geometric rates well conditioned. Strictness of `outer` is judged on the
/// equilibrated matrix.
pub fn whitened_difference(inner: &SchoenbergOperator, outer: &SchoenbergOperator) -> Result<SchoenbergOperator> {
    inner.require_compatible(outer)?;
    match (inner, outer) {
        (SchoenbergOperator::Scalar(a), SchoenbergOperator::Scalar(b)) => {
            if !outer.is_strictly_positive() {
                return Err(strictness_error(outer));
            }
            Ok(SchoenbergOperator::Scalar((a - b) / b))
        }
        (SchoenbergOperator::FourierDiagonal(a), SchoenbergOperator::FourierDiagonal(b)) => {
            Ok(SchoenbergOperator::FourierDiagonal(a.iter().zip(b).map(|(x, y)| (x - y) / y).collect()))
        }
        (SchoenbergOperator::Matrix(a), SchoenbergOperator::Matrix(b)) => {
            let p = b.nrows();
            if (0..p).any(|i| !(b[(i, i)] > 0.0)) {
                return Err(strictness_error(outer));
            }
            let scale: Vec<f64> = (0..p).map(|i| 1.0 / b[(i, i)].sqrt()).collect();
            let eq = |m: &DMatrix<f64>| DMatrix::from_fn(p, p, |i, j| m[(i, j)] * scale[i] * scale[j]);
            let diff = eq(&(a - b));
            let SchoenbergOperator::Matrix(w) = operator_inv_sqrt(&SchoenbergOperator::Matrix(eq(b)))? else {
                unreachable!()
            };
            Ok(SchoenbergOperator::Matrix(symmetrize(&(&w * diff * &w))))
        }
        _ => unreachable!("compatibility checked above"),
    }
}

/// Squared Hilbert–Schmidt norm of an operator (folded multiplicities for
/// the Fourier variant).
pub fn hs_norm_squared(op: &SchoenbergOperator) -> f64 {
    match op {
        SchoenbergOperator::Scalar(v) => v * v,
        SchoenbergOperator::Matrix(m) => m.norm_squared(),
        SchoenbergOperator::FourierDiagonal(g) => g.iter().enumerate().map(|(k, v)| fold_multiplicity(k) * v * v).sum(),
    }
}

/// `⟨(a − b) u, u⟩` computed from the entrywise difference.
pub fn quadratic_form_difference(a: &SchoenbergOperator, b: &SchoenbergOperator, u: &[f64]) -> Result<f64> {
    a.require_compatible(b)?;
    let diff = match (a, b) {
        (SchoenbergOperator::Scalar(x), SchoenbergOperator::Scalar(y)) => SchoenbergOperator::Scalar(x - y),
        (SchoenbergOperator::Matrix(x), SchoenbergOperator::Matrix(y)) => SchoenbergOperator::Matrix(x - y),
        (SchoenbergOperator::FourierDiagonal(x), SchoenbergOperator::FourierDiagonal(y)) => {
            SchoenbergOperator::FourierDiagonal(x.iter().zip(y).map(|(p, q)| p - q).collect())
        }
        _ => unreachable!("compatibility checked above"),
    };
    diff.quadratic_form(u)
}

/// Closed-form bound (or exact generator) for the coefficients beyond the
/// materialized degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum TailDescriptor {
    /// `trace(b_l) = Σ_i scale_i · ratio_i^l` with `0 < ratio_i < 1`.
    Geometric { components: Vec<GeometricComponent> },
    /// Legendre–Matérn spectrum on S²: `(2l+1) γ_{l,k} = σ² / (α + k² + l²)^{ν+1/2}`.
    LegendreMatern { sigma: f64, alpha: f64, nu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricComponent {
    pub scale: f64,
    pub ratio: f64,
}

/// Degree weight used for tail sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailWeight {
    /// `C_l^λ(1)`: truncation error of the variance `R(1)`.
    Variance,
    /// `h(l)`: truncation error of the summability series `Σ h(l) trace(b_l)`.
    Eigenspace,
}

impl TailWeight {
    fn ln_weight(self, d: SphereDim, l: usize) -> f64 {
        match self {
            TailWeight::Variance => ln_gegenbauer_at_one(d.gegenbauer_order(), l),
            TailWeight::Eigenspace => h_weight(d, l).ln(),
        }
    }
}

impl TailDescriptor {
    /// Upper bound on `Σ_{l > l_max} w(l) trace(b_l)`.
    pub fn tail_bound(&self, d: SphereDim, l_max: usize, weight: TailWeight) -> f64 {
        match self {
            TailDescriptor::Geometric { components } => {
                // w(l+1)/w(l) is non-increasing for both weights, so the first
                // ratio (floored at 1) dominates the whole tail.
                let w1 = weight.ln_weight(d, l_max + 1);
                let w2 = weight.ln_weight(d, l_max + 2);
                let growth = (w2 - w1).exp().max(1.0);
                components
                    .iter()
                    .map(|c| {
                        if c.scale == 0.0 {
                            return 0.0;
                        }
                        let q = c.ratio * growth;
                        if q >= 1.0 {
                            return f64::INFINITY;
                        }
                        (c.scale.ln() + (l_max + 1) as f64 * c.ratio.ln() + w1).exp() / (1.0 - q)
                    })
                    .sum()
            }
            TailDescriptor::LegendreMatern { sigma, alpha: _, nu } => {
                // Σ_k (α + k² + l²)^{-s} ≤ l^{-2s} + G l^{1-2s}, G = √π Γ(s-½)/Γ(s);
                // the sums over l are bounded by integrals of decreasing majorants.
                let s = nu + 0.5;
                let g = std::f64::consts::PI.sqrt() * gamma(s - 0.5) / gamma(s);
                let l = (l_max.max(1)) as f64;
                let s2 = sigma * sigma;
                match weight {
                    TailWeight::Variance => {
                        s2 * (l.powf(-2.0 * s) / (4.0 * s) + g * l.powf(1.0 - 2.0 * s) / (2.0 * (2.0 * s - 1.0)))
                    }
                    TailWeight::Eigenspace => {
                        if s <= 1.0 {
                            f64::INFINITY
                        } else {
                            s2 * (l.powf(1.0 - 2.0 * s) / (2.0 * s - 1.0) + g * l.powf(2.0 - 2.0 * s) / (2.0 * s - 2.0))
                        }
                    }
                }
            }
        }
    }
}

/// A d-Schoenberg sequence truncated at `L_max = coeffs.len() - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SequenceFile", into = "SequenceFile")]
pub struct SchoenbergSequence {
    dim: SphereDim,
    coeffs: Vec<SchoenbergOperator>,
    tail: Option<TailDescriptor>,
}

impl SchoenbergSequence {
    pub fn new(dim: SphereDim, coeffs: Vec<SchoenbergOperator>, tail: Option<TailDescriptor>) -> Result<Self> {
        let Some(first) = coeffs.first() else {
            return Err(Error::InvalidArgument("a Schoenberg sequence needs at least b_0".into()));
        };
        for (l, c) in coeffs.iter().enumerate() {
            if c.variant() != first.variant() || c.dim() != first.dim() {
                return Err(Error::Incompatible(format!(
                    "heterogeneous sequence: b_0 is {} of size {}, b_{l} is {} of size {}",
                    first.variant(),
                    first.dim(),
                    c.variant(),
                    c.dim()
                )));
            }
            c.check().map_err(|e| Error::InvalidArgument(format!("b_{l}: {e}")))?;
        }
        Ok(SchoenbergSequence { dim, coeffs, tail })
    }

    pub fn dim(&self) -> SphereDim {
        self.dim
    }

    pub fn l_max(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[SchoenbergOperator] {
        &self.coeffs
    }

    pub fn coeff(&self, l: usize) -> Option<&SchoenbergOperator> {
        self.coeffs.get(l)
    }

    pub fn tail(&self) -> Option<&TailDescriptor> {
        self.tail.as_ref()
    }

    pub fn variant(&self) -> Variant {
        self.coeffs[0].variant()
    }

    /// Size of each coefficient's representation.
    pub fn op_dim(&self) -> usize {
        self.coeffs[0].dim()
    }

    pub fn require_compatible(&self, other: &SchoenbergSequence) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::Incompatible(format!(
                "sphere dimensions differ: {} vs {}",
                self.dim.get(),
                other.dim.get()
            )));
        }
        self.coeffs[0].require_compatible(&other.coeffs[0])
    }

    /// The first `l_max + 1` coefficients (the tail descriptor is kept).
    pub fn truncated(&self, l_max: usize) -> SchoenbergSequence {
        SchoenbergSequence {
            dim: self.dim,
            coeffs: self.coeffs[..=l_max.min(self.l_max())].to_vec(),
            tail: self.tail.clone(),
        }
    }

    /// Multiplies every coefficient by `c`.
    pub fn scaled(&self, c: f64) -> SchoenbergSequence {
        SchoenbergSequence {
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|b| b.scaled(c)).collect(),
            tail: self.tail.as_ref().map(|t| match t {
                TailDescriptor::Geometric { components } => TailDescriptor::Geometric {
                    components: components
                        .iter()
                        .map(|g| GeometricComponent { scale: g.scale * c, ratio: g.ratio })
                        .collect(),
                },
                TailDescriptor::LegendreMatern { sigma, alpha, nu } => {
                    TailDescriptor::LegendreMatern { sigma: sigma * c.sqrt(), alpha: *alpha, nu: *nu }
                }
            }),
        }
    }

    /// Coefficient covariance for orthonormal harmonics: `b_l · ω_d C_l^λ(1) / h(l)`.
    pub fn synthesis_coeff(&self, l: usize) -> Option<SchoenbergOperator> {
        self.coeffs.get(l).map(|b| b.scaled(synthesis_factor(self.dim, l)))
    }

    /// `Σ_{l ≤ L_max} trace(b_l) C_l^λ(1)`: the truncated `E‖Z(x)‖²`.
    pub fn variance_trace(&self) -> f64 {
        let lam = self.dim.gegenbauer_order();
        self.coeffs.iter().enumerate().map(|(l, b)| b.trace() * gegenbauer_at_one(lam, l)).sum()
    }

    /// Bound on the omitted `Σ_{l > L_max} w(l) trace(b_l)`, with a flag that is
    /// true when no tail descriptor exists and the last-term heuristic was used.
    pub fn tail_estimate(&self, weight: TailWeight) -> (f64, bool) {
        if let Some(t) = &self.tail {
            return (t.tail_bound(self.dim, self.l_max(), weight), false);
        }
        let term = |l: usize| self.coeffs[l].trace() * weight.ln_weight(self.dim, l).exp();
        let l = self.l_max();
        let last = term(l);
        if l == 0 || last == 0.0 {
            return (last, true);
        }
        let ratio = last / term(l - 1);
        if ratio < 1.0 {
            (last * ratio / (1.0 - ratio), true)
        } else {
            (f64::INFINITY, true)
        }
    }
}

/// `ω_d C_l^λ(1) / h(l)`.
pub fn synthesis_factor(d: SphereDim, l: usize) -> f64 {
    surface_measure(d) * gegenbauer_at_one(d.gegenbauer_order(), l) / h_weight(d, l)
}

/// Per-degree validity diagnostics for a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub d: u32,
    pub variant: Variant,
    pub l_max: usize,
    /// `min eigenvalue / trace` per degree.
    pub psd_margins: Vec<f64>,
    pub traces: Vec<f64>,
    /// Partial sums of `h(l) trace(b_l)`.
    pub weighted_partial_sums: Vec<f64>,
    /// Bound on the omitted part of the weighted series.
    pub tail_estimate: f64,
    pub tail_heuristic: bool,
    /// `tail_estimate / (last partial sum + tail_estimate)`.
    pub relative_tail: f64,
    /// Truncated `Σ trace(b_l) C_l^λ(1)`.
    pub variance: f64,
    pub variance_tail: f64,
    pub psd_valid: bool,
    /// Every coefficient strictly positive (required for the equivalence test).
    pub strictly_positive: bool,
    pub passed: bool,
    pub failures: Vec<String>,
}

pub fn validate_sequence(seq: &SchoenbergSequence) -> ValidityReport {
    let mut failures = Vec::new();
    let mut psd_valid = true;
    let mut strictly_positive = true;
    let mut psd_margins = Vec::with_capacity(seq.coeffs.len());
    let mut traces = Vec::with_capacity(seq.coeffs.len());
    let mut weighted_partial_sums = Vec::with_capacity(seq.coeffs.len());
    let mut acc = 0.0;
    for (l, b) in seq.coeffs.iter().enumerate() {
        let margin = b.psd_margin();
        let tr = b.trace();
        if !b.is_psd() {
            psd_valid = false;
            failures.push(format!("b_{l}: not positive semi-definite (min eigenvalue / trace = {margin:e})"));
        } else if !b.is_strictly_positive() {
            strictly_positive = false;
            failures
                .push(format!("b_{l}: not strictly positive (equilibrated margin = {:e})", b.equilibrated_margin()));
        }
        acc += h_weight(seq.dim, l) * tr;
        psd_margins.push(margin);
        traces.push(tr);
        weighted_partial_sums.push(acc);
    }
    strictly_positive &= psd_valid;
    let (tail_estimate, tail_heuristic) = seq.tail_estimate(TailWeight::Eigenspace);
    let (variance_tail, _) = seq.tail_estimate(TailWeight::Variance);
    if !tail_estimate.is_finite() {
        failures.push("weighted trace series does not appear summable".into());
    }
    let relative_tail = if acc + tail_estimate > 0.0 { tail_estimate / (acc + tail_estimate) } else { 0.0 };
    ValidityReport {
        d: seq.dim.get(),
        variant: seq.variant(),
        l_max: seq.l_max(),
        psd_margins,
        traces,
        weighted_partial_sums,
        tail_estimate,
        tail_heuristic,
        relative_tail,
        variance: seq.variance_trace(),
        variance_tail,
        psd_valid,
        strictly_positive,
        passed: psd_valid && strictly_positive && tail_estimate.is_finite(),
        failures,
    }
}

/// Value of `R(t)`; unlike a Schoenberg coefficient it need not be PSD.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelValue {
    Scalar(f64),
    Matrix(DMatrix<f64>),
    /// Folded diagonal `Σ_l γ_{l,k} C_l^λ(t)` per frequency `k`.
    FourierDiagonal(Vec<f64>),
}

impl KernelValue {
    fn zero_like(op: &SchoenbergOperator) -> Self {
        match op {
            SchoenbergOperator::Scalar(_) => KernelValue::Scalar(0.0),
            SchoenbergOperator::Matrix(m) => KernelValue::Matrix(DMatrix::zeros(m.nrows(), m.ncols())),
            SchoenbergOperator::FourierDiagonal(g) => KernelValue::FourierDiagonal(vec![0.0; g.len()]),
        }
    }

    fn add_scaled(&mut self, op: &SchoenbergOperator, c: f64) {
        match (self, op) {
            (KernelValue::Scalar(v), SchoenbergOperator::Scalar(b)) => *v += c * b,
            (KernelValue::Matrix(v), SchoenbergOperator::Matrix(b)) => *v += b * c,
            (KernelValue::FourierDiagonal(v), SchoenbergOperator::FourierDiagonal(b)) => {
                v.iter_mut().zip(b).for_each(|(x, y)| *x += c * y)
            }
            _ => unreachable!("sequence is homogeneous"),
        }
    }

    /// Entries in row-major order (folded diagonal for the Fourier variant).
    pub fn entries(&self) -> Vec<f64> {
        match self {
            KernelValue::Scalar(v) => vec![*v],
            KernelValue::Matrix(m) => m.transpose().iter().copied().collect(),
            KernelValue::FourierDiagonal(g) => g.clone(),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            KernelValue::Scalar(v) => *v,
            KernelValue::Matrix(m) => m.trace(),
            KernelValue::FourierDiagonal(g) => g.iter().enumerate().map(|(k, v)| fold_multiplicity(k) * v).sum(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            KernelValue::Scalar(v) => DMatrix::from_element(1, 1, *v),
            KernelValue::Matrix(m) => m.clone(),
            KernelValue::FourierDiagonal(g) => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(g)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelEval {
    pub value: KernelValue,
    /// Bound on `Σ_{l > L} trace(b_l) C_l^λ(1)`, which dominates every entry
    /// of the omitted part.
    pub tail_bound: f64,
    pub tail_heuristic: bool,
}

/// `R(t) = Σ_l b_l C_l^λ(t)` for a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotropicKernel {
    seq: SchoenbergSequence,
}

impl IsotropicKernel {
    pub fn new(seq: SchoenbergSequence) -> Self {
        IsotropicKernel { seq }
    }

    pub fn sequence(&self) -> &SchoenbergSequence {
        &self.seq
    }

    pub fn eval(&self, t: f64) -> Result<KernelEval> {
        self.eval_truncated(t, self.seq.l_max())
    }

    /// Truncated sum over `l ≤ l_max` (clamped to the materialized degrees).
    pub fn eval_truncated(&self, t: f64, l_max: usize) -> Result<KernelEval> {
        if !(t.abs() <= 1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!("kernel argument must lie in [-1, 1], got {t}")));
        }
        let l_max = l_max.min(self.seq.l_max());
        let c = gegenbauer_table(self.seq.dim.gegenbauer_order(), l_max, t);
        let mut value = KernelValue::zero_like(&self.seq.coeffs[0]);
        for (b, cl) in self.seq.coeffs[..=l_max].iter().zip(&c) {
            value.add_scaled(b, *cl);
        }
        let (tail_bound, tail_heuristic) = self.seq.truncated(l_max).tail_estimate(TailWeight::Variance);
        Ok(KernelEval { value, tail_bound, tail_heuristic })
    }
}

/// On-disk form of a sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceFile {
    pub d: u32,
    pub variant: Variant,
    #[serde(rename = "L_max")]
    pub l_max: usize,
    pub coeffs: Vec<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailDescriptor>,
}

impl From<SchoenbergSequence> for SequenceFile {
    fn from(seq: SchoenbergSequence) -> Self {
        let coeffs = seq
            .coeffs
            .iter()
            .map(|b| match b {
                SchoenbergOperator::Scalar(v) => serde_json::json!(v),
                SchoenbergOperator::Matrix(m) => {
                    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
                    serde_json::json!(rows)
                }
                SchoenbergOperator::FourierDiagonal(g) => serde_json::json!(g),
            })
            .collect();
        SequenceFile { d: seq.dim.get(), variant: seq.variant(), l_max: seq.l_max(), coeffs, tail: seq.tail }
    }
}

impl TryFrom<SequenceFile> for SchoenbergSequence {
    type Error = Error;
    fn try_from(f: SequenceFile) -> Result<Self> {
        if f.coeffs.len() != f.l_max + 1 {
            return Err(Error::InvalidArgument(format!(
                "L_max = {} but {} coefficients given",
                f.l_max,
                f.coeffs.len()
            )));
        }
        let coeffs = f
            .coeffs
            .into_iter()
            .map(|v| match f.variant {
                Variant::Scalar => SchoenbergOperator::scalar(serde_json::from_value(v)?),
                Variant::Matrix => SchoenbergOperator::from_rows(&serde_json::from_value::<Vec<Vec<f64>>>(v)?),
                Variant::FourierDiagonal => SchoenbergOperator::fourier_diagonal(serde_json::from_value(v)?),
            })
            .collect::<Result<Vec<_>>>()?;
        SchoenbergSequence::new(SphereDim::new(f.d)?, coeffs, f.tail)
    }
}
