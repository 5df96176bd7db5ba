//! Special functions on the d-sphere.
//!
//! Gegenbauer polynomials `C_l^λ` with `λ = (d-1)/2`, the eigenspace
//! dimensions `h(l)`, the total surface measure `ω_d`, and real orthonormal
//! spherical harmonics on S¹ and S².
//!
//! For d = 1 the Gegenbauer order degenerates to λ = 0; we use the
//! Chebyshev limit `C_l^0(cos θ) := cos(lθ)` so that `C_l^0(1) = 1` and the
//! addition identity keeps the same shape as for d ≥ 2.

use std::f64::consts::PI;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};

/// Largest degree accepted by [`h_dim`].
pub const H_DIM_MAX_DEGREE: u64 = 1_000_000;
/// Largest sphere dimension accepted by [`h_dim`].
pub const H_DIM_MAX_SPHERE_DIM: u32 = 32;

const UNIT_NORM_TOL: f64 = 1e-12;

/// Dimension `d` of the sphere S^d ⊂ R^{d+1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SphereDim(u32);

impl SphereDim {
    pub fn new(d: u32) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("sphere dimension must be >= 1".into()));
        }
        Ok(SphereDim(d))
    }

    #[inline]
    pub fn get(self) -> u32 {
        self.0
    }

    /// Ambient Euclidean dimension `d + 1`.
    #[inline]
    pub fn ambient(self) -> usize {
        self.0 as usize + 1
    }

    #[inline]
    pub fn gegenbauer_order(self) -> GegenbauerOrder {
        GegenbauerOrder((self.0 as f64 - 1.0) / 2.0)
    }

    /// Whether field synthesis (harmonic evaluation) is available.
    #[inline]
    pub fn supports_synthesis(self) -> bool {
        self.0 <= 2
    }
}

impl TryFrom<u32> for SphereDim {
    type Error = Error;
    fn try_from(d: u32) -> Result<Self> {
        SphereDim::new(d)
    }
}

impl From<SphereDim> for u32 {
    fn from(d: SphereDim) -> u32 {
        d.0
    }
}

/// Gegenbauer order λ ≥ 0. λ = 0 selects the Chebyshev (circle) convention.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct GegenbauerOrder(f64);

impl GegenbauerOrder {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("Gegenbauer order must be finite and >= 0, got {lambda}")));
        }
        Ok(GegenbauerOrder(lambda))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// A point on the unit sphere S^d, stored by its d+1 Cartesian coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpherePoint {
    coords: Vec<f64>,
}

impl SpherePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidArgument("a sphere point needs at least 2 coordinates".into()));
        }
        let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::InvalidArgument(format!("sphere point must have unit norm, got |x| = {norm}")));
        }
        Ok(SpherePoint { coords })
    }

    /// Projects a nonzero vector onto the sphere.
    pub fn normalized(coords: Vec<f64>) -> Result<Self> {
        let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidArgument("cannot normalize a zero vector".into()));
        }
        SpherePoint::new(coords.into_iter().map(|c| c / norm).collect())
    }

    /// Point on S¹ at angle `phi`.
    pub fn on_circle(phi: f64) -> Self {
        SpherePoint { coords: vec![phi.cos(), phi.sin()] }
    }

    /// Point on S² at polar angle `theta` (from the +z axis) and azimuth `phi`.
    pub fn from_spherical(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        SpherePoint { coords: vec![st * cp, st * sp, ct] }
    }

    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Sphere dimension implied by the coordinate count.
    #[inline]
    pub fn sphere_dim(&self) -> u32 {
        self.coords.len() as u32 - 1
    }

    /// Inner product clamped to [-1, 1].
    pub fn dot(&self, other: &SpherePoint) -> f64 {
        let t: f64 = self.coords.iter().zip(&other.coords).map(|(a, b)| a * b).sum();
        t.clamp(-1.0, 1.0)
    }

    /// Geodesic angle between two points.
    pub fn angle_to(&self, other: &SpherePoint) -> f64 {
        self.dot(other).acos()
    }
}

impl TryFrom<Vec<f64>> for SpherePoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SpherePoint::new(v)
    }
}

impl From<SpherePoint> for Vec<f64> {
    fn from(p: SpherePoint) -> Vec<f64> {
        p.coords
    }
}

/// Index `(l, m)` of a real harmonic, `1 ≤ m ≤ h(l)`.
///
/// Ordering within a degree: `m = 1` is the zonal (order 0) function; for
/// order `k ≥ 1`, `m = 2k` is the cosine partner and `m = 2k + 1` the sine
/// partner. On S¹ the same rule gives `m = 1 → cos`, `m = 2 → sin` for l ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HarmonicIndex {
    pub l: usize,
    pub m: usize,
}

impl HarmonicIndex {
    pub fn new(d: SphereDim, l: usize, m: usize) -> Result<Self> {
        let h = h_weight(d, l);
        if m == 0 || (m as f64) > h {
            return Err(Error::InvalidArgument(format!("harmonic order m = {m} outside 1..=h({l}) = {h}")));
        }
        Ok(HarmonicIndex { l, m })
    }
}

/// Dimension `h(l)` of the degree-l harmonic eigenspace on S^d, exactly.
///
/// `h(l) = (2l + d − 1)(l + d − 2)! / (l! (d − 1)!)`, with `h(0) = 1` and
/// `h(l) = 2` (l ≥ 1) on the circle.
pub fn h_dim(d: SphereDim, l: u64) -> Result<BigUint> {
    if l > H_DIM_MAX_DEGREE || d.get() > H_DIM_MAX_SPHERE_DIM {
        return Err(Error::Overflow(format!(
            "h(l) supported for l <= {H_DIM_MAX_DEGREE}, d <= {H_DIM_MAX_SPHERE_DIM}; got l = {l}, d = {}",
            d.get()
        )));
    }
    let d = d.get() as u64;
    if l == 0 {
        return Ok(BigUint::one());
    }
    if d == 1 {
        return Ok(BigUint::from(2u32));
    }
    // binom(l + d - 2, d - 2) built multiplicatively; each prefix is an integer.
    let mut binom = BigUint::one();
    for i in 1..=(d - 2) {
        binom *= BigUint::from(l + i);
        binom /= BigUint::from(i);
    }
    // (2l + d - 1) * binom(l + d - 2, l) / (d - 1) is an integer; multiply first.
    Ok(binom * BigUint::from(2 * l + d - 1) / BigUint::from(d - 1))
}

/// `h(l)` as a floating-point weight, valid for any degree.
pub fn h_weight(d: SphereDim, l: usize) -> f64 {
    match d.get() {
        1 => {
            if l == 0 {
                1.0
            } else {
                2.0
            }
        }
        2 => (2 * l + 1) as f64,
        3 => ((l + 1) * (l + 1)) as f64,
        dd => {
            if let Ok(h) = h_dim(d, l as u64) {
                if let Some(v) = h.to_f64() {
                    if v.is_finite() {
                        return v;
                    }
                }
            }
            let dd = dd as f64;
            let l = l as f64;
            ((2.0 * l + dd - 1.0).ln() + ln_gamma(l + dd - 1.0) - ln_gamma(l + 1.0) - ln_gamma(dd)).exp()
        }
    }
}

/// `C_l^λ(t)` by the ascending three-term recurrence.
///
/// For λ = 0 this is `cos(l·arccos t)` (Chebyshev T). Arguments slightly
/// outside [-1, 1] are clamped.
pub fn gegenbauer(lambda: GegenbauerOrder, l: usize, t: f64) -> f64 {
    let t = t.clamp(-1.0, 1.0);
    let lam = lambda.get();
    if l == 0 {
        return 1.0;
    }
    if lam == 0.0 {
        let (mut p0, mut p1) = (1.0, t);
        for _ in 1..l {
            let p2 = 2.0 * t * p1 - p0;
            p0 = p1;
            p1 = p2;
        }
        return p1;
    }
    let (mut p0, mut p1) = (1.0, 2.0 * lam * t);
    for n in 1..l {
        let nf = n as f64;
        let p2 = (2.0 * t * (nf + lam) * p1 - (nf + 2.0 * lam - 1.0) * p0) / (nf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// All of `C_0^λ(t), …, C_{l_max}^λ(t)`.
pub fn gegenbauer_table(lambda: GegenbauerOrder, l_max: usize, t: f64) -> Vec<f64> {
    let t = t.clamp(-1.0, 1.0);
    let lam = lambda.get();
    let mut out = Vec::with_capacity(l_max + 1);
    out.push(1.0);
    if l_max == 0 {
        return out;
    }
    out.push(if lam == 0.0 { t } else { 2.0 * lam * t });
    for n in 1..l_max {
        let nf = n as f64;
        let next = if lam == 0.0 {
            2.0 * t * out[n] - out[n - 1]
        } else {
            (2.0 * t * (nf + lam) * out[n] - (nf + 2.0 * lam - 1.0) * out[n - 1]) / (nf + 1.0)
        };
        out.push(next);
    }
    out
}

/// `C_l^λ(1) = binom(l + 2λ − 1, l)`; 1 for λ = 0.
pub fn gegenbauer_at_one(lambda: GegenbauerOrder, l: usize) -> f64 {
    let lam = lambda.get();
    if lam == 0.0 || l == 0 {
        return 1.0;
    }
    if l <= 4096 {
        let p = (1..=l).fold(1.0, |acc, i| acc * (i as f64 + 2.0 * lam - 1.0) / i as f64);
        if p.is_finite() {
            return p;
        }
    }
    ln_gegenbauer_at_one(lambda, l).exp()
}

/// `ln C_l^λ(1)`, finite for every degree.
pub fn ln_gegenbauer_at_one(lambda: GegenbauerOrder, l: usize) -> f64 {
    let lam = lambda.get();
    if lam == 0.0 || l == 0 {
        return 0.0;
    }
    let l = l as f64;
    ln_gamma(l + 2.0 * lam) - ln_gamma(2.0 * lam) - ln_gamma(l + 1.0)
}

/// Total surface measure `ω_d = 2π^{(d+1)/2} / Γ((d+1)/2)`.
pub fn surface_measure(d: SphereDim) -> f64 {
    let a = (d.get() as f64 + 1.0) / 2.0;
    2.0 * PI.powf(a) / gamma(a)
}

/// Ratio `h(l) / (ω_d C_l^λ(1))` linking zonal sums of orthonormal harmonics
/// to Gegenbauer polynomials.
pub fn addition_factor(d: SphereDim, l: usize) -> f64 {
    h_weight(d, l) / (surface_measure(d) * gegenbauer_at_one(d.gegenbauer_order(), l))
}

fn require_synthesis_dim(d: SphereDim) -> Result<()> {
    if d.supports_synthesis() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "real harmonics are implemented for d in {{1, 2}} only (field synthesis restriction); got d = {}",
            d.get()
        )))
    }
}

fn require_point(d: SphereDim, x: &SpherePoint) -> Result<()> {
    if x.coords().len() != d.ambient() {
        return Err(Error::InvalidArgument(format!(
            "point has {} coordinates, S^{} needs {}",
            x.coords().len(),
            d.get(),
            d.ambient()
        )));
    }
    Ok(())
}

/// Index offset of degree `l` in the packed (l, m) layout: `Σ_{l' < l} h(l')`.
pub fn packed_offset(d: SphereDim, l: usize) -> usize {
    match d.get() {
        1 => {
            if l == 0 {
                0
            } else {
                2 * l - 1
            }
        }
        2 => l * l,
        _ => (0..l).map(|k| h_weight(d, k) as usize).sum(),
    }
}

/// Number of harmonics with degree ≤ `l_max`.
pub fn packed_len(d: SphereDim, l_max: usize) -> usize {
    packed_offset(d, l_max + 1)
}

/// Orthonormal real harmonic `Y_{l,m}(x)` for d ∈ {1, 2}.
pub fn real_harmonic(d: SphereDim, idx: HarmonicIndex, x: &SpherePoint) -> Result<f64> {
    require_synthesis_dim(d)?;
    require_point(d, x)?;
    let h = h_weight(d, idx.l) as usize;
    if idx.m == 0 || idx.m > h {
        return Err(Error::InvalidArgument(format!("harmonic order m = {} outside 1..={h}", idx.m)));
    }
    // Evaluating the full table keeps one code path for the normalization.
    let table = harmonics_table(d, idx.l, x)?;
    Ok(table[packed_offset(d, idx.l) + idx.m - 1])
}

/// All orthonormal harmonics up to degree `l_max` at `x`, packed by
/// [`packed_offset`] then `m - 1`.
pub fn harmonics_table(d: SphereDim, l_max: usize, x: &SpherePoint) -> Result<Vec<f64>> {
    require_synthesis_dim(d)?;
    require_point(d, x)?;
    let mut out = vec![0.0; packed_len(d, l_max)];
    match d.get() {
        1 => circle_table(l_max, x, &mut out),
        _ => sphere2_table(l_max, x, &mut out),
    }
    Ok(out)
}

fn circle_table(l_max: usize, x: &SpherePoint, out: &mut [f64]) {
    let c = x.coords();
    let phi = c[1].atan2(c[0]);
    out[0] = 1.0 / (2.0 * PI).sqrt();
    let s = 1.0 / PI.sqrt();
    for l in 1..=l_max {
        let (sn, cs) = (l as f64 * phi).sin_cos();
        let o = 2 * l - 1;
        out[o] = s * cs;
        out[o + 1] = s * sn;
    }
}

fn sphere2_table(l_max: usize, x: &SpherePoint, out: &mut [f64]) {
    let c = x.coords();
    let ct = c[2].clamp(-1.0, 1.0);
    let st = (c[0] * c[0] + c[1] * c[1]).sqrt();
    let phi = c[1].atan2(c[0]);
    // Normalized associated Legendre functions
    //   S_l^m = sqrt((2l+1)/(4π) (l-m)!/(l+m)!) P_l^m(cos θ)
    // via the diagonal recurrence in m followed by ascending l.
    let mut diag = (1.0 / (4.0 * PI)).sqrt();
    for m in 0..=l_max {
        if m > 0 {
            diag *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * st;
        }
        let (sn, cs) = (m as f64 * phi).sin_cos();
        let mut put = |l: usize, v: f64| {
            let base = l * l;
            if m == 0 {
                out[base] = v;
            } else {
                out[base + 2 * m - 1] = std::f64::consts::SQRT_2 * v * cs;
                out[base + 2 * m] = std::f64::consts::SQRT_2 * v * sn;
            }
        };
        put(m, diag);
        if m == l_max {
            break;
        }
        let mut prev2 = diag;
        let mut prev1 = ((2 * m + 3) as f64).sqrt() * ct * diag;
        put(m + 1, prev1);
        let mm = (m * m) as f64;
        for l in (m + 2)..=l_max {
            let lf = l as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mm)).sqrt();
            let lm1 = lf - 1.0;
            let b = ((lm1 * lm1 - mm) / (4.0 * lm1 * lm1 - 1.0)).sqrt();
            let cur = a * (ct * prev1 - b * prev2);
            put(l, cur);
            prev2 = prev1;
            prev1 = cur;
        }
    }
}

/// Degree-l zonal sum `Σ_m Y_{l,m}(x) Y_{l,m}(y)` from the real harmonics.
pub fn zonal_sum(d: SphereDim, l: usize, x: &SpherePoint, y: &SpherePoint) -> Result<f64> {
    let tx = harmonics_table(d, l, x)?;
    let ty = harmonics_table(d, l, y)?;
    let off = packed_offset(d, l);
    Ok(tx[off..].iter().zip(&ty[off..]).map(|(a, b)| a * b).sum())
}
