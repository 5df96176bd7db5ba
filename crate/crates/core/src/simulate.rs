//! Truncated harmonic synthesis of isotropic fields on S¹ and S², and Monte
//! Carlo checks that the samples reproduce the analytic covariance.
//!
//! A field is `Z(x) = Σ_{l ≤ L} Σ_m a_{l,m} Y_{l,m}(x)` with orthonormal real
//! harmonics and independent coefficients `a_{l,m} ~ N(0, b̂_l)`,
//! `b̂_l = b_l ω_d C_l^λ(1) / h(l)`, so that `E[Z(x) ⊗ Z(y)] = Σ b_l C_l^λ(x·y)`.
//!
//! Field values are real vectors: length 1 (scalar), `p` (matrix), or
//! `2 K_max + 1` for the Fourier variant, laid out as
//! `[c_0, c_1, s_1, c_2, s_2, …]` against the basis
//! `1, √2 cos(2πkτ), √2 sin(2πkτ)` of L²([0,1]).
//!
//! Random draws are consumed in a fixed order: degree ascending, then `m`,
//! then vector component.

use std::f64::consts::{PI, SQRT_2, TAU};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{h_weight, harmonics_table, packed_len, SphereDim, SpherePoint};
use crate::rng::{GaussianStream, RngSeed};
use crate::schoenberg::{operator_sqrt, IsotropicKernel, SchoenbergOperator, SchoenbergSequence, Variant};

fn require_synthesis(d: SphereDim) -> Result<()> {
    if d.supports_synthesis() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("field synthesis is implemented for d in {{1, 2}} only; got d = {}", d.get())))
    }
}

/// Points on S¹ or S² at which fields are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    d: SphereDim,
    points: Vec<SpherePoint>,
}

impl SampleGrid {
    pub fn new(d: SphereDim, points: Vec<SpherePoint>) -> Result<Self> {
        require_synthesis(d)?;
        if points.is_empty() {
            return Err(Error::InvalidArgument("sample grid is empty".into()));
        }
        if let Some(p) = points.iter().find(|p| p.coords().len() != d.ambient()) {
            return Err(Error::InvalidArgument(format!(
                "grid point with {} coordinates on S^{}",
                p.coords().len(),
                d.get()
            )));
        }
        Ok(SampleGrid { d, points })
    }

    /// `n` equally spaced points on the circle, starting at angle 0.
    pub fn equispaced_circle(n: usize) -> Result<Self> {
        let pts = (0..n).map(|i| SpherePoint::on_circle(TAU * i as f64 / n as f64)).collect();
        SampleGrid::new(SphereDim::new(1)?, pts)
    }

    /// Equiangular grid on S²: polar midpoints `(i + ½)π / n_theta`, azimuths `2πj / n_phi`.
    pub fn equiangular(n_theta: usize, n_phi: usize) -> Result<Self> {
        let mut pts = Vec::with_capacity(n_theta * n_phi);
        for i in 0..n_theta {
            let theta = (i as f64 + 0.5) * PI / n_theta as f64;
            for j in 0..n_phi {
                pts.push(SpherePoint::from_spherical(theta, TAU * j as f64 / n_phi as f64));
            }
        }
        SampleGrid::new(SphereDim::new(2)?, pts)
    }

    /// Uniformly distributed points (normalized Gaussian vectors).
    pub fn uniform_random(d: SphereDim, n: usize, seed: RngSeed) -> Result<Self> {
        require_synthesis(d)?;
        let mut g = GaussianStream::new(seed);
        let mut pts = Vec::with_capacity(n);
        while pts.len() < n {
            let v: Vec<f64> = (0..d.ambient()).map(|_| g.standard_normal()).collect();
            if let Ok(p) = SpherePoint::normalized(v) {
                pts.push(p);
            }
        }
        SampleGrid::new(d, pts)
    }

    /// Grid of the distinct points of `pairs`, with each pair mapped to indices.
    pub fn from_pairs(d: SphereDim, pairs: &[(SpherePoint, SpherePoint)]) -> Result<(Self, Vec<(usize, usize)>)> {
        let mut points: Vec<SpherePoint> = Vec::new();
        let mut index_of = |p: &SpherePoint| match points.iter().position(|q| q == p) {
            Some(i) => i,
            None => {
                points.push(p.clone());
                points.len() - 1
            }
        };
        let idx = pairs.iter().map(|(a, b)| (index_of(a), index_of(b))).collect();
        Ok((SampleGrid::new(d, points)?, idx))
    }

    pub fn dim(&self) -> SphereDim {
        self.d
    }

    pub fn points(&self) -> &[SpherePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One realization of a field on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub grid: SampleGrid,
    pub variant: Variant,
    /// Per-point value vectors.
    pub values: Vec<Vec<f64>>,
    pub l_max: usize,
    pub seed: RngSeed,
    /// Degrees whose coefficient was not strictly positive (sampled with zero modes).
    pub degenerate_degrees: Vec<usize>,
}

impl FieldSample {
    /// Rows `x_0,…,x_d,v_0,…` with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let coords: Vec<String> = (0..self.grid.d.ambient()).map(|i| format!("x{i}")).collect();
        let width = self.values.first().map_or(0, Vec::len);
        let vals: Vec<String> = (0..width).map(|i| format!("v{i}")).collect();
        out.push_str(&coords.join(","));
        out.push(',');
        out.push_str(&vals.join(","));
        out.push('\n');
        for (p, v) in self.grid.points.iter().zip(&self.values) {
            let row: Vec<String> = p.coords().iter().chain(v.iter()).map(|x| format!("{x:e}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// For the Fourier variant: the function value at `τ ∈ [0, 1]` of the
    /// field at grid point `i`.
    pub fn function_value(&self, i: usize, tau: f64) -> Result<f64> {
        if self.variant != Variant::FourierDiagonal {
            return Err(Error::InvalidArgument("function values exist only for the Fourier variant".into()));
        }
        Ok(fourier_function_value(&self.values[i], tau))
    }
}

/// `c_0 + √2 Σ_k (c_k cos 2πkτ + s_k sin 2πkτ)` for a layout `[c_0, c_1, s_1, …]`.
pub fn fourier_function_value(values: &[f64], tau: f64) -> f64 {
    let mut acc = values[0];
    for k in 1..=(values.len() - 1) / 2 {
        let (s, c) = (TAU * k as f64 * tau).sin_cos();
        acc += SQRT_2 * (values[2 * k - 1] * c + values[2 * k] * s);
    }
    acc
}

/// Square-root factor of one degree's coefficient covariance.
#[derive(Debug, Clone)]
struct DegreeRoot {
    root: SchoenbergOperator,
    degenerate: bool,
}

impl DegreeRoot {
    fn new(seq: &SchoenbergSequence, l: usize) -> Self {
        let b = seq.coeffs()[l].clone();
        let degenerate = !b.is_strictly_positive();
        let bhat = seq.synthesis_coeff(l).expect("degree within range");
        DegreeRoot { root: operator_sqrt(&bhat), degenerate }
    }

    /// Writes `root · ξ` into `out`, consuming `out.len()` normals.
    fn draw(&self, rng: &mut GaussianStream, xi: &mut [f64], out: &mut [f64]) {
        rng.fill_normal(xi);
        match &self.root {
            SchoenbergOperator::Scalar(r) => out[0] = r * xi[0],
            SchoenbergOperator::Matrix(r) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = r.row(i).iter().zip(xi.iter()).map(|(a, b)| a * b).sum();
                }
            }
            SchoenbergOperator::FourierDiagonal(r) => {
                out[0] = r[0] * xi[0];
                for k in 1..r.len() {
                    out[2 * k - 1] = r[k] * xi[2 * k - 1];
                    out[2 * k] = r[k] * xi[2 * k];
                }
            }
        }
    }
}

/// Independent draws for one degree.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientDraw {
    /// `h(l)` vectors `a_{l,1}, …, a_{l,h(l)}`.
    pub values: Vec<Vec<f64>>,
    /// The coefficient was not strictly positive; zero modes were used.
    pub degenerate: bool,
}

/// Draws `a_{l,1..h(l)} ~ N(0, b̂_l)` from `rng`.
pub fn sample_coefficients(seq: &SchoenbergSequence, l: usize, rng: &mut GaussianStream) -> Result<CoefficientDraw> {
    require_synthesis(seq.dim())?;
    if l > seq.l_max() {
        return Err(Error::InvalidArgument(format!("degree {l} beyond L_max = {}", seq.l_max())));
    }
    let root = DegreeRoot::new(seq, l);
    let n = seq.coeffs()[0].real_dim();
    let mut xi = vec![0.0; n];
    let values = (0..h_weight(seq.dim(), l) as usize)
        .map(|_| {
            let mut a = vec![0.0; n];
            root.draw(rng, &mut xi, &mut a);
            a
        })
        .collect();
    Ok(CoefficientDraw { values, degenerate: root.degenerate })
}

/// Precomputed harmonics and coefficient roots for repeated synthesis on one grid.
#[derive(Debug, Clone)]
pub struct FieldSynthesizer {
    grid: SampleGrid,
    variant: Variant,
    l_max: usize,
    width: usize,
    /// Per degree, the `h(l) × points` matrix of harmonics.
    harmonics: Vec<DMatrix<f64>>,
    roots: Vec<DegreeRoot>,
}

impl FieldSynthesizer {
    pub fn new(seq: &SchoenbergSequence, grid: SampleGrid, l_max: usize) -> Result<Self> {
        require_synthesis(seq.dim())?;
        if grid.d != seq.dim() {
            return Err(Error::Incompatible(format!(
                "grid on S^{} but sequence on S^{}",
                grid.d.get(),
                seq.dim().get()
            )));
        }
        if l_max > seq.l_max() {
            return Err(Error::InvalidArgument(format!(
                "synthesis degree {l_max} beyond materialized L_max = {}",
                seq.l_max()
            )));
        }
        let tables = grid.points.iter().map(|p| harmonics_table(grid.d, l_max, p)).collect::<Result<Vec<_>>>()?;
        let mut offset = 0;
        let harmonics = (0..=l_max)
            .map(|l| {
                let h = h_weight(grid.d, l) as usize;
                let m = DMatrix::from_fn(h, tables.len(), |r, c| tables[c][offset + r]);
                offset += h;
                m
            })
            .collect();
        debug_assert_eq!(offset, packed_len(grid.d, l_max));
        let roots = (0..=l_max).map(|l| DegreeRoot::new(seq, l)).collect();
        Ok(FieldSynthesizer {
            grid,
            variant: seq.variant(),
            l_max,
            width: seq.coeffs()[0].real_dim(),
            harmonics,
            roots,
        })
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// Per-point value vectors for one realization.
    pub fn values(&self, seed: RngSeed) -> Vec<Vec<f64>> {
        let mut rng = GaussianStream::new(seed);
        let mut acc = DMatrix::<f64>::zeros(self.width, self.grid.len());
        let mut xi = vec![0.0; self.width];
        for (root, harm) in self.roots.iter().zip(&self.harmonics) {
            // column m holds a_{l,m}
            let mut a = DMatrix::<f64>::zeros(self.width, harm.nrows());
            for mut col in a.column_iter_mut() {
                root.draw(&mut rng, &mut xi, col.as_mut_slice());
            }
            acc.gemm(1.0, &a, harm, 1.0);
        }
        acc.column_iter().map(|c| c.iter().copied().collect()).collect()
    }

    pub fn sample(&self, seed: RngSeed) -> FieldSample {
        FieldSample {
            grid: self.grid.clone(),
            variant: self.variant,
            values: self.values(seed),
            l_max: self.l_max,
            seed,
            degenerate_degrees: self.roots.iter().enumerate().filter(|(_, r)| r.degenerate).map(|(l, _)| l).collect(),
        }
    }
}

/// One field realization on `grid`, truncated at `l_max`.
pub fn synthesize_field(
    seq: &SchoenbergSequence,
    grid: &SampleGrid,
    l_max: usize,
    seed: RngSeed,
) -> Result<FieldSample> {
    Ok(FieldSynthesizer::new(seq, grid.clone(), l_max)?.sample(seed))
}

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Entrywise mean and standard error of `Z(x_i) ⊗ Z(x_j)` over replicates.
///
/// For the Fourier variant the estimate is folded to one entry per frequency
/// `k`, pooling the cosine and sine components, to match the folded diagonal
/// of the kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub variant: Variant,
    pub n_samples: usize,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

fn covariance_products(variant: Variant, zi: &[f64], zj: &[f64], out: &mut Vec<f64>) {
    out.clear();
    match variant {
        Variant::FourierDiagonal => {
            out.push(zi[0] * zj[0]);
            for k in 1..=(zi.len() - 1) / 2 {
                out.push(0.5 * (zi[2 * k - 1] * zj[2 * k - 1] + zi[2 * k] * zj[2 * k]));
            }
        }
        _ => {
            for a in zi {
                for b in zj {
                    out.push(a * b);
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct CovarianceAccumulator {
    variant: Variant,
    products: Vec<Vec<f64>>,
    scratch: Vec<f64>,
}

impl CovarianceAccumulator {
    fn new(variant: Variant) -> Self {
        CovarianceAccumulator { variant, products: Vec::new(), scratch: Vec::new() }
    }

    fn push(&mut self, zi: &[f64], zj: &[f64]) {
        let mut scratch = std::mem::take(&mut self.scratch);
        covariance_products(self.variant, zi, zj, &mut scratch);
        self.push_products(&scratch);
        self.scratch = scratch;
    }

    fn push_products(&mut self, prod: &[f64]) {
        if self.products.is_empty() {
            self.products = vec![Vec::new(); prod.len()];
        }
        for (col, v) in self.products.iter_mut().zip(prod) {
            col.push(*v);
        }
    }

    fn finish(&self) -> CovarianceEstimate {
        let n = self.products.first().map_or(0, Vec::len);
        let (mean, se) = self
            .products
            .iter()
            .map(|col| {
                let mut s = CompensatedSum::default();
                col.iter().for_each(|v| s.add(*v));
                let m = s.value() / n as f64;
                let mut q = CompensatedSum::default();
                col.iter().for_each(|v| q.add((v - m) * (v - m)));
                let var = if n > 1 { q.value() / (n - 1) as f64 } else { 0.0 };
                (m, (var / n as f64).sqrt())
            })
            .unzip();
        CovarianceEstimate { variant: self.variant, n_samples: n, mean, se }
    }
}

pub fn empirical_covariance(samples: &[FieldSample], i: usize, j: usize) -> Result<CovarianceEstimate> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("empirical covariance needs at least 2 samples".into()));
    }
    let first = &samples[0];
    if i >= first.grid.len() || j >= first.grid.len() {
        return Err(Error::InvalidArgument(format!("point index out of range for {} points", first.grid.len())));
    }
    let mut acc = CovarianceAccumulator::new(first.variant);
    for s in samples {
        if s.grid != first.grid || s.variant != first.variant || s.values[0].len() != first.values[0].len() {
            return Err(Error::Incompatible("samples come from different grids or variants".into()));
        }
        acc.push(&s.values[i], &s.values[j]);
    }
    Ok(acc.finish())
}

/// Options for [`monte_carlo_kernel_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct McCheckOptions {
    pub z_threshold: f64,
    /// Synthesis truncation; defaults to the sequence's `L_max`.
    pub l_max: Option<usize>,
    /// Kernel to compare against; defaults to the sampled sequence.
    pub analytic: Option<SchoenbergSequence>,
}

impl Default for McCheckOptions {
    fn default() -> Self {
        McCheckOptions { z_threshold: 4.0, l_max: None, analytic: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub i: usize,
    pub j: usize,
    pub angle: f64,
    pub analytic: Vec<f64>,
    pub empirical: Vec<f64>,
    pub se: Vec<f64>,
    pub z: Vec<f64>,
    pub max_abs_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub n_samples: usize,
    pub l_max: usize,
    pub seed: RngSeed,
    pub z_threshold: f64,
    /// Omitted analytic mass beyond the synthesis truncation (reported, not compared).
    pub tail_bound: f64,
    /// Analytic degrees above the synthesis truncation that were discounted
    /// before computing z-scores (0 when both are truncated alike).
    pub truncation_bias: f64,
    pub pairs: Vec<PairCheck>,
    pub max_abs_z: f64,
    pub passed: bool,
}

/// Analytic kernel entries in the same (folded) layout as [`CovarianceEstimate`].
fn analytic_entries(kernel: &IsotropicKernel, t: f64, l_max: usize) -> Result<Vec<f64>> {
    Ok(kernel.eval_truncated(t, l_max)?.value.entries())
}

/// Compares the empirical covariance of `n_samples` synthesized fields
/// (replicate `r` uses stream `seed.stream + r`) with the analytic kernel at
/// each point pair.
pub fn monte_carlo_kernel_check(
    seq: &SchoenbergSequence,
    pairs: &[(SpherePoint, SpherePoint)],
    n_samples: usize,
    seed: RngSeed,
    opts: &McCheckOptions,
) -> Result<CheckReport> {
    require_synthesis(seq.dim())?;
    if n_samples < 2 {
        return Err(Error::InvalidArgument("Monte Carlo check needs at least 2 samples".into()));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no point pairs given".into()));
    }
    let l_max = opts.l_max.unwrap_or(seq.l_max()).min(seq.l_max());
    let (grid, idx) = SampleGrid::from_pairs(seq.dim(), pairs)?;
    let synth = FieldSynthesizer::new(seq, grid, l_max)?;

    // Replicates run in parallel; the indexed collect keeps their order, so
    // the reduction below is identical for any thread count.
    let products: Vec<Vec<Vec<f64>>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|r| {
            let values = synth.values(seed.offset(r));
            idx.iter()
                .map(|(i, j)| {
                    let mut out = Vec::new();
                    covariance_products(seq.variant(), &values[*i], &values[*j], &mut out);
                    out
                })
                .collect()
        })
        .collect();
    let mut accs: Vec<CovarianceAccumulator> = idx.iter().map(|_| CovarianceAccumulator::new(seq.variant())).collect();
    for rep in &products {
        for (acc, prod) in accs.iter_mut().zip(rep) {
            acc.push_products(prod);
        }
    }

    let analytic_seq = opts.analytic.as_ref().unwrap_or(seq);
    seq.require_compatible(analytic_seq)?;
    let kernel = IsotropicKernel::new(analytic_seq.clone());
    // Materialized analytic degrees above the synthesis truncation.
    let truncation_bias = if analytic_seq.l_max() > l_max {
        let lam = analytic_seq.dim().gegenbauer_order();
        (l_max + 1..=analytic_seq.l_max())
            .map(|l| analytic_seq.coeffs()[l].trace() * crate::harmonics::gegenbauer_at_one(lam, l))
            .sum()
    } else {
        0.0
    };
    let tail_bound = kernel.eval_truncated(1.0, l_max)?.tail_bound;
    let analytic_l = analytic_seq.l_max();

    let mut checks = Vec::with_capacity(pairs.len());
    for ((acc, (i, j)), (x, y)) in accs.iter().zip(&idx).zip(pairs) {
        let est = acc.finish();
        let t = x.dot(y);
        let analytic = analytic_entries(&kernel, t, analytic_l)?;
        let z: Vec<f64> = est
            .mean
            .iter()
            .zip(&analytic)
            .zip(&est.se)
            .map(|((e, a), se)| {
                let diff = e - a;
                let excess = (diff.abs() - truncation_bias).max(0.0);
                if excess == 0.0 {
                    0.0
                } else if *se == 0.0 {
                    f64::INFINITY.copysign(diff)
                } else {
                    excess.copysign(diff) / se
                }
            })
            .collect();
        let max_abs_z = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        checks.push(PairCheck {
            i: *i,
            j: *j,
            angle: t.acos(),
            analytic,
            empirical: est.mean,
            se: est.se,
            z,
            max_abs_z,
        });
    }
    let max_abs_z = checks.iter().fold(0.0f64, |m, c| m.max(c.max_abs_z));
    Ok(CheckReport {
        n_samples,
        l_max,
        seed,
        z_threshold: opts.z_threshold,
        tail_bound,
        truncation_bias,
        passed: max_abs_z < opts.z_threshold,
        pairs: checks,
        max_abs_z,
    })
}

/// `count` pairs `(x_0, y_j)` with geodesic angles `jπ / (count − 1)` along one
/// great circle.
pub fn default_pairs(d: SphereDim, count: usize) -> Result<Vec<(SpherePoint, SpherePoint)>> {
    require_synthesis(d)?;
    if count < 2 {
        return Err(Error::InvalidArgument("need at least 2 pairs".into()));
    }
    let angles = (0..count).map(|j| j as f64 * PI / (count - 1) as f64);
    Ok(match d.get() {
        1 => {
            let x = SpherePoint::on_circle(0.3);
            angles.map(|a| (x.clone(), SpherePoint::on_circle(0.3 + a))).collect()
        }
        _ => {
            let x = SpherePoint::from_spherical(1.0, 0.4);
            angles.map(|a| (x.clone(), rotate_towards_pole(&x, a))).collect()
        }
    })
}

/// Point at geodesic angle `a` from `x` on S², moving along the great circle
/// through `x` and the +z direction.
pub fn rotate_towards_pole(x: &SpherePoint, a: f64) -> SpherePoint {
    let c = x.coords();
    let z = [0.0, 0.0, 1.0];
    let dot = c[2];
    let mut v: Vec<f64> = (0..3).map(|i| z[i] - dot * c[i]).collect();
    let n = v.iter().map(|t| t * t).sum::<f64>().sqrt();
    v.iter_mut().for_each(|t| *t /= n);
    let (s, co) = a.sin_cos();
    SpherePoint::normalized((0..3).map(|i| co * c[i] + s * v[i]).collect()).expect("unit combination")
}
