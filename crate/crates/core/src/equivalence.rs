//! Equivalence versus orthogonality of isotropic Gaussian measures.
//!
//! Two zero-mean isotropic fields with Schoenberg sequences `{b_l^(1)}`,
//! `{b_l^(2)}` have equivalent laws iff
//!
//! ```text
//! Σ_l h(l) ‖(b_l^(2))^{-1/2} b_l^(1) (b_l^(2))^{-1/2} − I‖²_HS < ∞.
//! ```
//!
//! Orientation is fixed throughout: conjugation is always by sequence 2, and
//! the scalar marginal terms use the matching ratio `⟨b^(1)u,u⟩ / ⟨b^(2)u,u⟩`,
//! which makes each scalar term a lower bound for the corresponding
//! functional term.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::h_weight;
use crate::models::{multiquadratic_validity, LegendreMaternParams, ModelSpec, MultiquadraticParams};
use crate::schoenberg::{
    hs_norm_squared, quadratic_form_difference, whitened_difference, SchoenbergOperator, SchoenbergSequence,
};

/// Human-readable statement of the orientation used by every series.
pub const ORIENTATION: &str =
    "terms h(l)*||b2^{-1/2} b1 b2^{-1/2} - I||_HS^2; marginal terms h(l)*(<b1 u,u>/<b2 u,u> - 1)^2";

/// A nonzero direction in coefficient space (folded for the Fourier variant).
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalDirection(Vec<f64>);

impl MarginalDirection {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        let n2: f64 = u.iter().map(|v| v * v).sum();
        if !(n2.is_finite() && n2 > 0.0) {
            return Err(Error::InvalidArgument("marginal direction must be finite and nonzero".into()));
        }
        Ok(MarginalDirection(u))
    }

    /// Unit coordinate vector `e_i` of length `n`.
    pub fn coordinate(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::InvalidArgument(format!("coordinate {i} out of range for length {n}")));
        }
        let mut u = vec![0.0; n];
        u[i] = 1.0;
        Ok(MarginalDirection(u))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Equivalent,
    Orthogonal,
    Inconclusive,
}

impl Verdict {
    pub fn is_definite(self) -> bool {
        self != Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    ClosedForm,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceVerdict {
    pub verdict: Verdict,
    pub provenance: Provenance,
    pub diagnostics: String,
}

/// Thresholds for [`classify_numeric`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictPolicy {
    /// Distance from the critical decay exponent −1.
    pub margin: f64,
    /// Relative Cauchy tolerance on partial sums over the fit window.
    pub eps: f64,
    /// Terms above this floor count as non-vanishing.
    pub floor: f64,
}

impl Default for VerdictPolicy {
    fn default() -> Self {
        VerdictPolicy { margin: 0.2, eps: 1e-6, floor: 1e-8 }
    }
}

/// Minimum number of terms for a numeric verdict.
pub const MIN_TERMS: usize = 32;

/// Per-degree terms of an equivalence series with decay diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceTermSeries {
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// Least-squares slope of `ln t_l` against `ln l` over `window`.
    pub decay_fit: Option<f64>,
    /// Inclusive degree range of the fit.
    pub window: (usize, usize),
}

impl EquivalenceTermSeries {
    /// Builds the series with the default window (top half of the degrees).
    pub fn from_terms(terms: Vec<f64>) -> Self {
        let last = terms.len().saturating_sub(1);
        let window = (last.div_ceil(2), last);
        let mut acc = 0.0;
        let partial_sums = terms
            .iter()
            .map(|t| {
                acc += t;
                acc
            })
            .collect();
        let decay_fit = decay_fit(&terms, window);
        EquivalenceTermSeries { terms, partial_sums, decay_fit, window }
    }

    /// Refits the decay exponent over another inclusive window.
    pub fn with_window(mut self, lo: usize, hi: usize) -> Self {
        let hi = hi.min(self.terms.len().saturating_sub(1));
        self.window = (lo.min(hi), hi);
        self.decay_fit = decay_fit(&self.terms, self.window);
        self
    }

    pub fn total(&self) -> f64 {
        self.partial_sums.last().copied().unwrap_or(0.0)
    }

    /// `(l, t_l, S_l)` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("l,t_l,S_l\n");
        for (l, (t, s)) in self.terms.iter().zip(&self.partial_sums).enumerate() {
            out.push_str(&format!("{l},{t:e},{s:e}\n"));
        }
        out
    }
}

/// Slope of `ln t_l` vs `ln l` over the window, using degrees ≥ 1 with finite
/// positive terms. `None` when fewer than two such points exist.
pub fn decay_fit(terms: &[f64], window: (usize, usize)) -> Option<f64> {
    let pts: Vec<(f64, f64)> = (window.0.max(1)..=window.1)
        .filter_map(|l| terms.get(l).map(|t| (l, *t)))
        .filter(|(_, t)| t.is_finite() && *t > 0.0)
        .map(|(l, t)| ((l as f64).ln(), t.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// `h_l · ‖b2^{-1/2} b1 b2^{-1/2} − I‖²_HS`.
pub fn hs_term(b1: &SchoenbergOperator, b2: &SchoenbergOperator, hl: f64) -> Result<f64> {
    if !(hl.is_finite() && hl > 0.0) {
        return Err(Error::InvalidArgument(format!("degree weight must be positive, got {hl}")));
    }
    let d = whitened_difference(b1, b2)?;
    let v = hs_norm_squared(&d);
    Ok(if v.is_nan() { f64::INFINITY } else { hl * v })
}

fn check_degrees(seq1: &SchoenbergSequence, seq2: &SchoenbergSequence, l: usize) -> Result<()> {
    seq1.require_compatible(seq2)?;
    if l > seq1.l_max() || l > seq2.l_max() {
        return Err(Error::InvalidArgument(format!(
            "series up to degree {l} needs both sequences materialized that far (have {} and {})",
            seq1.l_max(),
            seq2.l_max()
        )));
    }
    Ok(())
}

/// Functional series terms `t_0 … t_L`. Degrees are evaluated in parallel;
/// the output is in degree order.
pub fn functional_series(
    seq1: &SchoenbergSequence,
    seq2: &SchoenbergSequence,
    l: usize,
) -> Result<EquivalenceTermSeries> {
    check_degrees(seq1, seq2, l)?;
    let d = seq1.dim();
    let terms = (0..=l)
        .into_par_iter()
        .map(|deg| {
            hs_term(&seq1.coeffs()[deg], &seq2.coeffs()[deg], h_weight(d, deg))
                .map_err(|e| Error::InvalidArgument(format!("degree {deg}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquivalenceTermSeries::from_terms(terms))
}

/// Scalar series of the marginal field `⟨Z, u⟩` with the projected Schoenberg
/// coefficients `⟨b_l u, u⟩` of both sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarMarginalSeries {
    pub series: EquivalenceTermSeries,
    pub projected1: Vec<f64>,
    pub projected2: Vec<f64>,
}

/// One scalar marginal term `h_l (⟨b1 u,u⟩/⟨b2 u,u⟩ − 1)²`.
pub fn scalar_marginal_term(
    b1: &SchoenbergOperator,
    b2: &SchoenbergOperator,
    u: &MarginalDirection,
    hl: f64,
) -> Result<f64> {
    let q2 = b2.quadratic_form(u.as_slice())?;
    if !(q2 > 0.0) {
        return Err(Error::InvalidArgument(format!("degenerate marginal denominator <b2 u, u> = {q2:e}")));
    }
    let diff = quadratic_form_difference(b1, b2, u.as_slice())?;
    Ok(hl * (diff / q2).powi(2))
}

pub fn scalar_marginal_series(
    seq1: &SchoenbergSequence,
    seq2: &SchoenbergSequence,
    u: &MarginalDirection,
    l: usize,
) -> Result<ScalarMarginalSeries> {
    check_degrees(seq1, seq2, l)?;
    let d = seq1.dim();
    let mut terms = Vec::with_capacity(l + 1);
    let mut projected1 = Vec::with_capacity(l + 1);
    let mut projected2 = Vec::with_capacity(l + 1);
    for deg in 0..=l {
        let (b1, b2) = (&seq1.coeffs()[deg], &seq2.coeffs()[deg]);
        let q1 = b1.quadratic_form(u.as_slice())?;
        if !(q1 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "degree {deg}: degenerate marginal coefficient <b1 u, u> = {q1:e}"
            )));
        }
        terms.push(
            scalar_marginal_term(b1, b2, u, h_weight(d, deg))
                .map_err(|e| Error::InvalidArgument(format!("degree {deg}: {e}")))?,
        );
        projected1.push(q1);
        projected2.push(b2.quadratic_form(u.as_slice())?);
    }
    Ok(ScalarMarginalSeries { series: EquivalenceTermSeries::from_terms(terms), projected1, projected2 })
}

/// Both sides of `|⟨(A−B)u,u⟩ / ⟨Bu,u⟩| ≤ ‖B^{-1/2} A B^{-1/2} − I‖_HS`
/// with `B = b1`, `A = b2`.
pub fn marginal_bound_check(
    b1: &SchoenbergOperator,
    b2: &SchoenbergOperator,
    u: &MarginalDirection,
) -> Result<(f64, f64)> {
    let rhs = hs_norm_squared(&whitened_difference(b2, b1)?).sqrt();
    let q = b1.quadratic_form(u.as_slice())?;
    if !(q > 0.0) {
        return Err(Error::InvalidArgument(format!("degenerate marginal denominator <B u, u> = {q:e}")));
    }
    let lhs = (quadratic_form_difference(b2, b1, u.as_slice())? / q).abs();
    Ok((lhs, rhs))
}

/// Three-valued convergence probe on a computed series.
pub fn classify_numeric(series: &EquivalenceTermSeries, policy: &VerdictPolicy) -> EquivalenceVerdict {
    let numeric =
        |verdict, diagnostics: String| EquivalenceVerdict { verdict, provenance: Provenance::Numeric, diagnostics };
    let n = series.terms.len();
    if n < MIN_TERMS {
        return numeric(Verdict::Inconclusive, format!("only {n} terms; need at least {MIN_TERMS}"));
    }
    if let Some(l) = series.terms.iter().position(|t| !t.is_finite()) {
        return numeric(Verdict::Orthogonal, format!("term {l} is not finite"));
    }
    let (lo, hi) = series.window;
    let tail = &series.terms[lo..=hi];
    let tail_min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let total = series.partial_sums[hi];
    let before = if lo == 0 { 0.0 } else { series.partial_sums[lo - 1] };
    let increment = total - before;
    let cauchy = increment <= policy.eps * total.abs() || total == 0.0;
    let rel = if total > 0.0 { increment / total } else { 0.0 };
    match series.decay_fit {
        Some(beta) => {
            let diag = format!(
                "decay exponent {beta:.3} over l in [{lo}, {hi}], relative tail increment {rel:.3e}, tail minimum {tail_min:.3e}"
            );
            if beta > -1.0 + policy.margin {
                numeric(Verdict::Orthogonal, diag)
            } else if beta < -1.0 - policy.margin && cauchy {
                numeric(Verdict::Equivalent, diag)
            } else {
                numeric(Verdict::Inconclusive, diag)
            }
        }
        None => {
            let diag = format!(
                "no decay fit (fewer than two positive terms in [{lo}, {hi}]), relative tail increment {rel:.3e}"
            );
            if tail_min > policy.floor {
                numeric(Verdict::Orthogonal, diag)
            } else if cauchy {
                numeric(Verdict::Equivalent, diag)
            } else {
                numeric(Verdict::Inconclusive, diag)
            }
        }
    }
}

fn closed_form(verdict: Verdict, diagnostics: String) -> EquivalenceVerdict {
    EquivalenceVerdict { verdict, provenance: Provenance::ClosedForm, diagnostics }
}

/// Exact classification for two valid multiquadratic models on the same sphere.
pub fn classify_multiquadratic(p1: &MultiquadraticParams, p2: &MultiquadraticParams) -> Result<EquivalenceVerdict> {
    for (i, p) in [p1, p2].into_iter().enumerate() {
        p.check_ranges()?;
        let v = multiquadratic_validity(p);
        if let Some(msg) = v.violation(p) {
            return Err(Error::InvalidModel(format!("model {}: {msg}", i + 1)));
        }
    }
    if p1.d != p2.d {
        return Err(Error::Incompatible(format!("sphere dimensions differ: {} vs {}", p1.d.get(), p2.d.get())));
    }
    let same_marginals = p1.sigma == p2.sigma && p1.alpha[0] == p2.alpha[0] && p1.alpha[1] == p2.alpha[1];
    if !same_marginals {
        return Ok(closed_form(
            Verdict::Orthogonal,
            "marginal scales or diagonal decays differ, so a scalar component is already orthogonal".into(),
        ));
    }
    let geo = (p1.alpha[0] * p1.alpha[1]).sqrt();
    if p1.alpha[2] < geo && p2.alpha[2] < geo {
        return Ok(closed_form(
            Verdict::Equivalent,
            format!("equal marginals and both alpha12 below sqrt(alpha11*alpha22) = {geo}"),
        ));
    }
    if p1 == p2 {
        return Ok(closed_form(Verdict::Equivalent, "identical parameters".into()));
    }
    Ok(closed_form(
        Verdict::Orthogonal,
        format!("alpha12 = sqrt(alpha11*alpha22) = {geo} for one model and the parameters differ"),
    ))
}

/// Exact classification for two Legendre–Matérn models: equivalent iff σ and ν agree.
pub fn classify_legendre_matern(p1: &LegendreMaternParams, p2: &LegendreMaternParams) -> Result<EquivalenceVerdict> {
    p1.check()?;
    p2.check()?;
    Ok(if p1.sigma == p2.sigma && p1.nu == p2.nu {
        closed_form(Verdict::Equivalent, "sigma and nu agree (alpha is not identifiable)".into())
    } else {
        closed_form(
            Verdict::Orthogonal,
            format!("sigma {} vs {} or nu {} vs {} differ", p1.sigma, p2.sigma, p1.nu, p2.nu),
        )
    })
}

/// Closed-form verdict when both models come from the same known family.
pub fn classify_models(m1: &ModelSpec, m2: &ModelSpec) -> Result<Option<EquivalenceVerdict>> {
    match (m1, m2) {
        (ModelSpec::Multiquadratic(a), ModelSpec::Multiquadratic(b)) => classify_multiquadratic(a, b).map(Some),
        (ModelSpec::LegendreMatern(a), ModelSpec::LegendreMatern(b)) => classify_legendre_matern(a, b).map(Some),
        _ => Ok(None),
    }
}

/// Serialized result of an equivalence diagnosis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub orientation: String,
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub decay_fit: Option<f64>,
    pub window: (usize, usize),
    /// Final verdict: the closed form when available, else the numeric probe.
    pub verdict: Verdict,
    pub provenance: Provenance,
    pub policy: VerdictPolicy,
    pub numeric: EquivalenceVerdict,
    pub closed_form: Option<EquivalenceVerdict>,
    /// Closed-form and numeric verdicts are both definite and differ.
    pub disagreement: bool,
}

impl EquivalenceReport {
    pub fn new(series: EquivalenceTermSeries, policy: VerdictPolicy, closed: Option<EquivalenceVerdict>) -> Self {
        let numeric = classify_numeric(&series, &policy);
        let disagreement =
            closed.as_ref().is_some_and(|c| numeric.verdict.is_definite() && c.verdict != numeric.verdict);
        let (verdict, provenance) = match &closed {
            Some(c) => (c.verdict, Provenance::ClosedForm),
            None => (numeric.verdict, Provenance::Numeric),
        };
        EquivalenceReport {
            orientation: ORIENTATION.into(),
            terms: series.terms,
            partial_sums: series.partial_sums,
            decay_fit: series.decay_fit,
            window: series.window,
            verdict,
            provenance,
            policy,
            numeric,
            closed_form: closed,
            disagreement,
        }
    }

    pub fn to_csv(&self) -> String {
        EquivalenceTermSeries {
            terms: self.terms.clone(),
            partial_sums: self.partial_sums.clone(),
            decay_fit: self.decay_fit,
            window: self.window,
        }
        .to_csv()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::SphereDim;
    use crate::models::build_sequence;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn m2(a: f64, b: f64, c: f64) -> SchoenbergOperator {
        SchoenbergOperator::matrix(DMatrix::from_row_slice(2, 2, &[a, b, b, c])).unwrap()
    }

    fn mq(sigma: [f64; 2], rho12: f64, alpha: [f64; 3]) -> MultiquadraticParams {
        MultiquadraticParams { d: SphereDim::new(2).unwrap(), sigma, rho12, alpha }
    }

    #[test]
    fn hs_term_examples() {
        let b = m2(2.0, 0.3, 1.0);
        assert_eq!(hs_term(&b, &b, 7.0).unwrap(), 0.0);
        assert_eq!(hs_term(&SchoenbergOperator::Scalar(2.0), &SchoenbergOperator::Scalar(1.0), 3.0).unwrap(), 3.0);
        assert!(hs_term(&b, &m2(1.0, 1.0, 1.0), 1.0).is_err());
        assert!(hs_term(&b, &SchoenbergOperator::Scalar(1.0), 1.0).is_err());
    }

    #[test]
    fn fourier_term_uses_multiplicity() {
        let b1 = SchoenbergOperator::fourier_diagonal(vec![2.0, 1.0, 3.0]).unwrap();
        let b2 = SchoenbergOperator::fourier_diagonal(vec![1.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(hs_term(&b1, &b2, 5.0).unwrap(), 5.0 * (1.0 + 0.0 + 2.0 * 4.0));
    }

    #[test]
    fn classify_numeric_examples() {
        let p = VerdictPolicy::default();
        let zero = EquivalenceTermSeries::from_terms(vec![0.0; 64]);
        assert_eq!(classify_numeric(&zero, &p).verdict, Verdict::Equivalent);
        let ones = EquivalenceTermSeries::from_terms(vec![1.0; 64]);
        assert_eq!(classify_numeric(&ones, &p).verdict, Verdict::Orthogonal);
        let harmonic = EquivalenceTermSeries::from_terms((0..512).map(|l| 1.0 / (l.max(1) as f64)).collect());
        assert_ne!(classify_numeric(&harmonic, &p).verdict, Verdict::Equivalent);
        let short = EquivalenceTermSeries::from_terms(vec![0.0; 10]);
        assert_eq!(classify_numeric(&short, &p).verdict, Verdict::Inconclusive);
        let geometric = EquivalenceTermSeries::from_terms((0..200).map(|l| 0.5f64.powi(l)).collect());
        assert_eq!(classify_numeric(&geometric, &p).verdict, Verdict::Equivalent);
        let mut inf = vec![0.0; 64];
        inf[40] = f64::INFINITY;
        assert_eq!(classify_numeric(&EquivalenceTermSeries::from_terms(inf), &p).verdict, Verdict::Orthogonal);
    }

    #[test]
    fn decay_fit_recovers_power_law() {
        let s = EquivalenceTermSeries::from_terms((0..=400).map(|l| 3.0 * (l.max(1) as f64).powf(-2.5)).collect());
        assert_relative_eq!(s.decay_fit.unwrap(), -2.5, epsilon = 1e-10);
        assert_eq!(s.window, (200, 400));
        let s = s.with_window(10, 100);
        assert_eq!(s.window, (10, 100));
        assert_relative_eq!(s.decay_fit.unwrap(), -2.5, epsilon = 1e-10);
    }

    #[test]
    fn partial_sums_and_csv() {
        let s = EquivalenceTermSeries::from_terms(vec![1.0, 0.5, 0.25]);
        assert_eq!(s.partial_sums, vec![1.0, 1.5, 1.75]);
        let csv = s.to_csv();
        assert!(csv.starts_with("l,t_l,S_l\n0,1e0,1e0\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn multiquadratic_closed_form_examples() {
        let a = mq([1.0, 1.5], 0.5, [0.5, 0.5, 0.3]);
        assert_eq!(classify_multiquadratic(&a, &a).unwrap().verdict, Verdict::Equivalent);

        let b = mq([1.0, 1.5], 0.2, [0.5, 0.5, 0.35]);
        let v = classify_multiquadratic(&a, &b).unwrap();
        assert_eq!(v.verdict, Verdict::Equivalent);
        assert_eq!(v.provenance, Provenance::ClosedForm);

        let c = mq([1.1, 1.5], 0.5, [0.5, 0.5, 0.3]);
        assert_eq!(classify_multiquadratic(&a, &c).unwrap().verdict, Verdict::Orthogonal);

        // boundary alpha12 = sqrt(alpha11 alpha22)
        let e = mq([1.0, 1.0], 0.3, [0.5, 0.5, 0.5]);
        let f = mq([1.0, 1.0], 0.3, [0.5, 0.5, 0.4]);
        assert_eq!(classify_multiquadratic(&e, &e).unwrap().verdict, Verdict::Equivalent);
        assert_eq!(classify_multiquadratic(&e, &f).unwrap().verdict, Verdict::Orthogonal);
        assert_eq!(classify_multiquadratic(&f, &e).unwrap().verdict, Verdict::Orthogonal);

        let invalid = mq([1.0, 1.0], 0.3, [0.6, 0.4, 0.5]);
        assert!(classify_multiquadratic(&a, &invalid).is_err());
    }

    #[test]
    fn legendre_matern_closed_form_examples() {
        let p = LegendreMaternParams::new;
        let v = classify_legendre_matern(&p(1.0, 1.0, 1.0), &p(1.0, 2.0, 1.0)).unwrap();
        assert_eq!(v.verdict, Verdict::Equivalent);
        assert_eq!(
            classify_legendre_matern(&p(1.0, 1.0, 1.0), &p(1.0, 1.0, 1.5)).unwrap().verdict,
            Verdict::Orthogonal
        );
        assert_eq!(
            classify_legendre_matern(&p(1.0, 1.0, 1.0), &p(1.0, 1.0, 1.0)).unwrap().verdict,
            Verdict::Equivalent
        );
        assert_eq!(
            classify_legendre_matern(&p(2.0, 1.0, 1.0), &p(1.0, 1.0, 1.0)).unwrap().verdict,
            Verdict::Orthogonal
        );
    }

    #[test]
    fn identical_sequences_give_zero_series() {
        let spec = ModelSpec::Multiquadratic(mq([1.0, 1.5], 0.5, [0.5, 0.5, 0.3]));
        let seq = build_sequence(&spec, 64).unwrap();
        let s = functional_series(&seq, &seq, 64).unwrap();
        assert!(s.terms.iter().all(|t| *t == 0.0));
        assert_eq!(classify_numeric(&s, &VerdictPolicy::default()).verdict, Verdict::Equivalent);
        let u = MarginalDirection::new(vec![0.3, -1.0]).unwrap();
        let m = scalar_marginal_series(&seq, &seq, &u, 64).unwrap();
        assert!(m.series.terms.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn coordinate_marginal_matches_scalar_criterion() {
        let s1 = build_sequence(&ModelSpec::Multiquadratic(mq([1.0, 1.5], 0.5, [0.5, 0.5, 0.3])), 40).unwrap();
        let s2 = build_sequence(&ModelSpec::Multiquadratic(mq([1.2, 1.5], 0.5, [0.45, 0.5, 0.3])), 40).unwrap();
        let u = MarginalDirection::coordinate(2, 0).unwrap();
        let m = scalar_marginal_series(&s1, &s2, &u, 40).unwrap();
        for l in 0..=40 {
            let SchoenbergOperator::Matrix(a) = &s1.coeffs()[l] else { panic!() };
            let SchoenbergOperator::Matrix(b) = &s2.coeffs()[l] else { panic!() };
            let want = (2 * l + 1) as f64 * (a[(0, 0)] / b[(0, 0)] - 1.0).powi(2);
            assert_relative_eq!(m.series.terms[l], want, max_relative = 1e-10);
            assert_eq!(m.projected1[l], a[(0, 0)]);
        }
    }

    #[test]
    fn marginal_bound_examples() {
        let b = m2(2.0, 0.5, 1.0);
        let u = MarginalDirection::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(marginal_bound_check(&b, &b, &u).unwrap(), (0.0, 0.0));
        let (lhs, rhs) = marginal_bound_check(&b, &b.scaled(2.0), &u).unwrap();
        assert_relative_eq!(lhs, 1.0, epsilon = 1e-14);
        assert_relative_eq!(rhs, 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn degenerate_direction_rejected() {
        assert!(MarginalDirection::new(vec![0.0, 0.0]).is_err());
        let b = m2(1.0, 0.0, 0.0);
        let u = MarginalDirection::coordinate(2, 1).unwrap();
        assert!(scalar_marginal_term(&m2(1.0, 0.0, 1.0), &b, &u, 1.0).is_err());
    }

    #[test]
    fn report_flags_disagreement() {
        let series = EquivalenceTermSeries::from_terms(vec![1.0; 64]);
        let closed = closed_form(Verdict::Equivalent, String::new());
        let r = EquivalenceReport::new(series.clone(), VerdictPolicy::default(), Some(closed));
        assert!(r.disagreement);
        assert_eq!(r.verdict, Verdict::Equivalent);
        assert_eq!(r.provenance, Provenance::ClosedForm);
        let r = EquivalenceReport::new(series, VerdictPolicy::default(), None);
        assert!(!r.disagreement);
        assert_eq!((r.verdict, r.provenance), (Verdict::Orthogonal, Provenance::Numeric));
        let json = serde_json::to_value(&r).unwrap();
        for key in ["terms", "partial_sums", "decay_fit", "verdict", "provenance", "policy"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }
}
