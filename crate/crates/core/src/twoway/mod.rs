//! Two-way post-processing on Bell-diagonal states.
//!
//! A Bell-diagonal pair is `(q₀₀, q₁₀, q₁₁, q₀₁)`: no error, bit error,
//! bit and phase error, phase error. The B step (bilateral XOR with
//! post-selection on agreeing target parities) suppresses bit errors; the
//! P step (trio parity) suppresses phase errors. A sequence of steps is
//! followed by a one-way distillation that succeeds when
//! `1 − H₂(δ_b) − H₂(δ_p) > 0`.
//!
//! Long step sequences drive one error rate towards 0 and the other towards
//! 1/2, where plain probabilities lose all precision. The region search
//! therefore also carries the margins `q₀₀ − q₀₁`, `q₁₀ − q₁₁`,
//! `q₀₀ − q₁₀`, `q₀₁ − q₁₁`, which have their own exact update rules.

use crate::error::{check_fraction, domain, Error, Result};
use crate::keyrate::{h2, pa_cost};
use crate::solver::{bisect, golden_max, BISECT_MAX_ITER};

/// Bell-diagonal state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellDiag {
    pub q00: f64,
    pub q10: f64,
    pub q11: f64,
    pub q01: f64,
}

impl BellDiag {
    pub fn new(q00: f64, q10: f64, q11: f64, q01: f64) -> Result<Self> {
        let s = BellDiag { q00, q10, q11, q01 };
        if s.as_array().iter().any(|&q| !(q >= 0.0)) || (q00 + q10 + q11 + q01 - 1.0).abs() > 1e-12 {
            return Err(domain(format!("not a Bell-diagonal state: {s:?}")));
        }
        Ok(s)
    }

    /// State with the given error rates and no correlated (`q₁₁`) errors.
    pub fn from_rates(delta_b: f64, delta_p: f64) -> Result<Self> {
        Self::new(1.0 - delta_b - delta_p, delta_b, 0.0, delta_p)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.q00, self.q10, self.q11, self.q01]
    }

    pub fn delta_b(&self) -> f64 {
        self.q10 + self.q11
    }

    pub fn delta_p(&self) -> f64 {
        self.q11 + self.q01
    }
}

/// One B step on a control and a target pair. Returns the surviving control
/// state and the survival probability.
pub fn b_step(control: &BellDiag, target: &BellDiag) -> Result<(BellDiag, f64)> {
    let (c, t) = (control, target);
    let ps = (c.q00 + c.q01) * (t.q00 + t.q01) + (c.q10 + c.q11) * (t.q10 + t.q11);
    if ps <= 0.0 {
        return Err(Error::Degenerate("B step: zero survival probability".into()));
    }
    let out = BellDiag {
        q00: (c.q00 * t.q00 + c.q01 * t.q01) / ps,
        q10: (c.q10 * t.q10 + c.q11 * t.q11) / ps,
        q11: (c.q10 * t.q11 + c.q11 * t.q10) / ps,
        q01: (c.q00 * t.q01 + c.q01 * t.q00) / ps,
    };
    Ok((out, ps))
}

/// One P step on three pairs sharing the same state.
pub fn p_step(s: &BellDiag) -> BellDiag {
    let BellDiag { q00: a, q10: b, q11: c, q01: d } = *s;
    BellDiag {
        q00: a * a * a + 3.0 * a * a * d + 3.0 * b * b * (a + d) + 6.0 * a * b * c,
        q10: b * b * b + 3.0 * b * b * c + 3.0 * a * a * (b + c) + 6.0 * a * b * d,
        q11: c * c * c + 3.0 * b * c * c + 3.0 * d * d * (b + c) + 6.0 * a * c * d,
        q01: d * d * d + 3.0 * a * d * d + 3.0 * c * c * (a + d) + 6.0 * b * c * d,
    }
}

/// One step of a Gottesman–Lo sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    B,
    P,
}

/// Maximum sequence length accepted by the region search.
pub const MAX_STEPS: usize = 12;

/// Ordered step sequence of bounded length.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StepSequence(Vec<Step>);

impl StepSequence {
    pub fn new(steps: Vec<Step>) -> Result<Self> {
        if steps.len() > MAX_STEPS {
            return Err(domain(format!("{} steps exceed the limit of {MAX_STEPS}", steps.len())));
        }
        Ok(StepSequence(steps))
    }

    pub fn steps(&self) -> &[Step] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::fmt::Display for StepSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_empty() {
            return f.write_str("-");
        }
        for s in &self.0 {
            f.write_str(match s {
                Step::B => "B",
                Step::P => "P",
            })?;
        }
        Ok(())
    }
}

/// `1 − H₂((1 − m)/2)` for a margin `m = 1 − 2δ`, accurate for small `m`.
fn capacity(m: f64) -> f64 {
    let m = m.clamp(-1.0, 1.0).abs();
    if m < 1e-4 {
        let m2 = m * m;
        return m2 / (2.0 * std::f64::consts::LN_2) * (1.0 + m2 / 6.0 + m2 * m2 / 15.0);
    }
    if m == 1.0 {
        return 1.0;
    }
    ((1.0 + m) * m.ln_1p() + (1.0 - m) * (-m).ln_1p()) / (2.0 * std::f64::consts::LN_2)
}

/// Bell-diagonal state together with its difference margins.
#[derive(Debug, Clone, Copy)]
struct Tracked {
    q: BellDiag,
    /// `q₀₀ − q₀₁`
    u: f64,
    /// `q₁₀ − q₁₁`
    v: f64,
    /// `q₀₀ − q₁₀`
    x: f64,
    /// `q₀₁ − q₁₁`
    y: f64,
}

impl Tracked {
    fn new(q: BellDiag) -> Self {
        Tracked { q, u: q.q00 - q.q01, v: q.q10 - q.q11, x: q.q00 - q.q10, y: q.q01 - q.q11 }
    }

    fn b(&self) -> (Tracked, f64) {
        let BellDiag { q10, q11, .. } = self.q;
        let (u, v, x, y) = (self.u, self.v, self.x, self.y);
        let (q, ps) = b_step(&self.q, &self.q).expect("valid state has positive survival");
        (
            Tracked {
                q,
                u: u * u / ps,
                v: v * v / ps,
                x: (2.0 * q10 * x + 2.0 * q11 * y + x * x + y * y) / ps,
                y: 2.0 * (q10 * y + q11 * x + x * y) / ps,
            },
            ps,
        )
    }

    fn p(&self) -> Tracked {
        let (c, d) = (self.q.q11, self.q.q01);
        let (u, v, x, y) = (self.u, self.v, self.x, self.y);
        Tracked {
            q: p_step(&self.q),
            u: 12.0 * c * d * v
                + 6.0 * d * (u * u + v * v)
                + u * u * u
                + u * (6.0 * c * c + 12.0 * c * v + 6.0 * d * d + 3.0 * v * v),
            v: 6.0 * c * v * v
                + u * u * (6.0 * c + 3.0 * v)
                + u * (12.0 * c * d + 12.0 * d * v)
                + v * v * v
                + v * (6.0 * c * c + 6.0 * d * d),
            x: x * x * (x + 3.0 * y),
            y: y * y * (3.0 * x + y),
        }
    }

    /// `1 − H₂(δ_b) − H₂(δ_p)`, evaluating the larger error rate through its margin.
    fn one_way_margin(&self) -> f64 {
        let (db, dp) = (self.q.delta_b(), self.q.delta_p());
        if db <= dp {
            capacity(self.u + self.v) - h2(db)
        } else {
            capacity(self.x + self.y) - h2(dp)
        }
    }
}

/// One-way distillation criterion `1 − H₂(δ_b) − H₂(δ_p) > 0`.
pub fn one_way_tolerable(delta_b: f64, delta_p: f64) -> bool {
    delta_b + delta_p < 0.5 && 1.0 - h2(delta_b) - h2(delta_p) > 0.0
}

/// Result of the B/P sequence search.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPoint {
    pub tolerable: bool,
    /// Shortest tolerable sequence (ties broken with B before P).
    pub sequence: Option<StepSequence>,
}

/// Search every B/P sequence of at most `max_steps` steps, starting from
/// `(1 − δ_b − δ_p − q₁₁, δ_b − q₁₁, q₁₁, δ_p − q₁₁)`, for one that leaves a
/// state distillable by one-way post-processing.
pub fn gl_tolerable_region_q11(delta_b: f64, delta_p: f64, q11: f64, max_steps: usize) -> Result<RegionPoint> {
    check_fraction("delta_b", delta_b)?;
    check_fraction("delta_p", delta_p)?;
    if max_steps > MAX_STEPS {
        return Err(domain(format!("max_steps {max_steps} exceeds {MAX_STEPS}")));
    }
    let none = RegionPoint { tolerable: false, sequence: None };
    if delta_b + delta_p >= 0.5 {
        return Ok(none);
    }
    let start = BellDiag::new(1.0 - delta_b - delta_p + q11, delta_b - q11, q11, delta_p - q11)?;
    let mut level = vec![(Tracked::new(start), Vec::new())];
    for depth in 0..=max_steps {
        if let Some((_, seq)) = level.iter().find(|(t, _)| t.one_way_margin() > 0.0) {
            return Ok(RegionPoint { tolerable: true, sequence: Some(StepSequence(seq.clone())) });
        }
        if depth == max_steps {
            break;
        }
        level = level
            .into_iter()
            .flat_map(|(t, seq)| {
                let mut sb = seq.clone();
                sb.push(Step::B);
                let mut sp = seq;
                sp.push(Step::P);
                [(t.b().0, sb), (t.p(), sp)]
            })
            .collect();
    }
    Ok(none)
}

/// Region search with the worst-case `q₁₁ = 0`.
pub fn gl_tolerable_region(delta_b: f64, delta_p: f64, max_steps: usize) -> Result<RegionPoint> {
    gl_tolerable_region_q11(delta_b, delta_p, 0.0, max_steps)
}

/// Largest equal bit/phase error rate tolerable with at most `max_steps`
/// steps, found by bisection on the region boundary.
pub fn gl_threshold(max_steps: usize, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, 0.25);
    while hi - lo > tol {
        let m = 0.5 * (lo + hi);
        if gl_tolerable_region(m, m, max_steps)?.tolerable {
            lo = m;
        } else {
            hi = m;
        }
    }
    Ok(lo)
}

/// Decoy + B-step pipeline residue.
///
/// `omega` is the single-photon fraction of detections, `delta` the overall
/// bit error rate, `delta_untagged` the single-photon bit error rate and
/// `delta_p` its phase error rate. Each B step maps
///
/// ```text
/// p_S = δ² + (1−δ)²        p_S,u = δ_u² + (1−δ_u)²
/// Ω  ← Ω²p_S,u/p_S         δ  ← δ²/p_S         δ_u ← δ_u²/p_S,u
/// δ_p ← 2δ_p(1 − δ_u − δ_p)/p_S,u             r_B ← r_B·p_S/2
/// ```
///
/// and the final residue is `r_B{−f·H₂(δ) + Ω[1 − H₂(δ_p)]}`.
pub fn decoy_b_pipeline(omega: f64, delta: f64, delta_untagged: f64, delta_p: f64, n_bsteps: usize, f: f64) -> f64 {
    let (mut om, mut d, mut du, mut dp, mut rb) = (omega, delta, delta_untagged, delta_p, 1.0);
    for _ in 0..n_bsteps {
        let ps = d * d + (1.0 - d) * (1.0 - d);
        let psu = du * du + (1.0 - du) * (1.0 - du);
        rb *= ps / 2.0;
        om = om * om * psu / ps;
        d = d * d / ps;
        dp = 2.0 * dp * (1.0 - du - dp) / psu;
        du = du * du / psu;
    }
    rb * (-f * h2(d) + om * (1.0 - pa_cost(dp)))
}

/// Detection fractions and error rates of the three kinds of input pairs
/// (vacuum, single photon, multi photon) for the recurrence scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaggedInput {
    pub omega_v: f64,
    pub omega: f64,
    pub omega_m: f64,
    pub e1: f64,
    pub e_m: f64,
}

impl TaggedInput {
    pub fn validate(&self) -> Result<()> {
        for (n, v) in [("omega_v", self.omega_v), ("omega", self.omega), ("omega_m", self.omega_m), ("e1", self.e1), ("e_m", self.e_m)] {
            check_fraction(n, v)?;
        }
        if (self.omega_v + self.omega + self.omega_m - 1.0).abs() > 1e-9 {
            return Err(domain("input fractions must sum to one"));
        }
        Ok(())
    }

    /// Overall bit error rate implied by the fractions.
    pub fn overall_delta(&self) -> f64 {
        0.5 * self.omega_v + self.e1 * self.omega + self.e_m * self.omega_m
    }

    /// Pure single-photon input with error rate `e1`.
    pub fn single_photon(e1: f64) -> Self {
        TaggedInput { omega_v: 0.0, omega: 1.0, omega_m: 0.0, e1, e_m: 0.0 }
    }

    /// Split observed detections into vacuum, single-photon and
    /// multi-photon parts; `e_m` follows from the overall error budget.
    pub fn from_parts(gain: f64, qber: f64, q0: f64, q1: f64, e1: f64) -> Result<Self> {
        if !(gain > 0.0) || q0 + q1 > gain {
            return Err(domain("inconsistent gain decomposition"));
        }
        let qm = gain - q0 - q1;
        let e_m = if qm > 0.0 { ((qber * gain - 0.5 * q0 - e1 * q1) / qm).clamp(0.0, 1.0) } else { 0.0 };
        Ok(TaggedInput { omega_v: q0 / gain, omega: q1 / gain, omega_m: qm / gain, e1, e_m })
    }
}

/// Coefficients of the recurrence residue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecurrenceTerms {
    /// Parity-exchange and error-correction cost.
    pub b: f64,
    pub c: f64,
    pub d1: f64,
    pub d2: f64,
    /// Maximiser of `F_a` and its value.
    pub a_star: f64,
    pub f_a: f64,
}

fn f_a(d1: f64, d2: f64, e1: f64, a: f64) -> f64 {
    d1 * (1.0 - e1) * h2((e1 - a) / (1.0 - e1)) + d2 * e1 * h2(a / e1)
}

/// `dF_a/da`, strictly decreasing on `(0, e₁)`.
fn f_a_slope(d1: f64, d2: f64, e1: f64, a: f64) -> f64 {
    let logit = |p: f64| ((1.0 - p) / p).log2();
    d2 * logit(a / e1) - d1 * logit((e1 - a) / (1.0 - e1))
}

/// Maximise `F_a` over `a ∈ [0, e₁]`: bisection on the slope, with a
/// golden-section fallback when the slope has no sign change.
pub fn maximise_f_a(d1: f64, d2: f64, e1: f64) -> (f64, f64) {
    if e1 <= 0.0 {
        return (0.0, 0.0);
    }
    let (lo, hi) = (e1 * 1e-15, e1 * (1.0 - 1e-15));
    let a = bisect(|a| f_a_slope(d1, d2, e1, a), lo, hi, 1e-14 * e1, BISECT_MAX_ITER)
        .unwrap_or_else(|_| golden_max(|a| f_a(d1, d2, e1, a), 0.0, e1, 1e-12 * e1).0);
    (a, f_a(d1, d2, e1, a))
}

/// Recurrence coefficients for a tagged input at overall error rate `delta`.
/// The vacuum and multi-photon correlated-error parameters are fixed at the
/// worst case `q₁₁ᵛ = 1/4`, `q₁₁ᴹ = e_M/2`.
pub fn recurrence_terms(input: &TaggedInput, delta: f64, f: f64) -> Result<RecurrenceTerms> {
    input.validate()?;
    if !(f >= 1.0) {
        return Err(domain(format!("f = {f} < 1")));
    }
    check_fraction("delta", delta)?;
    let TaggedInput { omega_v: ov, omega: o, omega_m: om, e1, e_m: em } = *input;
    let ps = delta * delta + (1.0 - delta) * (1.0 - delta);
    let b = 0.5 * f * h2(ps) + 0.5 * ps * f * h2(delta * delta / ps);
    let c = 0.75 * ov * o + o * o * (1.0 - e1 + e1 * e1) + 0.5 * o * om * (2.0 - e1 - em + 2.0 * e1 * em);
    let d1 = 0.75 * ov * o + 0.5 * o * o * (2.0 - e1) + 0.5 * o * om * (2.0 - em);
    let d2 = 0.75 * ov * o + 0.5 * o * o * (1.0 + e1) + 0.5 * o * om * (em + 1.0);
    let (a_star, fa) = maximise_f_a(d1, d2, e1);
    Ok(RecurrenceTerms { b, c, d1, d2, a_star, f_a: fa })
}

/// Recurrence residue `−B + C − max_a F_a` per input pair.
pub fn recurrence_residue(input: &TaggedInput, delta: f64, f: f64) -> Result<f64> {
    let t = recurrence_terms(input, delta, f)?;
    Ok(-t.b + t.c - t.f_a)
}

/// Largest phase error rate compatible with fidelity `fidelity` and bit
/// error rate `delta_b`: the largest `δ_p ∈ [δ_b, 1/2]` with
/// `√F ≤ √((1−δ_b)(1−δ_p)) + √(δ_bδ_p)`.
pub fn fidelity_phase_bound(fidelity: f64, delta_b: f64) -> Result<f64> {
    check_fraction("fidelity", fidelity)?;
    if !(0.0..=0.5).contains(&delta_b) {
        return Err(domain(format!("delta_b = {delta_b} not in [0, 1/2]")));
    }
    let g = |dp: f64| ((1.0 - delta_b) * (1.0 - dp)).sqrt() + (delta_b * dp).sqrt() - fidelity.sqrt();
    if g(0.5) >= 0.0 {
        return Ok(0.5);
    }
    if g(delta_b) <= 0.0 {
        return Ok(delta_b);
    }
    bisect(g, delta_b, 0.5, 1e-13, BISECT_MAX_ITER)
}
