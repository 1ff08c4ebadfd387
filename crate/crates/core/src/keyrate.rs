//! One-way key-rate formulas, upper bounds and the time-shift analysis.
//!
//! Every rate is returned clamped at zero; the unclamped value is kept so
//! that optimisers can still follow the sign through zero.

use crate::core_model::{ChannelObservables, ExperimentParams};
use crate::error::{check_fraction, domain, Error, Result};
use crate::estimators::SinglePhotonBounds;
use crate::pdc_model::TriggerOutcome;

/// Binary entropy in bits; clamps the argument into `[0, 1]`.
pub fn h2(x: f64) -> f64 {
    if !(x > 0.0 && x < 1.0) {
        return 0.0;
    }
    -(x * x.log2() + (1.0 - x) * (-x).ln_1p() / std::f64::consts::LN_2)
}

/// Binary entropy with domain checking.
pub fn binary_entropy(x: f64) -> Result<f64> {
    check_fraction("x", x)?;
    Ok(h2(x))
}

/// Privacy-amplification cost of an error rate: `H₂(e)` capped at one bit
/// (an error rate above one half gives no credit).
pub fn pa_cost(e: f64) -> f64 {
    if e >= 0.5 {
        1.0
    } else {
        h2(e.max(0.0))
    }
}

/// Outcome of a rate evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateStatus {
    Positive,
    ClampedZero,
    /// The estimator could not certify any single-photon content.
    Insecure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateResult {
    pub rate: f64,
    /// Error-correction leakage (already multiplied by `q`).
    pub ec_cost: f64,
    /// Privacy-amplification credit per tag (already multiplied by `q`).
    pub pa_credit: Vec<f64>,
    pub status: RateStatus,
}

impl KeyRateResult {
    pub fn from_terms(ec_cost: f64, pa_credit: Vec<f64>) -> Self {
        let raw = pa_credit.iter().sum::<f64>() - ec_cost;
        let (rate, status) = if raw > 0.0 { (raw, RateStatus::Positive) } else { (0.0, RateStatus::ClampedZero) };
        KeyRateResult { rate, ec_cost, pa_credit, status }
    }

    pub fn zero(status: RateStatus) -> Self {
        KeyRateResult { rate: 0.0, ec_cost: 0.0, pa_credit: Vec::new(), status }
    }

    pub fn unclamped(&self) -> f64 {
        self.pa_credit.iter().sum::<f64>() - self.ec_cost
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.rate *= s;
        self.ec_cost *= s;
        self.pa_credit.iter_mut().for_each(|c| *c *= s);
        self
    }
}

/// One tagged group of events: its gain and phase error rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tag {
    pub gain: f64,
    pub phase_error: f64,
}

/// Tagged groups plus the overall observation they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedEnsemble {
    pub tags: Vec<Tag>,
    pub overall: ChannelObservables,
}

/// GLLP rate `q{−f(E)QH₂(E) + Σ_g Q_g[1 − H₂(e_g)]}`.
pub fn gllp_tagged(params: &ExperimentParams, ens: &TaggedEnsemble) -> KeyRateResult {
    let q = params.q_basis;
    let e = ens.overall.qber;
    let ec = q * params.f_ec.at(e) * ens.overall.gain * h2(e);
    let credit = ens.tags.iter().map(|t| q * t.gain * (1.0 - pa_cost(t.phase_error))).collect();
    KeyRateResult::from_terms(ec, credit)
}

/// Single-tag GLLP rate from single-photon bounds.
pub fn gllp_rate(params: &ExperimentParams, overall: &ChannelObservables, bounds: &SinglePhotonBounds) -> KeyRateResult {
    if bounds.insecure {
        return KeyRateResult::zero(RateStatus::Insecure);
    }
    gllp_tagged(
        params,
        &TaggedEnsemble { tags: vec![Tag { gain: bounds.q1_low, phase_error: bounds.e1_high }], overall: *overall },
    )
}

/// Entanglement-distillation rate `qQ[1 − fH₂(δ_b) − H₂(δ_p)]`.
pub fn shor_preskill_rate(q: f64, gain: f64, delta_b: f64, delta_p: f64, f: f64) -> KeyRateResult {
    KeyRateResult::from_terms(q * gain * f * h2(delta_b), vec![q * gain * (1.0 - pa_cost(delta_p))])
}

/// Collision-probability cost `log₂(1 + 4e − 4e²)`.
pub fn collision_cost(e: f64) -> f64 {
    let e = e.clamp(0.0, 0.5);
    (1.0 + 4.0 * e - 4.0 * e * e).log2()
}

/// Rate with collision-probability privacy amplification on the single-photon part.
pub fn lutkenhaus_rate(q: f64, overall: &ChannelObservables, q1: f64, e1: f64) -> KeyRateResult {
    KeyRateResult::from_terms(q * overall.gain * h2(overall.qber), vec![q * q1 * (1.0 - collision_cost(e1))])
}

/// Grid-scan comparison of the two privacy-amplification costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaDeviation {
    /// Error rate where the absolute gap `H₂(e) − log₂(1+4e−4e²)` peaks.
    pub error_rate: f64,
    /// Gap relative to `H₂(e)` at that point.
    pub relative: f64,
    pub absolute: f64,
}

/// Relative gap `|H₂(e) − C(e)| / C(e)` against the collision cost `C`.
pub fn pa_relative_deviation(e: f64) -> f64 {
    let c = collision_cost(e);
    (h2(e) - c).abs() / c
}

/// Scan `e ∈ (0, 1/2)` with the given step for the largest gap between the
/// two privacy-amplification costs.
pub fn pa_deviation_scan(step: f64) -> PaDeviation {
    let n = (0.5 / step).floor() as usize;
    let mut best = PaDeviation { error_rate: 0.0, relative: 0.0, absolute: 0.0 };
    for k in 1..n {
        let e = k as f64 * step;
        let gap = h2(e) - collision_cost(e);
        if gap > best.absolute {
            best = PaDeviation { error_rate: e, relative: gap / h2(e), absolute: gap };
        }
    }
    best
}

/// Entangled-source rate `qQ[1 − f(δ)H₂(δ) − H₂(δ + ε)]` with `δ = E`.
pub fn koashi_preskill_rate(params: &ExperimentParams, obs: &ChannelObservables, epsilon: f64) -> KeyRateResult {
    let d = obs.qber;
    if d + epsilon > 0.5 {
        return KeyRateResult::zero(RateStatus::ClampedZero);
    }
    shor_preskill_rate(params.q_basis, obs.gain, d, d + epsilon, params.f_ec.at(d))
}

/// Triggering-source rate `Σ_j max(0, R_j)` with per-outcome single-photon
/// credits `(Q_{1,j}, e_{1,j})`.
pub fn triggering_rate(params: &ExperimentParams, outcomes: &[TriggerOutcome], credits: &[(f64, f64)]) -> KeyRateResult {
    let q = params.q_basis;
    let mut ec = 0.0;
    let mut pa = Vec::new();
    for (o, &(q1, e1)) in outcomes.iter().zip(credits) {
        let cost = q * params.f_ec.at(o.qber) * o.gain * h2(o.qber);
        let credit = q * q1 * (1.0 - pa_cost(e1));
        if credit > cost {
            ec += cost;
            pa.push(credit);
        }
    }
    let mut r = KeyRateResult::from_terms(ec, pa);
    if r.pa_credit.is_empty() {
        r.status = RateStatus::ClampedZero;
    }
    r
}

/// Rate with a photon-number-resolving trigger: `qQ₁[1 − f(e₁)H₂(e₁) − H₂(e₁)]`.
pub fn pnr_rate(params: &ExperimentParams, q1: f64, e1: f64) -> KeyRateResult {
    shor_preskill_rate(params.q_basis, q1, e1, e1, params.f_ec.at(e1))
}

/// Mutual-information upper bound `Q₁[1 − H₂(e₁)]`.
pub fn rate_upper_bound(q1: f64, e1: f64) -> KeyRateResult {
    KeyRateResult::from_terms(0.0, vec![q1 * (1.0 - pa_cost(e1))])
}

/// Distance beyond which the single-photon error rate exceeds 25 %,
/// i.e. where `η(l) = 0.25·Y₀/(0.25 − e_d)`. Infinite when `Y₀ = 0` or the
/// fibre is lossless.
pub fn distance_upper_bound(params: &ExperimentParams) -> Result<f64> {
    if params.e_detector >= 0.25 {
        return Err(Error::Degenerate(format!("e_d = {} leaves no secure distance", params.e_detector)));
    }
    let threshold = 0.25 * params.y0() / (0.25 - params.e_detector);
    if threshold == 0.0 || params.beta == 0.0 {
        return Ok(f64::INFINITY);
    }
    if threshold >= params.eta_bob {
        return Ok(0.0);
    }
    Ok(-10.0 / params.beta * (threshold / params.eta_bob).log10())
}

/// Eve's information and the mismatch-protected rate under a time-shift attack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeShift {
    pub eve_info: f64,
    pub mismatch_rate: f64,
}

/// Detector efficiencies `eta0`, `eta1` in the shifted window.
pub fn timeshift_analysis(eta0: f64, eta1: f64) -> Result<TimeShift> {
    check_fraction("eta0", eta0)?;
    check_fraction("eta1", eta1)?;
    if eta0 + eta1 == 0.0 {
        return Err(domain("both detector efficiencies are zero"));
    }
    let p = eta1 / (eta0 + eta1);
    let rate = h2(1.0 - p);
    Ok(TimeShift { eve_info: 1.0 - rate, mismatch_rate: rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_model::preset;
    use proptest::prelude::*;

    #[test]
    fn entropy_examples() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        // Independent evaluation with natural logs.
        let oracle = |x: f64| -(x * x.ln() + (1.0 - x) * (1.0 - x).ln()) / 2f64.ln();
        // 30-digit reference values.
        assert!((binary_entropy(0.033).unwrap() - 0.209_220_477_869_152_6).abs() < 1e-15);
        assert!((binary_entropy(0.033).unwrap() - oracle(0.033)).abs() < 1e-14);
        assert!((binary_entropy(0.25).unwrap() - 0.811_278_124_459_132_9).abs() < 1e-15);
        assert!(binary_entropy(1.2).is_err());
    }

    #[test]
    fn shor_preskill_examples() {
        assert_eq!(shor_preskill_rate(0.5, 0.1, 0.0, 0.0, 1.0).rate, 0.05);
        assert!(shor_preskill_rate(1.0, 1.0, 0.11, 0.11, 1.0).unclamped().abs() < 1e-3);
        let r = shor_preskill_rate(1.0, 1.0, 0.05, 0.05, 1.0);
        assert!((r.rate - 0.427_206_085_768_087_7).abs() < 1e-14);
    }

    #[test]
    fn lutkenhaus_examples() {
        let o = ChannelObservables::new(0.1, 0.0);
        assert_eq!(lutkenhaus_rate(1.0, &o, 0.1, 0.0).rate, 0.1);
        assert_eq!(collision_cost(0.5), 1.0);
    }

    #[test]
    fn noiseless_gllp_is_half_gain() {
        let p = preset("gys").unwrap();
        let o = ChannelObservables::new(0.02, 0.0);
        let b = SinglePhotonBounds::exact(0.02, 0.0, 0.02);
        assert_eq!(gllp_rate(&p, &o, &b).rate, 0.01);
    }

    #[test]
    fn triggering_all_negative_is_zero() {
        let p = preset("pdc144").unwrap();
        let o = TriggerOutcome { gain: 0.01, qber: 0.3, q0: 0.0, q1: 0.001 };
        let r = triggering_rate(&p, &[o, o], &[(0.001, 0.3), (0.0, 0.5)]);
        assert_eq!(r.rate, 0.0);
        assert_eq!(r.status, RateStatus::ClampedZero);
    }

    #[test]
    fn upper_bound_examples() {
        assert_eq!(rate_upper_bound(0.3, 0.0).rate, 0.3);
        assert_eq!(rate_upper_bound(0.3, 0.5).rate, 0.0);
    }

    #[test]
    fn distance_bound_examples() {
        let p = preset("gys").unwrap();
        let l = distance_upper_bound(&p).unwrap();
        assert!((l - 208.0).abs() <= 1.0, "{l}");
        let mut p0 = p.clone();
        p0.y0_bob = 0.0;
        assert_eq!(distance_upper_bound(&p0).unwrap(), f64::INFINITY);
        let mut pe = p;
        pe.e_detector = 0.25;
        assert!(distance_upper_bound(&pe).is_err());
    }

    #[test]
    fn timeshift_examples() {
        let t = timeshift_analysis(0.3, 0.3).unwrap();
        assert_eq!((t.eve_info, t.mismatch_rate), (0.0, 1.0));
        let t = timeshift_analysis(0.3, 0.0).unwrap();
        assert_eq!((t.eve_info, t.mismatch_rate), (1.0, 0.0));
        let t = timeshift_analysis(0.3, 0.1).unwrap();
        assert!((t.eve_info - 0.188722).abs() < 5e-7);
        assert!(timeshift_analysis(0.0, 0.0).is_err());
    }

    #[test]
    fn koashi_preskill_examples() {
        let p = preset("pdc144").unwrap();
        let r = koashi_preskill_rate(&p, &ChannelObservables::new(0.2, 0.0), 0.0);
        assert_eq!(r.rate, 0.1);
        let mut p1 = p.clone();
        p1.f_ec = crate::core_model::EcEfficiency::Constant(1.0);
        let r = koashi_preskill_rate(&p1, &ChannelObservables::new(1.0, 0.11), 0.0);
        assert!(r.unclamped().abs() < 1e-3);
        let r = koashi_preskill_rate(&p, &ChannelObservables::new(0.2, 0.3), 0.25);
        assert_eq!(r.status, RateStatus::ClampedZero);
    }

    proptest! {
        #[test]
        fn timeshift_identity(eta0 in 0.0f64..1.0, eta1 in 1e-6f64..1.0) {
            let t = timeshift_analysis(eta0, eta1).unwrap();
            prop_assert!((t.eve_info + t.mismatch_rate - 1.0).abs() < 1e-15);
        }

        #[test]
        fn gllp_monotone_in_errors(q in 1e-4f64..0.1, frac in 0.1f64..1.0, e in 0.0f64..0.2, de in 0.0f64..0.05, e1 in 0.0f64..0.2) {
            let p = preset("gys").unwrap();
            let b = SinglePhotonBounds::exact(1.0, e1, q * frac);
            let lo = gllp_rate(&p, &ChannelObservables::new(q, e), &b).unclamped();
            let hi = gllp_rate(&p, &ChannelObservables::new(q, e + de), &b).unclamped();
            prop_assert!(hi <= lo + 1e-18);
            let b2 = SinglePhotonBounds::exact(1.0, e1 + de, q * frac);
            let hi2 = gllp_rate(&p, &ChannelObservables::new(q, e), &b2).unclamped();
            prop_assert!(hi2 <= lo + 1e-18);
        }

        #[test]
        fn gllp_below_upper_bound(q in 1e-4f64..0.1, frac in 0.1f64..1.0, e in 0.0f64..0.2, e1 in 0.0f64..0.5) {
            let p = preset("gys").unwrap();
            let b = SinglePhotonBounds::exact(1.0, e1, q * frac);
            let r = gllp_rate(&p, &ChannelObservables::new(q, e), &b).rate;
            prop_assert!(r <= rate_upper_bound(q * frac, e1).rate);
        }
    }
}
