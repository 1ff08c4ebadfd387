//! Photon-pair sources: triggering (heralded) and entangled down-conversion.
//!
//! Triggering: Alice keeps one arm and records her trigger detector's
//! outcome `j`; Bob's statistics are split by `j`. Only single-mode
//! thermal statistics are modelled.
//!
//! Entangled: the source sits between Alice and Bob and a coincidence is
//! counted when both sides click. Multi-pair errors follow the per-pair
//! counting of the `|n−m, m⟩|m, n−m⟩` decomposition.

use crate::core_model::{photon_prob, ChannelObservables, EvalMode, ExperimentParams, SourceKind, E0};
use crate::error::{check_fraction, domain, Error, Result};

/// Trigger detector type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerKind {
    /// Clicks (`j = 1`) or not (`j = 0`).
    Threshold,
    /// Reports the exact photon number.
    PerfectPnr,
}

/// Conditional outcome probabilities `η_{j|i}`, stored as `matrix[j][i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerResponse {
    pub kind: TriggerKind,
    pub eta_a: f64,
    pub matrix: Vec<Vec<f64>>,
}

impl TriggerResponse {
    pub fn eta(&self, j: usize, i: usize) -> f64 {
        self.matrix.get(j).and_then(|row| row.get(i)).copied().unwrap_or(0.0)
    }

    pub fn n_cut(&self) -> usize {
        self.matrix[0].len() - 1
    }

    pub fn outcomes(&self) -> usize {
        self.matrix.len()
    }
}

/// Trigger response with Alice-side dark counts neglected.
pub fn trigger_response(kind: TriggerKind, eta_a: f64, n_cut: usize) -> Result<TriggerResponse> {
    trigger_response_with_background(kind, eta_a, 0.0, n_cut)
}

/// Trigger response including Alice's background probability `y0_a`
/// (threshold kind only; a perfect PNR detector has no dark counts).
pub fn trigger_response_with_background(
    kind: TriggerKind,
    eta_a: f64,
    y0_a: f64,
    n_cut: usize,
) -> Result<TriggerResponse> {
    check_fraction("eta_a", eta_a)?;
    check_fraction("y0_a", y0_a)?;
    let matrix = match kind {
        TriggerKind::Threshold => {
            let no_click: Vec<f64> =
                (0..=n_cut).map(|i| (1.0 - y0_a) * (1.0 - eta_a).powi(i as i32)).collect();
            let click = no_click.iter().map(|p| 1.0 - p).collect();
            vec![no_click, click]
        }
        TriggerKind::PerfectPnr => (0..=n_cut)
            .map(|j| (0..=n_cut).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect(),
    };
    Ok(TriggerResponse { kind, eta_a, matrix })
}

/// Bob's statistics conditioned on one trigger outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerOutcome {
    pub gain: f64,
    pub qber: f64,
    /// Vacuum contribution `Q_{0,j}`.
    pub q0: f64,
    /// Single-photon contribution `Q_{1,j}`.
    pub q1: f64,
}

impl TriggerOutcome {
    pub fn observables(&self) -> ChannelObservables {
        ChannelObservables::new(self.gain, self.qber)
    }

    pub fn error_gain(&self) -> f64 {
        self.gain * self.qber
    }
}

/// Per-outcome statistics plus the model single-photon error rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggeredObservables {
    pub outcomes: Vec<TriggerOutcome>,
    pub e1: f64,
}

/// Bob's `i`-photon yield `1 − (1 − Y₀B)(1 − η)^i`.
fn bob_yield(y0b: f64, eta: f64, i: usize) -> f64 {
    1.0 - (1.0 - y0b) * (1.0 - eta).powi(i as i32)
}

/// Error-weighted yield `e_iY_i = e_dY_i + (e₀ − e_d)Y₀B`.
fn bob_error_yield(params: &ExperimentParams, yi: f64) -> f64 {
    params.e_detector * yi + (E0 - params.e_detector) * params.y0_bob
}

fn single_photon_error(params: &ExperimentParams, eta: f64) -> f64 {
    let y1 = bob_yield(params.y0_bob, eta, 1);
    bob_error_yield(params, y1) / y1
}

fn outcome(gain: f64, error_gain: f64, q0: f64, q1: f64) -> TriggerOutcome {
    TriggerOutcome { gain, qber: if gain > 0.0 { error_gain / gain } else { E0 }, q0, q1 }
}

/// Per-trigger gains and QBERs of a triggering source with pair intensity
/// `mu` and Bob-side transmittance `eta`.
///
/// Threshold closed form (`a = η_A`, `c = η_A + η − η_Aη`):
///
/// ```text
/// Q_{μ,0} = 1/(1+aμ) − (1−Y₀B)/(1+cμ)
/// Q_{μ,1} = 1 − 1/(1+aμ) − (1−Y₀B)/(1+ημ) + (1−Y₀B)/(1+cμ)
/// ```
///
/// The PNR closed form returns one outcome per photon number up to `n_cut`.
pub fn triggering_observables(
    params: &ExperimentParams,
    kind: TriggerKind,
    mu: f64,
    eta: f64,
    mode: EvalMode,
    n_cut: usize,
) -> Result<TriggeredObservables> {
    if !(mu >= 0.0) {
        return Err(domain(format!("mu = {mu} must be >= 0")));
    }
    check_fraction("eta", eta)?;
    let e1 = single_photon_error(params, eta);
    let y0b = params.y0_bob;
    let ed = params.e_detector;
    let outcomes = match (kind, mode) {
        (TriggerKind::Threshold, EvalMode::Closed) => {
            let a = params.eta_alice;
            let c = a + eta - a * eta;
            // Rearranged so that no two terms of order one cancel.
            let (da, dc, de) = (1.0 + a * mu, 1.0 + c * mu, 1.0 + eta * mu);
            let g0 = (eta * (1.0 - a) * mu + y0b * da) / (da * dc);
            let g1 = a * mu * (eta * (1.0 + 2.0 * mu + c * mu * mu) + y0b * (1.0 - eta) * da) / (da * de * dc);
            let eg0 = ed * g0 + (E0 - ed) * y0b / (1.0 + a * mu);
            let eg1 = ed * g1 + (E0 - ed) * a * mu * y0b / (1.0 + a * mu);
            let c = triggering_components(params, mu, eta)?;
            vec![outcome(g0, eg0, c.q0_0, c.q1_0), outcome(g1, eg1, c.q0_1, c.q1_1)]
        }
        (TriggerKind::PerfectPnr, EvalMode::Closed) => (0..=n_cut)
            .map(|i| {
                let p = photon_prob(SourceKind::PdcPair, mu, i);
                let yi = bob_yield(y0b, eta, i);
                let g = p * yi;
                let (q0, q1) = match i {
                    0 => (g, 0.0),
                    1 => (0.0, g),
                    _ => (0.0, 0.0),
                };
                outcome(g, p * bob_error_yield(params, yi), q0, q1)
            })
            .collect(),
        (_, EvalMode::Series) => {
            let resp = trigger_response(kind, params.eta_alice, n_cut)?;
            triggered_series(params, &resp, mu, eta)
        }
    };
    Ok(TriggeredObservables { outcomes, e1 })
}

/// Sum `P(i)·η_{j|i}·Y_i` over photon numbers for each trigger outcome.
pub fn triggered_series(
    params: &ExperimentParams,
    resp: &TriggerResponse,
    mu: f64,
    eta: f64,
) -> Vec<TriggerOutcome> {
    let n_cut = resp.n_cut();
    let p: Vec<f64> = (0..=n_cut).map(|i| photon_prob(SourceKind::PdcPair, mu, i)).collect();
    (0..resp.outcomes())
        .map(|j| {
            let (mut g, mut eg) = (0.0, 0.0);
            for (i, &pi) in p.iter().enumerate() {
                let w = pi * resp.eta(j, i);
                let yi = bob_yield(params.y0_bob, eta, i);
                g += w * yi;
                eg += w * bob_error_yield(params, yi);
            }
            let q0 = p[0] * resp.eta(j, 0) * params.y0_bob;
            let q1 = p[1] * resp.eta(j, 1) * bob_yield(params.y0_bob, eta, 1);
            outcome(g, eg, q0, q1)
        })
        .collect()
}

/// Model vacuum and single-photon contributions for a threshold trigger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerComponents {
    pub q1_0: f64,
    pub q1_1: f64,
    pub e1: f64,
    pub q0_0: f64,
    pub q0_1: f64,
}

impl TriggerComponents {
    pub fn y1(&self, mu: f64) -> f64 {
        (self.q1_0 + self.q1_1) * (1.0 + mu).powi(2) / mu
    }
}

pub fn triggering_components(params: &ExperimentParams, mu: f64, eta: f64) -> Result<TriggerComponents> {
    if !(mu >= 0.0) {
        return Err(domain(format!("mu = {mu} must be >= 0")));
    }
    let a = params.eta_alice;
    let y1 = bob_yield(params.y0_bob, eta, 1);
    let p1 = mu / (1.0 + mu).powi(2);
    Ok(TriggerComponents {
        q1_0: p1 * (1.0 - a) * y1,
        q1_1: p1 * a * y1,
        e1: single_photon_error(params, eta),
        q0_0: params.y0_bob / (1.0 + mu),
        q0_1: 0.0,
    })
}

/// `n`-pair coincidence yield and error rate of the entangled source.
///
/// `e_n = e₀ − 2(e₀ − e_d)/((n+1)Y_n)·[Σ_k (xy)^k − Σ_k x^k y^(n−k)]` with
/// `x = 1 − η_A`, `y = 1 − η_B`. Pairing the terms `k` and `n − k` turns the
/// bracket into `Σ_{k<n/2} (x^k − x^(n−k))(y^k − y^(n−k))`, a sum of
/// non-negative terms, so equal arm transmittances need no special case and
/// low transmittances lose no precision.
pub fn ent_yield_error(params: &ExperimentParams, eta_a: f64, eta_b: f64, n: usize) -> (f64, f64) {
    let (lx, ly) = ((-eta_a).ln_1p(), (-eta_b).ln_1p());
    // `1 − z^m` for `z = e^l`.
    let loss = |l: f64, m: usize| -(l * m as f64).exp_m1();
    let click = |y0: f64, l: f64| y0 + (1.0 - y0) * loss(l, n);
    let yn = click(params.y0_alice, lx) * click(params.y0_bob, ly);
    if yn <= 0.0 {
        return (yn.max(0.0), E0);
    }
    let bracket: f64 = (0..n.div_ceil(2))
        .map(|k| {
            let k_f = k as f64;
            (lx * k_f).exp() * loss(lx, n - 2 * k) * (ly * k_f).exp() * loss(ly, n - 2 * k)
        })
        .sum();
    let en = E0 - 2.0 * (E0 - params.e_detector) * bracket / ((n as f64 + 1.0) * yn);
    (yn, en)
}

/// Coincidence gain and QBER for pair intensity `lambda` (`μ = 2λ`) and arm
/// transmittances `eta_a`, `eta_b`.
pub fn ent_observables(
    params: &ExperimentParams,
    lambda: f64,
    eta_a: f64,
    eta_b: f64,
    mode: EvalMode,
    n_cut: usize,
) -> Result<ChannelObservables> {
    if !(lambda >= 0.0) {
        return Err(domain(format!("lambda = {lambda} must be >= 0")));
    }
    check_fraction("eta_a", eta_a)?;
    check_fraction("eta_b", eta_b)?;
    let (ya, yb) = (params.y0_alice, params.y0_bob);
    match mode {
        EvalMode::Closed => {
            let (a, b) = (eta_a * lambda, eta_b * lambda);
            let c = 1.0 + a + b - eta_a * eta_b * lambda;
            // `1 − (1−Y₀A)/A − (1−Y₀B)/B + (1−Y₀A)(1−Y₀B)/c²` with
            // `A = (1+a)²`, `B = (1+b)²`, expanded into non-negative terms.
            let (sa, sb) = ((1.0 + a).powi(2), (1.0 + b).powi(2));
            let ab = (1.0 + a) * (1.0 + b);
            let pair = eta_a * eta_b * lambda * (1.0 + lambda);
            let signal = a * (2.0 + a) * b * (2.0 + b) / (sa * sb) + pair * (ab + c) / (sa * sb * c * c);
            let gap_a = b * (1.0 - eta_a) * (c + 1.0 + a) / (sa * c * c);
            let gap_b = a * (1.0 - eta_b) * (c + 1.0 + b) / (sb * c * c);
            let q = signal + ya * gap_a + yb * gap_b + ya * yb / (c * c);
            let eq = E0 * q
                - 2.0 * (E0 - params.e_detector) * eta_a * eta_b * lambda * (1.0 + lambda)
                    / ((1.0 + a) * (1.0 + b) * c);
            Ok(ChannelObservables::new(q, if q > 0.0 { eq / q } else { E0 }))
        }
        EvalMode::Series => {
            let (mut q, mut eq) = (0.0, 0.0);
            for n in 0..=n_cut {
                let p = photon_prob(SourceKind::PdcEntangled, lambda, n);
                let (yn, en) = ent_yield_error(params, eta_a, eta_b, n);
                q += p * yn;
                eq += p * en * yn;
            }
            Ok(ChannelObservables::new(q, if q > 0.0 { eq / q } else { E0 }))
        }
    }
}

/// Arm transmittances for a source placed midway along a link of total
/// loss `loss_db`, each arm also carrying its own detector efficiency.
pub fn source_in_middle(params: &ExperimentParams, loss_db: f64) -> Result<(f64, f64)> {
    if !(loss_db >= 0.0) {
        return Err(domain(format!("loss {loss_db} dB is negative")));
    }
    let arm = 10f64.powf(-loss_db / 20.0);
    Ok((params.eta_alice * arm, params.eta_bob * arm))
}

/// Convenience: reject the closed mode for response kinds without one.
pub fn require_threshold(kind: TriggerKind) -> Result<()> {
    match kind {
        TriggerKind::Threshold => Ok(()),
        TriggerKind::PerfectPnr => Err(Error::Unsupported("operation needs a threshold trigger".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_model::preset;

    fn pdc() -> ExperimentParams {
        preset("pdc144").unwrap()
    }

    #[test]
    fn response_examples() {
        let r = trigger_response(TriggerKind::Threshold, 1.0, 5).unwrap();
        assert_eq!(r.eta(0, 3), 0.0);
        assert_eq!(r.eta(1, 3), 1.0);
        let r = trigger_response(TriggerKind::Threshold, 0.145, 5).unwrap();
        assert!((r.eta(0, 2) - 0.731025).abs() < 1e-15);
        let r = trigger_response(TriggerKind::PerfectPnr, 0.3, 5).unwrap();
        assert_eq!(r.eta(2, 2), 1.0);
        assert_eq!(r.eta(2, 3), 0.0);
        for i in 0..=5 {
            let s: f64 = (0..r.outcomes()).map(|j| r.eta(j, i)).sum();
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn empty_source() {
        let p = pdc();
        let t = triggering_observables(&p, TriggerKind::Threshold, 0.0, 0.1, EvalMode::Closed, 30).unwrap();
        assert_eq!(t.outcomes[1].q1, 0.0);
        assert!(t.outcomes[1].gain.abs() < 1e-18);
        assert!((t.outcomes[0].gain - p.y0_bob).abs() < 1e-15);
    }

    #[test]
    fn threshold_series_matches_closed() {
        let p = pdc();
        for &(mu, eta) in &[(0.2, 0.0145), (0.2, 0.145), (0.5, 1e-3)] {
            let c = triggering_observables(&p, TriggerKind::Threshold, mu, eta, EvalMode::Closed, 30).unwrap();
            let s = triggering_observables(&p, TriggerKind::Threshold, mu, eta, EvalMode::Series, 60).unwrap();
            for j in 0..2 {
                let (a, b) = (c.outcomes[j], s.outcomes[j]);
                assert!((a.gain - b.gain).abs() / a.gain < 1e-9, "{j}: {a:?} {b:?}");
                assert!((a.qber - b.qber).abs() / a.qber < 1e-9);
                assert!((a.q1 - b.q1).abs() <= 1e-12 * a.gain);
            }
        }
        let c = triggering_observables(&p, TriggerKind::Threshold, 0.2, 0.0145, EvalMode::Closed, 30).unwrap();
        let s = triggering_observables(&p, TriggerKind::Threshold, 0.2, 0.0145, EvalMode::Series, 30).unwrap();
        assert!((c.outcomes[1].gain - s.outcomes[1].gain).abs() / c.outcomes[1].gain < 1e-9);
    }

    #[test]
    fn components_examples() {
        let mut p = pdc();
        let c = triggering_components(&p, 0.1, 0.145).unwrap();
        let y1 = p.y0_bob + 0.145 - p.y0_bob * 0.145;
        assert!((c.q1_1 - 0.1 * 0.145 * y1 / 1.21).abs() < 1e-16);
        assert!((c.q1_0 + c.q1_1 - 0.1 * y1 / 1.21).abs() < 1e-16);
        assert!((c.e1 * y1 - (p.e_detector * y1 + (0.5 - p.e_detector) * p.y0_bob)).abs() < 1e-16);
        p.eta_alice = 1.0;
        assert_eq!(triggering_components(&p, 0.1, 0.145).unwrap().q1_0, 0.0);
    }

    #[test]
    fn ent_limits() {
        let p = pdc();
        let o = ent_observables(&p, 0.0, 0.1, 0.1, EvalMode::Closed, 30).unwrap();
        assert!((o.gain - p.y0_alice * p.y0_bob).abs() < 1e-15);
        let mut clean = pdc();
        clean.y0_alice = 0.0;
        clean.y0_bob = 0.0;
        let o = ent_observables(&clean, 1e-7, 0.1, 0.2, EvalMode::Closed, 30).unwrap();
        assert!((o.qber - clean.e_detector).abs() < 1e-6);
    }

    #[test]
    fn ent_series_matches_closed() {
        let p = pdc();
        let (ea, eb) = source_in_middle(&p, 20.0).unwrap();
        let c = ent_observables(&p, 0.0265, ea, eb, EvalMode::Closed, 30).unwrap();
        let s = ent_observables(&p, 0.0265, ea, eb, EvalMode::Series, 30).unwrap();
        assert!((c.gain - s.gain).abs() / c.gain < 1e-9);
        assert!((c.qber - s.qber).abs() / c.qber < 1e-9);
        let c = ent_observables(&p, 0.3, 0.05, 0.12, EvalMode::Closed, 30).unwrap();
        let s = ent_observables(&p, 0.3, 0.05, 0.12, EvalMode::Series, 120).unwrap();
        assert!((c.qber - s.qber).abs() / c.qber < 1e-9);
    }

    #[test]
    fn per_pair_error_starts_at_misalignment_and_rises() {
        let mut p = pdc();
        p.y0_alice = 0.0;
        p.y0_bob = 0.0;
        let (_, e1) = ent_yield_error(&p, 0.1, 0.2, 1);
        assert!((e1 - p.e_detector).abs() < 1e-15);
        let mut last = e1;
        for n in 2..=30 {
            let (_, en) = ent_yield_error(&p, 0.1, 0.2, n);
            assert!(en >= last - 1e-15 && en < 0.5);
            last = en;
        }
    }

    #[test]
    fn ent_symmetric_in_arms() {
        let mut p = pdc();
        p.y0_alice = 3e-6;
        let a = ent_observables(&p, 0.1, 0.03, 0.08, EvalMode::Closed, 30).unwrap();
        let mut q = p.clone();
        q.y0_alice = p.y0_bob;
        q.y0_bob = p.y0_alice;
        let b = ent_observables(&q, 0.1, 0.08, 0.03, EvalMode::Closed, 30).unwrap();
        assert!((a.gain - b.gain).abs() < 1e-16 && (a.qber - b.qber).abs() < 1e-15);
    }
}
