//! Finite-data analysis.
//!
//! Observed gains and error gains are binomial frequencies; each is replaced
//! by the end of its `u`-standard-error interval that is worst for the bound
//! being computed. Pulse budgets and the decoy intensity are then chosen to
//! maximise the resulting key rate.

use crate::core_model::{coherent_closed, transmittance, ChannelObservables, EvalMode, ExperimentParams, E0};
use crate::error::{domain, Error, Result};
use crate::estimators::{
    ayki_bounds_split, trig_single_gains, trig_weak_bounds, vacuum_weak_bounds, AykiEstimate, Method,
    SinglePhotonBounds,
};
use crate::keyrate::{gllp_rate, triggering_rate, KeyRateResult, RateStatus};
use crate::pdc_model::{triggering_observables, TriggerKind, TriggerOutcome};
use crate::solver::scan_then_golden;

/// Split of the emitted pulses between signal, vacuum decoy and weak decoy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseBudget {
    pub n_total: f64,
    pub n_signal: f64,
    pub n_vacuum: f64,
    pub n_weak: f64,
}

impl PulseBudget {
    pub fn new(n_signal: f64, n_vacuum: f64, n_weak: f64) -> Result<Self> {
        for (n, v) in [("n_signal", n_signal), ("n_vacuum", n_vacuum), ("n_weak", n_weak)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(domain(format!("{n} = {v} must be a nonnegative count")));
            }
        }
        Ok(PulseBudget { n_total: n_signal + n_vacuum + n_weak, n_signal, n_vacuum, n_weak })
    }

    /// Whole-pulse budget from signal and vacuum fractions; the weak decoy
    /// takes the remainder so the parts sum to `n_total` exactly.
    pub fn from_fractions(n_total: f64, signal: f64, vacuum: f64) -> Result<Self> {
        if !(n_total >= 1.0) || !(signal >= 0.0 && vacuum >= 0.0 && signal + vacuum <= 1.0) {
            return Err(domain(format!("invalid budget fractions {signal}, {vacuum} of {n_total}")));
        }
        let n_total = n_total.round();
        let n_signal = (signal * n_total).round();
        let n_vacuum = (vacuum * n_total).round().min(n_total - n_signal);
        Ok(PulseBudget { n_total, n_signal, n_vacuum, n_weak: n_total - n_signal - n_vacuum })
    }

    /// Fraction of pulses used as signals.
    pub fn signal_fraction(&self) -> f64 {
        self.n_signal / self.n_total
    }
}

/// Width of the confidence intervals in standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceSpec {
    pub u: f64,
}

impl Default for ConfidenceSpec {
    fn default() -> Self {
        ConfidenceSpec { u: 10.0 }
    }
}

impl ConfidenceSpec {
    pub fn new(u: f64) -> Result<Self> {
        if !(u >= 0.0 && u.is_finite()) {
            return Err(domain(format!("u = {u} must be >= 0")));
        }
        Ok(ConfidenceSpec { u })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
    /// Set when no events were seen and the upper end is a rule-of-thumb bound.
    pub degenerate: bool,
}

impl Interval {
    pub fn point(x: f64) -> Self {
        Interval { low: x, high: x, degenerate: false }
    }
}

/// `p ± u·√(p(1−p)/n)` clamped to `[0, 1]`. With no successes the interval
/// is `[0, u²/(n + u²)]` and flagged.
pub fn proportion_interval(p: f64, n: f64, conf: ConfidenceSpec) -> Result<Interval> {
    if !(n > 0.0) {
        return Err(domain(format!("sample size {n} must be positive")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("frequency {p} not in [0, 1]")));
    }
    let u = conf.u;
    if p * n == 0.0 {
        return Ok(Interval { low: 0.0, high: u * u / (n + u * u), degenerate: true });
    }
    let half = u * (p * (1.0 - p) / n).sqrt();
    Ok(Interval { low: (p - half).max(0.0), high: (p + half).min(1.0), degenerate: false })
}

/// Intervals on a gain and its error gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableInterval {
    pub gain: Interval,
    pub error_gain: Interval,
}

/// Intervals for observables that carry pulse counts.
pub fn observable_interval(obs: &ChannelObservables, conf: ConfidenceSpec) -> Result<ObservableInterval> {
    let c = obs.counts.ok_or_else(|| domain("observables carry no counts"))?;
    Ok(ObservableInterval {
        gain: proportion_interval(c.detections / c.pulses, c.pulses, conf)?,
        error_gain: proportion_interval(c.errors / c.pulses, c.pulses, conf)?,
    })
}

/// Fluctuated vacuum + weak decoy evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuatedVw {
    pub rate: KeyRateResult,
    pub bounds: SinglePhotonBounds,
    /// Interval on the background yield; `None` without vacuum pulses.
    pub y0: Option<Interval>,
}

/// Vacuum + weak decoy rate with finite pulse counts at `distance_km`.
///
/// `Y₁ᴸ` uses `Q_μ` high, `Q_ν` low and `Y₀` high; `e₁ᵁ` uses `E_νQ_ν` high
/// and `Y₀` low. Without vacuum pulses `Y₀` is taken as zero (one-decoy
/// bounds). The rate is scaled by the signal fraction.
pub fn fluctuated_vw_rate(
    params: &ExperimentParams,
    budget: &PulseBudget,
    mu: f64,
    nu: f64,
    distance_km: f64,
    conf: ConfidenceSpec,
) -> Result<FluctuatedVw> {
    let eta = transmittance(params, distance_km)?;
    vw_at_eta(params, budget, mu, nu, eta, conf)
}

fn vw_at_eta(
    params: &ExperimentParams,
    budget: &PulseBudget,
    mu: f64,
    nu: f64,
    eta: f64,
    conf: ConfidenceSpec,
) -> Result<FluctuatedVw> {
    if !(budget.n_signal > 0.0 && budget.n_weak > 0.0) {
        return Err(domain("budget needs signal and weak-decoy pulses"));
    }
    let obs_mu = coherent_closed(params, mu, eta).with_pulses(budget.n_signal);
    let obs_nu = coherent_closed(params, nu, eta).with_pulses(budget.n_weak);
    let im = observable_interval(&obs_mu, conf)?;
    let iv = observable_interval(&obs_nu, conf)?;
    let y0 = if budget.n_vacuum > 0.0 { Some(proportion_interval(params.y0(), budget.n_vacuum, conf)?) } else { None };
    let (y0_low, y0_high) = y0.map_or((0.0, 0.0), |i| (i.low, i.high));

    let corner_mu = ChannelObservables::new(im.gain.high, 0.0);
    let corner_nu = ChannelObservables::new(iv.gain.low, 0.0);
    let mut bounds = vacuum_weak_bounds(&corner_mu, &corner_nu, y0_high, mu, nu)?;
    if !bounds.insecure {
        let e1 = (iv.error_gain.high * nu.exp() - E0 * y0_low) / (bounds.y1_low * nu);
        bounds.e1_high = e1.clamp(0.0, 1.0);
    }
    if y0.is_none() {
        bounds.method = Method::OneDecoy;
    }
    let rate = gllp_rate(params, &obs_mu, &bounds).scaled(budget.signal_fraction());
    Ok(FluctuatedVw { rate, bounds, y0 })
}

/// Maximise `f` over a box by coordinate ascent (grid scan plus golden
/// section on each coordinate in turn), restarted from every point in
/// `starts`. A restart stops when a sweep improves the value by less than
/// `1e-12` relative. Ties keep the earlier restart.
pub fn coordinate_ascent<F: Fn(&[f64]) -> f64>(f: F, bounds: &[(f64, f64)], starts: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let mut best: (Vec<f64>, f64) = (starts[0].clone(), f64::NEG_INFINITY);
    for s in starts {
        let mut x = s.clone();
        let mut fx = f(&x);
        for _ in 0..200 {
            let before = fx;
            for i in 0..x.len() {
                let (lo, hi) = bounds[i];
                let (xi, fi) = scan_then_golden(
                    |t| {
                        let mut y = x.clone();
                        y[i] = t;
                        f(&y)
                    },
                    lo,
                    hi,
                    21,
                    false,
                    1e-9 * (hi - lo),
                );
                if fi > fx {
                    x[i] = xi;
                    fx = fi;
                }
            }
            if fx - before <= 1e-12 * fx.abs() {
                break;
            }
        }
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Optimised pulse allocation and decoy intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub budget: PulseBudget,
    pub nu: f64,
    pub result: FluctuatedVw,
}

impl Allocation {
    /// True when the optimum uses no vacuum pulses (one-decoy regime).
    pub fn one_decoy(&self) -> bool {
        self.budget.n_vacuum == 0.0
    }
}

/// Choose the signal fraction, the vacuum share of the decoys and `ν` to
/// maximise the fluctuated vacuum + weak rate at signal intensity `mu`.
pub fn optimize_allocation(
    params: &ExperimentParams,
    n_total: f64,
    distance_km: f64,
    mu: f64,
    conf: ConfidenceSpec,
) -> Result<Allocation> {
    if !(n_total >= 1e6) {
        return Err(domain(format!("n_total = {n_total} below 1e6")));
    }
    let eta = transmittance(params, distance_km)?;
    let to_budget = |x: &[f64]| PulseBudget::from_fractions(n_total, x[0], (1.0 - x[0]) * x[1]);
    let objective = |x: &[f64]| {
        to_budget(x)
            .and_then(|b| vw_at_eta(params, &b, mu, x[2], eta, conf))
            .map_or(0.0, |r| r.rate.unclamped())
    };
    let bounds = [(0.01, 0.99), (0.0, 1.0), (1e-3, mu * 0.999)];
    let starts: Vec<Vec<f64>> = [0.5, 0.8]
        .iter()
        .flat_map(|&s| [0.0, 0.5].map(move |v| (s, v)))
        .flat_map(|(s, v)| [0.05f64, 0.2].map(move |n| vec![s, v, n.min(mu * 0.9)]))
        .collect();
    let (x, _) = coordinate_ascent(objective, &bounds, &starts);
    let budget = to_budget(&x)?;
    let result = vw_at_eta(params, &budget, mu, x[2], eta, conf)?;
    Ok(Allocation { budget, nu: x[2], result })
}

/// Bias `ε` between phase and bit error rates allowed with failure
/// probability `exp(log_failure)` after `n_detections` events:
/// `ε = √(−4·log_failure·δ_b(1−δ_b)/n)`.
pub fn ent_epsilon(n_detections: f64, delta_b: f64, log_failure: f64) -> Result<f64> {
    if !(n_detections >= 1.0) {
        return Err(domain(format!("n = {n_detections} must be >= 1")));
    }
    if !(0.0..0.5).contains(&delta_b) {
        return Err(domain(format!("delta_b = {delta_b} not in [0, 1/2)")));
    }
    if !(log_failure <= 0.0) {
        return Err(domain(format!("log_failure = {log_failure} must be <= 0")));
    }
    Ok((-4.0 * log_failure * delta_b * (1.0 - delta_b) / n_detections).sqrt())
}

fn threshold_outcomes(params: &ExperimentParams, mu: f64, eta: f64) -> Result<Vec<TriggerOutcome>> {
    Ok(triggering_observables(params, TriggerKind::Threshold, mu, eta, EvalMode::Closed, 0)?.outcomes)
}

fn outcome_intervals(o: &TriggerOutcome, n: f64, conf: ConfidenceSpec) -> Result<ObservableInterval> {
    Ok(ObservableInterval {
        gain: proportion_interval(o.gain, n, conf)?,
        error_gain: proportion_interval(o.error_gain(), n, conf)?,
    })
}

/// Corner observables: the given gain with the given error gain.
fn corner(gain: f64, error_gain: f64) -> ChannelObservables {
    ChannelObservables::new(gain, if gain > 0.0 { error_gain / gain } else { 0.0 })
}

/// Weak-decoy triggering rate with `n_total` pulses, a fraction
/// `signal_fraction` at intensity `mu` and the rest at `nu`.
///
/// The yield bound uses triggered gains `Q_{μ,1}` high and `Q_{ν,1}` low;
/// the error bound uses both triggered error gains high. Error correction
/// is charged on the expected signal observables.
pub fn fluctuated_trig_weak_rate(
    params: &ExperimentParams,
    n_total: f64,
    signal_fraction: f64,
    mu: f64,
    nu: f64,
    eta: f64,
    conf: ConfidenceSpec,
) -> Result<KeyRateResult> {
    if !(signal_fraction > 0.0 && signal_fraction < 1.0) {
        return Err(domain(format!("signal fraction {signal_fraction} not in (0, 1)")));
    }
    let (ns, nn) = (n_total * signal_fraction, n_total * (1.0 - signal_fraction));
    let sig = threshold_outcomes(params, mu, eta)?;
    let dec = threshold_outcomes(params, nu, eta)?;
    let im = outcome_intervals(&sig[1], ns, conf)?;
    let iv = outcome_intervals(&dec[1], nn, conf)?;
    let b = trig_weak_bounds(
        &corner(im.gain.high, im.error_gain.high),
        &corner(iv.gain.low, iv.error_gain.high),
        mu,
        nu,
        params.eta_alice,
    )?;
    if b.insecure {
        return Ok(KeyRateResult::zero(RateStatus::Insecure));
    }
    let (q10, q11) = trig_single_gains(b.y1_low, mu, params.eta_alice);
    let e1 = b.e1_high.min(E0);
    Ok(triggering_rate(params, &sig, &[(q10, e1), (q11, e1)]).scaled(signal_fraction))
}

/// Passive (single-intensity) triggering estimate with `n_total` pulses.
/// The yield bound uses the non-triggered gain low and the triggered gain
/// high; both error gains are taken high.
pub fn fluctuated_ayki_rate(
    params: &ExperimentParams,
    n_total: f64,
    mu: f64,
    eta: f64,
    conf: ConfidenceSpec,
) -> Result<AykiEstimate> {
    let obs = threshold_outcomes(params, mu, eta)?;
    let i0 = outcome_intervals(&obs[0], n_total, conf)?;
    let i1 = outcome_intervals(&obs[1], n_total, conf)?;
    let mut c = obs.clone();
    c[0].gain = i0.gain.low;
    c[0].qber = if i0.gain.low > 0.0 { i0.error_gain.high / i0.gain.low } else { 0.0 };
    c[1].gain = i1.gain.high;
    c[1].qber = i1.error_gain.high / i1.gain.high;
    ayki_bounds_split(params, &c, &obs, mu)
}

/// Optimised weak-decoy triggering rate: `(μ, ν, signal fraction, rate)`.
pub fn optimize_trig_weak(
    params: &ExperimentParams,
    n_total: f64,
    eta: f64,
    conf: ConfidenceSpec,
) -> Result<(f64, f64, f64, f64)> {
    let objective = |x: &[f64]| {
        fluctuated_trig_weak_rate(params, n_total, x[2], x[0], x[0] * x[1], eta, conf).map_or(0.0, |r| r.rate)
    };
    let bounds = [(1e-3, 1.0), (0.01, 0.99), (0.05, 0.99)];
    let starts: Vec<Vec<f64>> = [0.2, 0.6]
        .iter()
        .flat_map(|&m| [0.1, 0.4].map(move |t| (m, t)))
        .flat_map(|(m, t)| [0.5, 0.9].map(move |s| vec![m, t, s]))
        .collect();
    let (x, r) = coordinate_ascent(objective, &bounds, &starts);
    if !(r > 0.0) {
        return Err(Error::Infeasible("no positive weak-decoy rate".into()));
    }
    Ok((x[0], x[0] * x[1], x[2], r))
}
