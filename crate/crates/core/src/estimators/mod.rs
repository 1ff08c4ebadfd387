//! Single-photon yield and error-rate bounds from observed gains and QBERs.
//!
//! Each estimator returns a [`SinglePhotonBounds`]: a lower bound on `Y₁`,
//! an upper bound on `e₁` and the single-photon gain credited to the signal.
//! A bound that underflows is clamped to zero and flagged insecure rather
//! than reported as an error.

mod lp;

pub use lp::{active_rows, lp_bounds, passive_rows, LpRow};

use crate::core_model::{ChannelObservables, ExperimentParams, E0};
use crate::error::{domain, Error, Result};
use crate::keyrate::triggering_rate;
use crate::pdc_model::TriggerOutcome;
use crate::solver::scan_then_golden;

/// Which estimator produced a bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Model truth (infinitely many decoys).
    Truth,
    NonDecoy,
    VacuumWeak,
    OneDecoy,
    Lp,
    TrigWeak,
    Ayki,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePhotonBounds {
    pub y1_low: f64,
    pub e1_high: f64,
    /// Single-photon gain of the signal state implied by `y1_low`.
    pub q1_low: f64,
    pub q0_low: Option<f64>,
    pub method: Method,
    pub insecure: bool,
}

impl SinglePhotonBounds {
    /// Bounds equal to known values.
    pub fn exact(y1: f64, e1: f64, q1: f64) -> Self {
        SinglePhotonBounds { y1_low: y1, e1_high: e1, q1_low: q1, q0_low: None, method: Method::Truth, insecure: false }
    }

    pub fn insecure(method: Method) -> Self {
        SinglePhotonBounds { y1_low: 0.0, e1_high: E0, q1_low: 0.0, q0_low: None, method, insecure: true }
    }

    fn checked(y1: f64, e1: f64, q1: f64, method: Method) -> Self {
        if !(y1 > 0.0) || !(q1 > 0.0) {
            return Self::insecure(method);
        }
        SinglePhotonBounds {
            y1_low: y1.min(1.0),
            e1_high: e1.clamp(0.0, 1.0),
            q1_low: q1,
            q0_low: None,
            method,
            insecure: false,
        }
    }
}

/// Intensity-tagged observations for the decoy estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoyObservations {
    pub entries: Vec<(f64, ChannelObservables)>,
    pub vacuum_gain: Option<f64>,
}

impl DecoyObservations {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(domain("no observations"));
        }
        for (k, (x, _)) in self.entries.iter().enumerate() {
            if !(*x >= 0.0) {
                return Err(domain(format!("intensity {x} is negative")));
            }
            if self.entries[..k].iter().any(|(y, _)| y == x) {
                return Err(domain(format!("intensity {x} repeated")));
            }
        }
        Ok(())
    }
}

fn poisson1(mu: f64) -> f64 {
    mu * (-mu).exp()
}

/// Model truth for a coherent source: the infinite-decoy reference.
pub fn truth_bounds(params: &ExperimentParams, mu: f64, eta: f64) -> SinglePhotonBounds {
    let (y1, e1) = crate::core_model::single_photon_truth(params, eta);
    SinglePhotonBounds { q0_low: Some(params.y0() * (-mu).exp()), ..SinglePhotonBounds::exact(y1, e1, y1 * poisson1(mu)) }
}

/// Worst case where every multi-photon pulse is detected without error.
pub fn nondecoy_bounds(obs: &ChannelObservables, mu: f64) -> Result<SinglePhotonBounds> {
    if !(mu > 0.0) {
        return Err(domain(format!("mu = {mu} must be > 0")));
    }
    let multi = -(-mu).exp_m1() - poisson1(mu);
    let q1 = obs.gain - multi;
    let mut b = SinglePhotonBounds::checked(q1 / poisson1(mu), obs.error_gain() / q1, q1, Method::NonDecoy);
    b.q0_low = Some(0.0);
    Ok(b)
}

/// Vacuum + weak decoy bounds with measured background `y0`.
pub fn vacuum_weak_bounds(
    obs_mu: &ChannelObservables,
    obs_nu: &ChannelObservables,
    y0: f64,
    mu: f64,
    nu: f64,
) -> Result<SinglePhotonBounds> {
    if !(nu > 0.0 && nu < mu) {
        return Err(domain(format!("need 0 < nu < mu, got nu = {nu}, mu = {mu}")));
    }
    let y1 = mu / (mu * nu - nu * nu)
        * (obs_nu.gain * nu.exp() - obs_mu.gain * mu.exp() * nu * nu / (mu * mu) - (mu * mu - nu * nu) / (mu * mu) * y0);
    let e1 = (obs_nu.error_gain() * nu.exp() - E0 * y0) / (y1 * nu);
    let mut b = SinglePhotonBounds::checked(y1, e1, y1 * poisson1(mu), Method::VacuumWeak);
    b.q0_low = Some(y0 * (-mu).exp());
    Ok(b)
}

/// One weak decoy and no vacuum: the vacuum+weak formulas with `Y₀ = 0`.
pub fn one_decoy_bounds(
    obs_mu: &ChannelObservables,
    obs_nu: &ChannelObservables,
    mu: f64,
    nu: f64,
) -> Result<SinglePhotonBounds> {
    let mut b = vacuum_weak_bounds(obs_mu, obs_nu, 0.0, mu, nu)?;
    b.method = Method::OneDecoy;
    b.q0_low = Some(0.0);
    Ok(b)
}

/// Single-photon gains split by trigger outcome: `(Q_{1,0}, Q_{1,1})`.
pub fn trig_single_gains(y1: f64, mu: f64, eta_a: f64) -> (f64, f64) {
    let p1 = mu / (1.0 + mu).powi(2);
    (p1 * (1.0 - eta_a) * y1, p1 * eta_a * y1)
}

/// Weak-decoy bounds for a triggering source from triggered (`j = 1`)
/// observations at signal intensity `mu` and decoy intensity `nu`.
pub fn trig_weak_bounds(
    obs_mu_j1: &ChannelObservables,
    obs_nu_j1: &ChannelObservables,
    mu: f64,
    nu: f64,
    eta_a: f64,
) -> Result<SinglePhotonBounds> {
    if !(nu > 0.0 && nu < mu) {
        return Err(domain(format!("need 0 < nu < mu, got nu = {nu}, mu = {mu}")));
    }
    if !(eta_a > 0.0 && eta_a <= 1.0) {
        return Err(domain(format!("eta_a = {eta_a} must be in (0, 1]")));
    }
    let y1 = (mu / nu * (1.0 + nu).powi(3) * obs_nu_j1.gain - nu / mu * (1.0 + mu).powi(3) * obs_mu_j1.gain)
        / (eta_a * (mu - nu));
    let e1 = ((1.0 + mu).powi(2) / mu * obs_mu_j1.error_gain() / (eta_a * y1))
        .min((1.0 + nu).powi(2) / nu * obs_nu_j1.error_gain() / (eta_a * y1));
    let (q10, q11) = trig_single_gains(y1, mu, eta_a);
    Ok(SinglePhotonBounds::checked(y1, e1, q10 + q11, Method::TrigWeak))
}

/// Non-decoy bounds for each trigger outcome: every multi-photon pulse in
/// group `j` is assumed detected without error. Returns `(Q_{1,j}, e_{1,j})`.
pub fn trig_nondecoy_credits(outcomes: &[TriggerOutcome], mu: f64, eta_a: f64) -> Result<[(f64, f64); 2]> {
    if outcomes.len() != 2 {
        return Err(Error::Unsupported("non-decoy triggering bound needs a threshold trigger".into()));
    }
    let d = (1.0 + eta_a * mu) * (1.0 + mu).powi(2);
    let multi = [(1.0 - eta_a).powi(2) * mu * mu / d, eta_a * (2.0 - eta_a + mu) * mu * mu / d];
    let credit = |j: usize| {
        let q1 = outcomes[j].gain - multi[j];
        if q1 > 0.0 {
            (q1, (outcomes[j].error_gain() / q1).min(1.0))
        } else {
            (0.0, E0)
        }
    };
    Ok([credit(0), credit(1)])
}

/// Result of the AYKI estimate: bounds plus the worst-case vacuum gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AykiEstimate {
    pub bounds: SinglePhotonBounds,
    pub q00: f64,
    pub rate: f64,
}

/// Passive decoy with a threshold trigger at one intensity.
///
/// `Y₁ᴸ(Q₀₀) = (1+μ)²/μ·[(2−η_A)/(1−η_A)(Q_{μ,0} − Q₀₀) − (1−η_A)/η_A·Q_{μ,1}]`
/// and `e₁ ≤ E_{μ,1}Q_{μ,1}/Q_{1,1}`; the unknown vacuum gain `Q₀₀` ranges
/// over `[0, E_{μ,0}Q_{μ,0}/e₀]` and is chosen to minimise the key rate.
/// The formula degenerates at `η_A ∈ {0, 1}`.
pub fn ayki_bounds(params: &ExperimentParams, obs: &[TriggerOutcome], mu: f64) -> Result<AykiEstimate> {
    ayki_bounds_split(params, obs, obs, mu)
}

/// Passive estimate that bounds from `bound_obs` (for instance confidence
/// interval corners) and charges error correction on `rate_obs`.
pub fn ayki_bounds_split(
    params: &ExperimentParams,
    bound_obs: &[TriggerOutcome],
    rate_obs: &[TriggerOutcome],
    mu: f64,
) -> Result<AykiEstimate> {
    let a = params.eta_alice;
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Degenerate(format!("eta_a = {a}: passive estimate needs 0 < eta_a < 1")));
    }
    if bound_obs.len() != 2 || rate_obs.len() != 2 {
        return Err(Error::Unsupported("passive estimate needs a threshold trigger".into()));
    }
    if !(mu > 0.0) {
        return Err(domain(format!("mu = {mu} must be > 0")));
    }
    let (o0, o1) = (bound_obs[0], bound_obs[1]);
    let evaluate = |q00: f64| -> (SinglePhotonBounds, f64) {
        let y1 = ayki_y1_low(o0.gain, o1.gain, q00, mu, a);
        let (q10, q11) = trig_single_gains(y1, mu, a);
        let b = SinglePhotonBounds::checked(y1, o1.error_gain() / q11, q10 + q11, Method::Ayki);
        if b.insecure {
            return (b, 0.0);
        }
        let e1 = b.e1_high.min(E0);
        let r = triggering_rate(params, rate_obs, &[(q10, e1), (q11, e1)]).rate;
        (b, r)
    };
    let hi = o0.error_gain() / E0;
    let (q00, neg) = scan_then_golden(|x| -evaluate(x).1, 0.0, hi.max(0.0), 41, false, hi * 1e-9 + 1e-300);
    let (mut bounds, _) = evaluate(q00);
    bounds.q0_low = Some(q00);
    Ok(AykiEstimate { bounds, q00, rate: -neg })
}

/// Passive-decoy yield bound for a given vacuum gain `q00` of the
/// non-triggered group.
pub fn ayki_y1_low(gain_j0: f64, gain_j1: f64, q00: f64, mu: f64, eta_a: f64) -> f64 {
    (1.0 + mu).powi(2) / mu * ((2.0 - eta_a) / (1.0 - eta_a) * (gain_j0 - q00) - (1.0 - eta_a) / eta_a * gain_j1)
}

/// Relative deviations `β_Y₁ = (Y₁ − Y₁ᴸ)/Y₁` and `β_e₁ = (e₁ᵁ − e₁)/e₁`.
pub fn deviation_metrics(bounds: &SinglePhotonBounds, y1_true: f64, e1_true: f64) -> Result<(f64, f64)> {
    if y1_true == 0.0 || e1_true == 0.0 {
        return Err(Error::Degenerate("deviation undefined for zero truth".into()));
    }
    Ok(((y1_true - bounds.y1_low) / y1_true, (bounds.e1_high - e1_true) / e1_true))
}
