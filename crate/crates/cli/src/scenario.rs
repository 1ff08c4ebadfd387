//! Scenario description and point evaluation.
//!
//! A scenario fixes the setup (parameters, source, estimator,
//! post-processing, fluctuation settings) and the axis being swept. A point
//! evaluation returns the observables, the single-photon bounds and the key
//! rate at one axis value, optimising the intensity when the policy asks.

use qkd_core::core_model::{coherent_closed, transmittance, transmittance_db, EvalMode, ExperimentParams};
use qkd_core::estimators::{
    active_rows, ayki_bounds, lp_bounds, nondecoy_bounds, one_decoy_bounds, passive_rows, trig_nondecoy_credits,
    trig_single_gains, trig_weak_bounds, truth_bounds, vacuum_weak_bounds, SinglePhotonBounds,
};
use qkd_core::fluctuation::{
    ent_epsilon, fluctuated_ayki_rate, fluctuated_trig_weak_rate, optimize_allocation, optimize_trig_weak,
    ConfidenceSpec,
};
use qkd_core::keyrate::{gllp_rate, koashi_preskill_rate, pnr_rate, triggering_rate, KeyRateResult, RateStatus};
use qkd_core::optimize::{maximize_scalar, Axis};
use qkd_core::pdc_model::{
    ent_observables, source_in_middle, trigger_response, triggering_components, triggering_observables, TriggerKind,
};
use qkd_core::core_model::SourceKind;
use qkd_core::twoway::{decoy_b_pipeline, recurrence_residue, TaggedInput};
use qkd_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Rate,
    Sweep,
    Reach,
    Compare,
    Optimize,
    Region,
    PaDeviation,
    UpperBound,
    Attack,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Coherent,
    Triggering(TriggerKind),
    /// Entangled pairs from a source midway between the two detectors.
    Entangled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Truth,
    NonDecoy,
    VacuumWeak,
    OneDecoy,
    Lp,
    TrigWeak,
    Ayki,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostProcess {
    OneWay,
    BSteps(usize),
    Recurrence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuPolicy {
    Fixed(f64),
    /// Numerical maximisation of the rate over `[lo, hi]`.
    Optimized { lo: f64, hi: f64 },
    /// Intensity equal to the overall transmittance.
    Transmittance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fluctuation {
    pub n_total: f64,
    pub u: f64,
    /// Signal share of the pulses for the weak-decoy triggering estimate;
    /// optimised when absent.
    pub signal_fraction: Option<f64>,
    /// Natural log of the failure probability of the phase-error bias.
    pub log_failure: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub axis: Axis,
    pub points: Vec<f64>,
    pub cutoff: f64,
}

/// Overrides that turn a scenario into its baseline for comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Baseline {
    pub post: Option<PostProcess>,
    pub estimator: Option<Estimator>,
    pub fluctuation_off: bool,
    pub reach: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizeTarget {
    Mu,
    Allocation,
    Conditions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub task: Task,
    pub params: ExperimentParams,
    pub source: Source,
    pub estimator: Estimator,
    pub nu: f64,
    pub n_cut: usize,
    pub post: PostProcess,
    pub mu: MuPolicy,
    pub fluctuation: Option<Fluctuation>,
    pub sweep: Sweep,
    pub baseline: Baseline,
    pub optimize: OptimizeTarget,
    pub region_max_steps: usize,
    pub region_grid_step: f64,
    pub pa_step: f64,
    pub attack_step: f64,
    pub verify_pulses: u64,
    pub verify_cases: usize,
    pub seed: u64,
}

impl Scenario {
    /// Default scenario for a preset: infinite decoy, one-way, 0–150 km.
    pub fn for_preset(name: &str) -> Result<Self> {
        let params = qkd_core::core_model::preset(name)?;
        Ok(Scenario {
            name: name.to_string(),
            task: Task::Sweep,
            params,
            source: Source::Coherent,
            estimator: Estimator::Truth,
            nu: 0.1,
            n_cut: qkd_core::core_model::DEFAULT_N_CUT,
            post: PostProcess::OneWay,
            mu: MuPolicy::Optimized { lo: 1e-4, hi: 1.0 },
            fluctuation: None,
            sweep: Sweep { axis: Axis::Km, points: (0..=15).map(|k| 10.0 * k as f64).collect(), cutoff: 0.0 },
            baseline: Baseline::default(),
            optimize: OptimizeTarget::Mu,
            region_max_steps: 12,
            region_grid_step: 0.0,
            pa_step: 1e-4,
            attack_step: 0.1,
            verify_pulses: 1_000_000,
            verify_cases: 1000,
            seed: 1,
        })
    }

    /// Check that the source, estimator, post-processing and axis combine.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let unsupported = |m: &str| Err(Error::Unsupported(format!("{}: {m}", self.name)));
        match (self.source, self.estimator) {
            (Source::Coherent, Estimator::TrigWeak | Estimator::Ayki) => {
                return unsupported("triggering estimator with a coherent source")
            }
            (Source::Triggering(_), Estimator::VacuumWeak | Estimator::OneDecoy) => {
                return unsupported("coherent estimator with a triggering source")
            }
            (Source::Triggering(TriggerKind::PerfectPnr), e) if e != Estimator::Truth => {
                return unsupported("a photon-number-resolving trigger is evaluated with model truth only")
            }
            (Source::Entangled, e) if e != Estimator::Truth => {
                return unsupported("the entangled source has no decoy estimator")
            }
            _ => {}
        }
        if matches!(self.source, Source::Triggering(_)) && self.post != PostProcess::OneWay {
            return unsupported("two-way post-processing is defined for coherent and entangled sources");
        }
        if self.source == Source::Entangled && self.sweep.axis != Axis::Db {
            return unsupported("the entangled source is swept in dB");
        }
        if self.fluctuation.is_some() {
            let ok = matches!(
                (self.source, self.estimator, self.post),
                (Source::Coherent, Estimator::VacuumWeak, PostProcess::OneWay)
                    | (Source::Triggering(TriggerKind::Threshold), Estimator::TrigWeak | Estimator::Ayki, _)
                    | (Source::Entangled, _, PostProcess::OneWay | PostProcess::BSteps(_))
            );
            if !ok {
                return unsupported("no finite-size analysis for this combination");
            }
            let fixed_share = self.fluctuation.is_some_and(|f| f.signal_fraction.is_some());
            if self.estimator == Estimator::TrigWeak && !fixed_share && !matches!(self.mu, MuPolicy::Optimized { .. }) {
                return unsupported("a fixed-intensity weak decoy with finite data needs `signal_fraction`");
            }
            if self.source == Source::Coherent && !matches!(self.mu, MuPolicy::Fixed(_)) {
                return unsupported("the finite-size allocation search takes a fixed signal intensity");
            }
        }
        if let MuPolicy::Fixed(mu) = self.mu {
            if !(mu > 0.0 && mu <= 1.0) {
                return Err(Error::Domain(format!("{}: mu = {mu} not in (0, 1]", self.name)));
            }
        }
        if matches!(self.estimator, Estimator::VacuumWeak | Estimator::OneDecoy | Estimator::Lp | Estimator::TrigWeak)
            && !(self.nu > 0.0)
        {
            return Err(Error::Domain(format!("{}: nu = {} must be > 0", self.name, self.nu)));
        }
        Ok(())
    }

    /// The comparison baseline of this scenario.
    pub fn baseline(&self) -> Scenario {
        let mut b = self.clone();
        if let Some(p) = self.baseline.post {
            b.post = p;
        }
        if let Some(e) = self.baseline.estimator {
            b.estimator = e;
        }
        if self.baseline.fluctuation_off {
            b.fluctuation = None;
        }
        b
    }

    fn transmittance_at(&self, x: f64) -> Result<f64> {
        match self.sweep.axis {
            Axis::Km => transmittance(&self.params, x),
            Axis::Db => transmittance_db(&self.params, x),
        }
    }
}

/// Evaluation at one axis value.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: f64,
    pub mu: f64,
    pub gain: f64,
    pub qber: f64,
    pub y1: Option<f64>,
    pub e1: Option<f64>,
    pub rate: f64,
    pub status: RateStatus,
}

impl Point {
    fn new(x: f64, mu: f64, gain: f64, qber: f64, bounds: Option<&SinglePhotonBounds>, r: &KeyRateResult) -> Self {
        Point {
            x,
            mu,
            gain,
            qber,
            y1: bounds.map(|b| b.y1_low),
            e1: bounds.map(|b| b.e1_high),
            rate: r.rate,
            status: r.status,
        }
    }
}

fn two_way_rate(q: f64, gain: f64, residue: f64) -> KeyRateResult {
    if residue > 0.0 {
        KeyRateResult::from_terms(0.0, vec![q * gain * residue])
    } else {
        KeyRateResult::zero(RateStatus::ClampedZero)
    }
}

/// Evaluate the scenario at axis value `x`, choosing `μ` by its policy.
pub fn evaluate(s: &Scenario, x: f64) -> Result<Point> {
    match s.mu {
        MuPolicy::Fixed(mu) => evaluate_at(s, x, mu),
        MuPolicy::Transmittance => evaluate_at(s, x, s.transmittance_at(x)?),
        MuPolicy::Optimized { lo, hi } => {
            if joint_optimisation(s) {
                return evaluate_at(s, x, f64::NAN);
            }
            let (mu, _) = maximize_scalar(|m| evaluate_at(s, x, m).map_or(0.0, |p| p.rate), lo, hi);
            evaluate_at(s, x, mu)
        }
    }
}

/// The weak-decoy triggering estimate with finite data optimises `μ`, `ν`
/// and the signal share together.
fn joint_optimisation(s: &Scenario) -> bool {
    matches!(s.mu, MuPolicy::Optimized { .. })
        && s.fluctuation.is_some_and(|f| f.signal_fraction.is_none())
        && s.estimator == Estimator::TrigWeak
}

/// Evaluate at a fixed intensity (`μ = 2λ` for the entangled source).
pub fn evaluate_at(s: &Scenario, x: f64, mu: f64) -> Result<Point> {
    match s.source {
        Source::Coherent => coherent_point(s, x, mu),
        Source::Triggering(kind) => triggering_point(s, x, mu, kind),
        Source::Entangled => entangled_point(s, x, mu),
    }
}

fn coherent_point(s: &Scenario, x: f64, mu: f64) -> Result<Point> {
    let p = &s.params;
    let eta = s.transmittance_at(x)?;
    let obs = coherent_closed(p, mu, eta);
    let nu_obs = || coherent_closed(p, s.nu, eta);
    if let Some(f) = s.fluctuation {
        let km = match s.sweep.axis {
            Axis::Km => x,
            Axis::Db => x / (10.0 * p.beta),
        };
        let a = optimize_allocation(p, f.n_total, km, mu, ConfidenceSpec::new(f.u)?)?;
        return Ok(Point::new(x, mu, obs.gain, obs.qber, Some(&a.result.bounds), &a.result.rate));
    }
    let bounds = match s.estimator {
        Estimator::Truth => truth_bounds(p, mu, eta),
        Estimator::NonDecoy => nondecoy_bounds(&obs, mu)?,
        Estimator::VacuumWeak => vacuum_weak_bounds(&obs, &nu_obs(), p.y0(), mu, s.nu)?,
        Estimator::OneDecoy => one_decoy_bounds(&obs, &nu_obs(), mu, s.nu)?,
        Estimator::Lp => {
            let rows = active_rows(SourceKind::Coherent, &[(mu, obs), (s.nu, nu_obs())], s.n_cut);
            lp_bounds(&rows, Some(p.y0()), mu * (-mu).exp())?
        }
        Estimator::TrigWeak | Estimator::Ayki => unreachable!("rejected by validate"),
    };
    let r = match s.post {
        _ if bounds.insecure => KeyRateResult::zero(RateStatus::Insecure),
        PostProcess::OneWay => gllp_rate(p, &obs, &bounds),
        PostProcess::BSteps(n) => {
            let residue =
                decoy_b_pipeline(bounds.q1_low / obs.gain, obs.qber, bounds.e1_high, bounds.e1_high, n, p.f_ec.at(obs.qber));
            two_way_rate(p.q_basis, obs.gain, residue)
        }
        PostProcess::Recurrence => {
            let input =
                TaggedInput::from_parts(obs.gain, obs.qber, bounds.q0_low.unwrap_or(0.0), bounds.q1_low, bounds.e1_high)?;
            let residue = recurrence_residue(&input, obs.qber, p.f_ec.at(obs.qber))?;
            two_way_rate(p.q_basis, obs.gain, residue)
        }
    };
    Ok(Point::new(x, mu, obs.gain, obs.qber, Some(&bounds), &r))
}

fn triggering_point(s: &Scenario, x: f64, mu: f64, kind: TriggerKind) -> Result<Point> {
    let p = &s.params;
    let eta = s.transmittance_at(x)?;
    let conf = |f: &Fluctuation| ConfidenceSpec::new(f.u);
    if kind == TriggerKind::PerfectPnr {
        let c = triggering_components(p, mu, eta)?;
        let y1 = c.y1(mu);
        let q1 = mu / (1.0 + mu).powi(2) * y1;
        let r = pnr_rate(p, q1, c.e1);
        let t = triggering_observables(p, TriggerKind::Threshold, mu, eta, EvalMode::Closed, 0)?;
        let (gain, qber) = totals(&t.outcomes);
        let b = SinglePhotonBounds::exact(y1, c.e1, q1);
        return Ok(Point::new(x, mu, gain, qber, Some(&b), &r));
    }

    // Jointly optimised finite-data weak decoy.
    if joint_optimisation(s) {
        let f = s.fluctuation.unwrap();
        return match optimize_trig_weak(p, f.n_total, eta, conf(&f)?) {
            Ok((mu, nu, fs, rate)) => {
                let mut pt = triggering_point(
                    &Scenario {
                        mu: MuPolicy::Fixed(mu),
                        nu,
                        fluctuation: Some(Fluctuation { signal_fraction: Some(fs), ..f }),
                        ..s.clone()
                    },
                    x,
                    mu,
                    kind,
                )?;
                pt.rate = pt.rate.max(rate);
                Ok(pt)
            }
            Err(Error::Infeasible(_)) => {
                let t = triggering_observables(p, TriggerKind::Threshold, 0.5, eta, EvalMode::Closed, 0)?;
                let (gain, qber) = totals(&t.outcomes);
                Ok(Point::new(x, f64::NAN, gain, qber, None, &KeyRateResult::zero(RateStatus::ClampedZero)))
            }
            Err(e) => Err(e),
        };
    }

    let t = triggering_observables(p, TriggerKind::Threshold, mu, eta, EvalMode::Closed, 0)?;
    let outcomes = &t.outcomes;
    let (gain, qber) = totals(outcomes);
    let eta_a = p.eta_alice;
    let split = |b: &SinglePhotonBounds| {
        let (q10, q11) = trig_single_gains(b.y1_low, mu, eta_a);
        let e1 = b.e1_high.min(0.5);
        [(q10, e1), (q11, e1)]
    };
    match (s.estimator, s.fluctuation) {
        (Estimator::TrigWeak, Some(f)) => {
            let fs = f.signal_fraction.expect("fixed signal share");
            let r = fluctuated_trig_weak_rate(p, f.n_total, fs, mu, s.nu, eta, conf(&f)?)?;
            Ok(Point::new(x, mu, gain, qber, None, &r))
        }
        (Estimator::Ayki, Some(f)) => {
            let a = fluctuated_ayki_rate(p, f.n_total, mu, eta, conf(&f)?)?;
            let r = triggering_rate(p, outcomes, &split(&a.bounds));
            Ok(Point::new(x, mu, gain, qber, Some(&a.bounds), &r))
        }
        (Estimator::Ayki, None) => {
            let a = ayki_bounds(p, outcomes, mu)?;
            let r = if a.bounds.insecure {
                KeyRateResult::zero(RateStatus::Insecure)
            } else {
                triggering_rate(p, outcomes, &split(&a.bounds))
            };
            Ok(Point::new(x, mu, gain, qber, Some(&a.bounds), &r))
        }
        (Estimator::Truth, _) => {
            let c = triggering_components(p, mu, eta)?;
            let b = SinglePhotonBounds::exact(c.y1(mu), c.e1, c.q1_0 + c.q1_1);
            let r = triggering_rate(p, outcomes, &[(c.q1_0, c.e1), (c.q1_1, c.e1)]);
            Ok(Point::new(x, mu, gain, qber, Some(&b), &r))
        }
        (Estimator::NonDecoy, _) => {
            let credits = trig_nondecoy_credits(outcomes, mu, eta_a)?;
            let r = triggering_rate(p, outcomes, &credits);
            Ok(Point::new(x, mu, gain, qber, None, &r))
        }
        (Estimator::TrigWeak, None) => {
            let nu_t = triggering_observables(p, TriggerKind::Threshold, s.nu, eta, EvalMode::Closed, 0)?;
            let b = trig_weak_bounds(&outcomes[1].observables(), &nu_t.outcomes[1].observables(), mu, s.nu, eta_a)?;
            let r = if b.insecure { KeyRateResult::zero(RateStatus::Insecure) } else { triggering_rate(p, outcomes, &split(&b)) };
            Ok(Point::new(x, mu, gain, qber, Some(&b), &r))
        }
        (Estimator::Lp, _) => {
            let resp = trigger_response(TriggerKind::Threshold, eta_a, s.n_cut)?;
            let rows = passive_rows(&resp, mu, outcomes);
            let b = lp_bounds(&rows, None, mu / (1.0 + mu).powi(2))?;
            let r = if b.insecure { KeyRateResult::zero(RateStatus::Insecure) } else { triggering_rate(p, outcomes, &split(&b)) };
            Ok(Point::new(x, mu, gain, qber, Some(&b), &r))
        }
        (Estimator::VacuumWeak | Estimator::OneDecoy, _) => unreachable!("rejected by validate"),
    }
}

fn totals(outcomes: &[qkd_core::pdc_model::TriggerOutcome]) -> (f64, f64) {
    let gain: f64 = outcomes.iter().map(|o| o.gain).sum();
    let errors: f64 = outcomes.iter().map(|o| o.error_gain()).sum();
    (gain, if gain > 0.0 { errors / gain } else { 0.0 })
}

fn entangled_point(s: &Scenario, x: f64, mu: f64) -> Result<Point> {
    let p = &s.params;
    let (ea, eb) = source_in_middle(p, x)?;
    let obs = ent_observables(p, mu / 2.0, ea, eb, EvalMode::Closed, 0)?;
    let e = obs.qber;
    if !(e < 0.5) || !(obs.gain > 0.0) {
        return Ok(Point::new(x, mu, obs.gain, e, None, &KeyRateResult::zero(RateStatus::Insecure)));
    }
    let eps = match s.fluctuation {
        Some(f) if e > 0.0 => ent_epsilon(f.n_total * obs.gain, e, f.log_failure)?,
        _ => 0.0,
    };
    let f = p.f_ec.at(e);
    let r = match s.post {
        PostProcess::OneWay => koashi_preskill_rate(p, &obs, eps),
        PostProcess::BSteps(n) => two_way_rate(p.q_basis, obs.gain, decoy_b_pipeline(1.0, e, e, (e + eps).min(0.5), n, f)),
        PostProcess::Recurrence => {
            two_way_rate(p.q_basis, obs.gain, recurrence_residue(&TaggedInput::single_photon(e), e, f)?)
        }
    };
    let mut pt = Point::new(x, mu, obs.gain, e, None, &r);
    pt.e1 = Some((e + eps).min(0.5));
    Ok(pt)
}
