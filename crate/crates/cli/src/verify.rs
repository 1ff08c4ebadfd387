//! Self-check suite: estimator safety on random scenarios, brute-force
//! two-way steps, series against closed forms, Monte Carlo agreement and
//! the time-shift identity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qkd_core::core_model::{
    channel_observables, coherent_closed, photon_distribution, preset, single_photon_truth, yield_error_profile,
    EvalMode, SourceKind,
};
use qkd_core::estimators::{
    active_rows, ayki_bounds, lp_bounds, nondecoy_bounds, one_decoy_bounds, trig_nondecoy_credits, trig_weak_bounds,
    truth_bounds, vacuum_weak_bounds, SinglePhotonBounds,
};
use qkd_core::keyrate::{gllp_rate, timeshift_analysis, triggering_rate};
use qkd_core::mc_oracle::{agreement_check, simulate_channel, simulate_triggering, SimConfig};
use qkd_core::pdc_model::{
    ent_observables, trigger_response, triggered_series, triggering_components, triggering_observables, TriggerKind,
};
use qkd_core::twoway::{b_step, p_step, BellDiag};
use qkd_core::Result;

/// Outcome of one check: the worst deviation seen against its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    /// Short identifier used in summaries.
    pub key: &'static str,
    pub name: &'static str,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn pass(&self) -> bool {
        self.worst <= self.tolerance
    }
}

/// Run every check. `cases` random scenarios per property, `n_pulses` per
/// Monte Carlo point, all streams derived from `seed`.
pub fn run_suite(cases: usize, n_pulses: u64, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        coherent_safety(&mut rng, cases)?,
        triggering_safety(&mut rng, cases)?,
        two_way_steps(&mut rng, cases)?,
        series_closed(&mut rng, cases)?,
        monte_carlo_grid(n_pulses, seed)?,
        timeshift_identity(&mut rng, cases)?,
    ])
}

/// Relative amount by which a rate exceeds the model-truth rate.
fn rate_excess(rate: f64, truth: f64) -> f64 {
    if rate <= truth {
        0.0
    } else if truth > 0.0 {
        (rate - truth) / truth
    } else {
        f64::INFINITY
    }
}

/// Amount by which a bound crosses the truth, relative to the truth.
fn crossing(b: &SinglePhotonBounds, y1: f64, e1: f64) -> f64 {
    if b.insecure {
        return 0.0;
    }
    let dy = (b.y1_low - y1) / y1;
    let de = if e1 > 0.0 { (e1 - b.e1_high) / e1 } else { -b.e1_high };
    dy.max(de).max(0.0)
}

fn coherent_safety(rng: &mut ChaCha8Rng, cases: usize) -> Result<Check> {
    let mut worst: f64 = 0.0;
    let mut p = preset("gys")?;
    for _ in 0..cases {
        p.e_detector = rng.random_range(0.0..0.08);
        p.y0_bob = 10f64.powf(rng.random_range(-7.0..-4.0));
        let eta = p.eta_bob * 10f64.powf(-rng.random_range(0.0..40.0) / 10.0);
        let mu = rng.random_range(0.2..0.9);
        let nu = mu * rng.random_range(0.05..0.8);
        let (y1, e1) = single_photon_truth(&p, eta);
        let (om, on) = (coherent_closed(&p, mu, eta), coherent_closed(&p, nu, eta));
        let rows = active_rows(SourceKind::Coherent, &[(mu, om), (nu, on)], 20);
        worst = worst.max(crossing(&vacuum_weak_bounds(&om, &on, p.y0(), mu, nu)?, y1, e1));
        // The other estimators either fold the vacuum into the single
        // photons or pick the yield that minimises the privacy credit; only
        // their key rates are guaranteed below the truth.
        let truth = gllp_rate(&p, &om, &truth_bounds(&p, mu, eta)).unclamped().max(0.0);
        for b in [
            nondecoy_bounds(&om, mu)?,
            one_decoy_bounds(&om, &on, mu, nu)?,
            lp_bounds(&rows, Some(p.y0()), mu * (-mu).exp())?,
        ] {
            worst = worst.max(rate_excess(gllp_rate(&p, &om, &b).rate, truth));
        }
    }
    Ok(Check { key: "coherent_safety", name: "coherent estimator safety", cases, worst, tolerance: 1e-9 })
}

fn triggering_safety(rng: &mut ChaCha8Rng, cases: usize) -> Result<Check> {
    let mut worst: f64 = 0.0;
    let mut p = preset("pdc144")?;
    for _ in 0..cases {
        p.e_detector = rng.random_range(0.0..0.08);
        p.eta_alice = rng.random_range(0.05..0.95);
        p.y0_bob = 10f64.powf(rng.random_range(-7.0..-4.0));
        let eta = p.eta_bob * 10f64.powf(-rng.random_range(0.0..30.0) / 10.0);
        let mu = rng.random_range(0.05..0.9);
        let nu = mu * rng.random_range(0.05..0.8);
        let c = triggering_components(&p, mu, eta)?;
        let (y1, e1) = (c.y1(mu), c.e1);
        let sig = triggering_observables(&p, TriggerKind::Threshold, mu, eta, EvalMode::Closed, 0)?.outcomes;
        let dec = triggering_observables(&p, TriggerKind::Threshold, nu, eta, EvalMode::Closed, 0)?.outcomes;
        let weak = trig_weak_bounds(&sig[1].observables(), &dec[1].observables(), mu, nu, p.eta_alice)?;
        worst = worst.max(crossing(&weak, y1, e1));
        // The passive estimate picks the rate-minimising vacuum gain, so its
        // yield bound alone may exceed the truth; the rate may not.
        let truth = triggering_rate(&p, &sig, &[(c.q1_0, e1), (c.q1_1, e1)]).unclamped().max(0.0);
        worst = worst.max(rate_excess(ayki_bounds(&p, &sig, mu)?.rate, truth));
        let credits = trig_nondecoy_credits(&sig, mu, p.eta_alice)?;
        worst = worst.max(rate_excess(triggering_rate(&p, &sig, &credits).rate, truth));
    }
    Ok(Check { key: "triggering_safety", name: "triggering estimator safety", cases, worst, tolerance: 1e-9 })
}

const FLAGS: [(u8, u8); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

fn flag_index(bit: u8, phase: u8) -> usize {
    FLAGS.iter().position(|&f| f == (bit, phase)).expect("flag pair")
}

fn random_state(rng: &mut ChaCha8Rng) -> Result<BellDiag> {
    let w: [f64; 4] = [rng.random_range(0.01..1.0), rng.random(), rng.random(), rng.random()];
    let s: f64 = w.iter().sum();
    BellDiag::new(w[0] / s, w[1] / s, w[2] / s, 1.0 - (w[0] + w[1] + w[2]) / s)
}

fn two_way_steps(rng: &mut ChaCha8Rng, cases: usize) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (c, t) = (random_state(rng)?, random_state(rng)?);
        let (ca, ta) = (c.as_array(), t.as_array());
        let mut b = [0.0; 4];
        for (i, &(b1, p1)) in FLAGS.iter().enumerate() {
            for (j, &(b2, p2)) in FLAGS.iter().enumerate() {
                if b1 == b2 {
                    b[flag_index(b1, p1 ^ p2)] += ca[i] * ta[j];
                }
            }
        }
        let ps: f64 = b.iter().sum();
        let (got, got_ps) = b_step(&c, &t)?;
        worst = worst.max((got_ps - ps).abs());
        for (g, w) in got.as_array().iter().zip(b) {
            worst = worst.max((g - w / ps).abs());
        }

        let mut pw = [0.0; 4];
        for (i, &(b1, p1)) in FLAGS.iter().enumerate() {
            for (j, &(b2, p2)) in FLAGS.iter().enumerate() {
                for (k, &(b3, p3)) in FLAGS.iter().enumerate() {
                    pw[flag_index(b1 ^ b2 ^ b3, u8::from(p1 + p2 + p3 >= 2))] += ca[i] * ca[j] * ca[k];
                }
            }
        }
        for (g, w) in p_step(&c).as_array().iter().zip(pw) {
            worst = worst.max((g - w).abs());
        }
    }
    Ok(Check { key: "two_way_steps", name: "two-way steps against enumeration", cases, worst, tolerance: 1e-12 })
}

fn series_closed(rng: &mut ChaCha8Rng, cases: usize) -> Result<Check> {
    let mut worst: f64 = 0.0;
    let rel = |a: f64, b: f64| if b == 0.0 { a.abs() } else { ((a - b) / b).abs() };
    let gys = preset("gys")?;
    let mut pdc = preset("pdc144")?;
    for _ in 0..cases {
        let eta = 10f64.powf(-rng.random_range(0.0..4.0));
        let mu = rng.random_range(0.01..1.0);
        let dist = photon_distribution(SourceKind::Coherent, mu, 60)?;
        let prof = yield_error_profile(&gys, eta, 60)?;
        let series = channel_observables(&gys, &dist, &prof, EvalMode::Series)?;
        let closed = coherent_closed(&gys, mu, eta);
        worst = worst.max(rel(series.gain, closed.gain)).max(rel(series.error_gain(), closed.error_gain()));

        let lambda = rng.random_range(0.001..0.1);
        pdc.eta_alice = rng.random_range(0.05..0.95);
        let resp = trigger_response(TriggerKind::Threshold, pdc.eta_alice, 80)?;
        let s = triggered_series(&pdc, &resp, lambda, eta);
        let c = triggering_observables(&pdc, TriggerKind::Threshold, lambda, eta, EvalMode::Closed, 0)?.outcomes;
        for (a, b) in s.iter().zip(&c) {
            worst = worst.max(rel(a.gain, b.gain)).max(rel(a.error_gain(), b.error_gain()));
        }

        let eb = pdc.eta_bob * eta;
        let s = ent_observables(&pdc, lambda, pdc.eta_alice, eb, EvalMode::Series, 80)?;
        let c = ent_observables(&pdc, lambda, pdc.eta_alice, eb, EvalMode::Closed, 0)?;
        worst = worst.max(rel(s.gain, c.gain)).max(rel(s.error_gain(), c.error_gain()));
    }
    Ok(Check { key: "series_closed", name: "series against closed forms", cases, worst, tolerance: 1e-10 })
}

/// Two sources, two intensities, three transmittances and two background
/// levels; the worst absolute z-score over gains and error gains.
fn monte_carlo_grid(n: u64, seed: u64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut p = preset("gys")?;
    let mut stream = seed.wrapping_mul(1000);
    for source in [SourceKind::Coherent, SourceKind::PdcPair] {
        for mu in [0.1, 0.5] {
            for eta in [1e-3, 0.05, 0.6] {
                for y0 in [0.0, 1e-3] {
                    p.y0_bob = y0;
                    let dist = photon_distribution(source, mu, 40)?;
                    let prof = yield_error_profile(&p, eta, 40)?;
                    let obs = channel_observables(&p, &dist, &prof, EvalMode::Series)?;
                    stream += 1;
                    let t = simulate_channel(&SimConfig::from_params(&p, source, mu, eta, n, stream))?;
                    let a = agreement_check(&t.total, n, &obs, 5.0);
                    worst = worst.max(a.z_gain.abs()).max(a.z_error_gain.abs());
                    cases += 1;
                }
            }
        }
    }
    let mut pdc = preset("pdc144")?;
    pdc.y0_alice = 0.0;
    for eta in [1e-3, 0.05] {
        stream += 1;
        let t = simulate_triggering(&SimConfig::from_params(&pdc, SourceKind::PdcPair, 0.1, eta, n, stream))?;
        let obs = triggering_observables(&pdc, TriggerKind::Threshold, 0.1, eta, EvalMode::Closed, 0)?;
        let split = t.by_trigger.expect("triggering tally is split");
        for (tally, o) in split.iter().zip(&obs.outcomes) {
            let a = agreement_check(tally, n, &o.observables(), 5.0);
            worst = worst.max(a.z_gain.abs()).max(a.z_error_gain.abs());
        }
        cases += 1;
    }
    Ok(Check { key: "monte_carlo_z", name: "Monte Carlo agreement |z|", cases, worst, tolerance: 5.0 })
}

fn timeshift_identity(rng: &mut ChaCha8Rng, cases: usize) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let t = timeshift_analysis(rng.random_range(0.001..1.0), rng.random())?;
        worst = worst.max((t.eve_info + t.mismatch_rate - 1.0).abs());
    }
    Ok(Check { key: "timeshift_identity", name: "time-shift identity", cases, worst, tolerance: 1e-12 })
}
