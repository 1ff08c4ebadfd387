//! Pulse-level Monte Carlo of source, lossy channel and threshold detection.
//!
//! Each pulse draws a photon number, lets every photon survive
//! independently, adds background clicks and resolves the detected bit.
//! Pulses are grouped in fixed blocks; block `b` uses the ChaCha8 stream `b`
//! of the configured seed, so tallies do not depend on thread scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Poisson};
use rayon::prelude::*;

use crate::core_model::{ChannelObservables, ExperimentParams, SourceKind};
use crate::error::{check_fraction, domain, Result};

/// Pulses per random stream.
pub const BLOCK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub source: SourceKind,
    /// Mean photon number (pair parameter `λ` for the entangled source).
    pub intensity: f64,
    /// Trigger-arm transmittance (Alice); unused for a coherent source.
    pub eta_a: f64,
    /// Channel transmittance to Bob.
    pub eta_b: f64,
    pub y0_a: f64,
    pub y0_b: f64,
    pub e_d: f64,
    pub n_pulses: u64,
    pub seed: u64,
}

impl SimConfig {
    /// Configuration for `params` with Bob's overall transmittance `eta`.
    pub fn from_params(params: &ExperimentParams, source: SourceKind, intensity: f64, eta: f64, n_pulses: u64, seed: u64) -> Self {
        SimConfig {
            source,
            intensity,
            eta_a: params.eta_alice,
            eta_b: eta,
            y0_a: params.y0_alice,
            y0_b: params.y0_bob,
            e_d: params.e_detector,
            n_pulses,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pulses < 1 {
            return Err(domain("n_pulses must be >= 1"));
        }
        if !(self.intensity >= 0.0 && self.intensity.is_finite()) {
            return Err(domain(format!("intensity {} must be finite and >= 0", self.intensity)));
        }
        for (n, v) in [("eta_a", self.eta_a), ("eta_b", self.eta_b), ("y0_a", self.y0_a), ("y0_b", self.y0_b), ("e_d", self.e_d)] {
            check_fraction(n, v)?;
        }
        Ok(())
    }
}

/// Event counts for one category of pulses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tally {
    pub pulses: u64,
    pub detections: u64,
    pub errors: u64,
    pub double_clicks: u64,
}

impl Tally {
    fn add(&mut self, o: &Tally) {
        self.pulses += o.pulses;
        self.detections += o.detections;
        self.errors += o.errors;
        self.double_clicks += o.double_clicks;
    }

    /// Detections per pulse of the whole run.
    pub fn gain(&self, n_pulses: u64) -> f64 {
        self.detections as f64 / n_pulses as f64
    }

    /// Errors per pulse of the whole run.
    pub fn error_gain(&self, n_pulses: u64) -> f64 {
        self.errors as f64 / n_pulses as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimTally {
    pub total: Tally,
    /// Split by trigger outcome `j = 0, 1` in triggering mode.
    pub by_trigger: Option<[Tally; 2]>,
}

struct Sampler {
    poisson: Option<Poisson<f64>>,
    geometric: Option<Geometric>,
}

impl Sampler {
    fn new(cfg: &SimConfig) -> Result<Self> {
        let x = cfg.intensity;
        let err = |e: String| domain(format!("cannot sample intensity {x}: {e}"));
        Ok(match cfg.source {
            SourceKind::Coherent => {
                Sampler { poisson: (x > 0.0).then(|| Poisson::new(x)).transpose().map_err(|e| err(e.to_string()))?, geometric: None }
            }
            SourceKind::PdcPair | SourceKind::PdcEntangled => Sampler {
                poisson: None,
                geometric: Some(Geometric::new(1.0 / (1.0 + x)).map_err(|e| err(e.to_string()))?),
            },
        })
    }

    fn photons<R: Rng>(&self, kind: SourceKind, rng: &mut R) -> u64 {
        match kind {
            SourceKind::Coherent => self.poisson.as_ref().map_or(0, |p| p.sample(rng) as u64),
            SourceKind::PdcPair => self.geometric.as_ref().unwrap().sample(rng),
            // (n+1)λⁿ/(1+λ)^(n+2) is the sum of two independent geometric draws.
            SourceKind::PdcEntangled => {
                let g = self.geometric.as_ref().unwrap();
                g.sample(rng) + g.sample(rng)
            }
        }
    }
}

fn any_survives<R: Rng>(n: u64, eta: f64, rng: &mut R) -> bool {
    (0..n).any(|_| rng.random::<f64>() < eta)
}

/// Bob's threshold detector pair. Surviving signal photons hit the wrong
/// detector with probability `e_d`; a background click lands on either
/// detector at random; a double click is assigned a random bit.
/// Returns `(detected, error, double_click)`.
fn detect<R: Rng>(signal: bool, cfg: &SimConfig, rng: &mut R) -> (bool, bool, bool) {
    let signal_wrong = signal && rng.random::<f64>() < cfg.e_d;
    let background = rng.random::<f64>() < cfg.y0_b;
    let background_wrong = background && rng.random_bool(0.5);
    match (signal, background) {
        (false, false) => (false, false, false),
        (true, false) => (true, signal_wrong, false),
        (false, true) => (true, background_wrong, false),
        (true, true) if signal_wrong == background_wrong => (true, signal_wrong, false),
        (true, true) => (true, rng.random_bool(0.5), true),
    }
}

fn run_blocks<F>(cfg: &SimConfig, categories: usize, per_pulse: F) -> Vec<Tally>
where
    F: Fn(&mut ChaCha8Rng, &mut [Tally]) + Sync,
{
    let blocks = cfg.n_pulses.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b);
            let mut t = vec![Tally::default(); categories];
            let n = BLOCK.min(cfg.n_pulses - b * BLOCK);
            for _ in 0..n {
                per_pulse(&mut rng, &mut t);
            }
            t
        })
        .reduce(
            || vec![Tally::default(); categories],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    x.add(y);
                }
                a
            },
        )
}

fn record(t: &mut Tally, (det, err, dbl): (bool, bool, bool)) {
    t.pulses += 1;
    t.detections += u64::from(det);
    t.errors += u64::from(det && err);
    t.double_clicks += u64::from(dbl);
}

/// Simulate a coherent or single-arm down-conversion source into Bob's detector.
pub fn simulate_channel(cfg: &SimConfig) -> Result<SimTally> {
    cfg.validate()?;
    if cfg.source == SourceKind::PdcEntangled {
        return Err(domain("use simulate_entangled for the entangled source"));
    }
    let s = Sampler::new(cfg)?;
    let t = run_blocks(cfg, 1, |rng, t| {
        let n = s.photons(cfg.source, rng);
        let signal = any_survives(n, cfg.eta_b, rng);
        record(&mut t[0], detect(signal, cfg, rng));
    });
    Ok(SimTally { total: t[0], by_trigger: None })
}

/// Simulate a down-conversion source whose idler photons trigger Alice's
/// threshold detector; tallies are split by trigger outcome.
pub fn simulate_triggering(cfg: &SimConfig) -> Result<SimTally> {
    cfg.validate()?;
    if cfg.source != SourceKind::PdcPair {
        return Err(domain("triggering needs a pair source"));
    }
    let s = Sampler::new(cfg)?;
    let t = run_blocks(cfg, 2, |rng, t| {
        let n = s.photons(cfg.source, rng);
        let trig = any_survives(n, cfg.eta_a, rng) | (rng.random::<f64>() < cfg.y0_a);
        let signal = any_survives(n, cfg.eta_b, rng);
        record(&mut t[usize::from(trig)], detect(signal, cfg, rng));
    });
    let mut total = t[0];
    total.add(&t[1]);
    Ok(SimTally { total, by_trigger: Some([t[0], t[1]]) })
}

/// Simulate an entangled source: `detections` counts coincidences of
/// Alice's and Bob's detectors (arm transmittances `eta_a`, `eta_b`).
/// Only the coincidence gain is simulated; errors are not tallied.
pub fn simulate_entangled(cfg: &SimConfig) -> Result<Tally> {
    cfg.validate()?;
    if cfg.source != SourceKind::PdcEntangled {
        return Err(domain("entangled simulation needs an entangled source"));
    }
    let s = Sampler::new(cfg)?;
    let t = run_blocks(cfg, 1, |rng, t| {
        let n = s.photons(cfg.source, rng);
        let a = any_survives(n, cfg.eta_a, rng) | (rng.random::<f64>() < cfg.y0_a);
        let b = any_survives(n, cfg.eta_b, rng) | (rng.random::<f64>() < cfg.y0_b);
        t[0].pulses += 1;
        t[0].detections += u64::from(a && b);
    });
    Ok(t[0])
}

/// z-scores of empirical frequencies against analytic probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agreement {
    pub z_gain: f64,
    pub z_error_gain: f64,
    pub sigma: f64,
}

impl Agreement {
    pub fn pass(&self) -> bool {
        self.z_gain.abs() <= self.sigma && self.z_error_gain.abs() <= self.sigma
    }
}

/// Binomial z-score of `k` successes in `n` trials against probability `p`.
pub fn z_score(k: u64, n: u64, p: f64) -> f64 {
    let n = n as f64;
    let sd = (n * p * (1.0 - p)).sqrt();
    let d = k as f64 - n * p;
    if sd == 0.0 {
        return if d == 0.0 { 0.0 } else { f64::INFINITY.copysign(d) };
    }
    d / sd
}

/// Compare a tally (normalised by `n_pulses`) with analytic observables.
pub fn agreement_check(tally: &Tally, n_pulses: u64, analytic: &ChannelObservables, sigma: f64) -> Agreement {
    Agreement {
        z_gain: z_score(tally.detections, n_pulses, analytic.gain),
        z_error_gain: z_score(tally.errors, n_pulses, analytic.error_gain()),
        sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_model::{channel_observables, photon_distribution, preset, yield_error_profile, EvalMode};
    use crate::pdc_model::{ent_observables, triggering_observables, TriggerKind};

    fn cfg(source: SourceKind, mu: f64, eta: f64, y0: f64, e_d: f64, n: u64, seed: u64) -> SimConfig {
        SimConfig { source, intensity: mu, eta_a: 0.5, eta_b: eta, y0_a: 0.0, y0_b: y0, e_d, n_pulses: n, seed }
    }

    #[test]
    fn trivial_limits() {
        let t = simulate_channel(&cfg(SourceKind::Coherent, 0.5, 0.0, 0.0, 0.03, 100_000, 1)).unwrap();
        assert_eq!(t.total.detections, 0);
        let t = simulate_channel(&cfg(SourceKind::Coherent, 0.5, 0.3, 0.0, 0.0, 100_000, 1)).unwrap();
        assert!(t.total.detections > 0 && t.total.errors == 0);
        let t = simulate_channel(&cfg(SourceKind::Coherent, 0.0, 0.3, 0.0, 0.0, 1000, 1)).unwrap();
        assert_eq!(t.total.detections, 0);
        assert!(simulate_channel(&cfg(SourceKind::Coherent, 0.5, 0.3, 0.0, 0.0, 0, 1)).is_err());
    }

    #[test]
    fn deterministic_for_a_seed() {
        let c = cfg(SourceKind::PdcPair, 0.3, 0.2, 1e-3, 0.02, 200_000, 42);
        assert_eq!(simulate_triggering(&c).unwrap(), simulate_triggering(&c).unwrap());
        let d = SimConfig { seed: 43, ..c };
        assert_ne!(simulate_triggering(&c).unwrap(), simulate_triggering(&d).unwrap());
    }

    #[test]
    fn coherent_gain_example() {
        let n = 1_000_000;
        let t = simulate_channel(&cfg(SourceKind::Coherent, 0.5, 0.1, 0.0, 0.0, n, 7)).unwrap();
        let q = 1.0 - (-0.05f64).exp();
        assert!((q - 0.0487706).abs() < 1e-7);
        assert!(z_score(t.total.detections, n, q).abs() <= 5.0);
    }

    #[test]
    fn closed_forms_agree_on_grid() {
        let n = 1_000_000;
        let mut p = preset("gys").unwrap();
        let mut seed = 100;
        for source in [SourceKind::Coherent, SourceKind::PdcPair] {
            for mu in [0.1, 0.5] {
                for eta in [1e-3, 0.05, 0.6] {
                    for y0 in [0.0, 1e-3] {
                        p.y0_bob = y0;
                        let dist = photon_distribution(source, mu, 40).unwrap();
                        let prof = yield_error_profile(&p, eta, 40).unwrap();
                        let obs = channel_observables(&p, &dist, &prof, EvalMode::Series).unwrap();
                        let c = SimConfig::from_params(&p, source, mu, eta, n, seed);
                        seed += 1;
                        let t = simulate_channel(&c).unwrap();
                        let a = agreement_check(&t.total, n, &obs, 5.0);
                        assert!(a.pass(), "{source:?} mu={mu} eta={eta} y0={y0}: {a:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn triggering_agrees_with_closed_form() {
        let mut p = preset("pdc144").unwrap();
        p.y0_alice = 0.0;
        let n = 10_000_000;
        let eta = p.eta_bob * 0.1;
        let t = simulate_triggering(&SimConfig::from_params(&p, SourceKind::PdcPair, 0.1, eta, n, 9)).unwrap();
        let obs = triggering_observables(&p, TriggerKind::Threshold, 0.1, eta, EvalMode::Closed, 0).unwrap();
        let split = t.by_trigger.unwrap();
        for (j, (tally, outcome)) in split.iter().zip(&obs.outcomes).enumerate() {
            let a = agreement_check(tally, n, &outcome.observables(), 5.0);
            assert!(a.pass(), "j = {j}: {a:?}");
        }
    }

    #[test]
    fn trigger_efficiency_limits() {
        let mut c = cfg(SourceKind::PdcPair, 0.3, 0.2, 0.0, 0.0, 200_000, 3);
        c.eta_a = 1.0;
        assert_eq!(simulate_triggering(&c).unwrap().by_trigger.unwrap()[0].detections, 0);
        c.eta_a = 0.0;
        assert_eq!(simulate_triggering(&c).unwrap().by_trigger.unwrap()[1].detections, 0);
    }

    #[test]
    fn entangled_coincidence_gain() {
        let p = preset("pdc144").unwrap();
        let n = 1_000_000;
        let (ea, eb) = (0.145, 0.02);
        let mut c = SimConfig::from_params(&p, SourceKind::PdcEntangled, 0.1, eb, n, 11);
        c.eta_a = ea;
        let t = simulate_entangled(&c).unwrap();
        let obs = ent_observables(&p, 0.1, ea, eb, EvalMode::Closed, 0).unwrap();
        assert!(z_score(t.detections, n, obs.gain).abs() <= 5.0);
    }

    #[test]
    fn agreement_flags_wrong_transmittance() {
        let p = preset("gys").unwrap();
        let n = 10_000_000;
        let t = simulate_channel(&SimConfig::from_params(&p, SourceKind::Coherent, 0.5, 0.05, n, 5)).unwrap();
        let right = crate::core_model::coherent_closed(&p, 0.5, 0.05);
        let wrong = crate::core_model::coherent_closed(&p, 0.5, 0.055);
        assert!(agreement_check(&t.total, n, &right, 5.0).pass());
        assert!(!agreement_check(&t.total, n, &wrong, 5.0).pass());
        let exact = Tally { pulses: 100, detections: 50, errors: 0, double_clicks: 0 };
        let a = agreement_check(&exact, 100, &ChannelObservables::new(0.5, 0.0), 5.0);
        assert_eq!((a.z_gain, a.z_error_gain), (0.0, 0.0));
    }

    #[test]
    fn disjoint_seeds_agree_statistically() {
        let n = 1_000_000;
        let a = simulate_channel(&cfg(SourceKind::Coherent, 0.5, 0.05, 1e-3, 0.03, n, 1)).unwrap().total;
        let b = simulate_channel(&cfg(SourceKind::Coherent, 0.5, 0.05, 1e-3, 0.03, n, 2)).unwrap().total;
        let p = (a.detections + b.detections) as f64 / (2 * n) as f64;
        let sd = (2.0 * n as f64 * p * (1.0 - p)).sqrt();
        assert!(((a.detections as f64 - b.detections as f64) / sd).abs() <= 5.0);
    }
}
