//! Coherent-source BB84 channel and detection model.
//!
//! A pulse with `i` photons crosses a channel of overall transmittance `η`;
//! each photon survives independently, so the `i`-photon transmittance is
//! `1 − (1 − η)^i`. Detector background clicks are independent of the
//! signal. The yield is the exact product form `Y_i = Y₀ + η_i − Y₀η_i`; the
//! small-`Y₀` approximation is never used.

use crate::error::{check_fraction, domain, Error, Result};

/// Error rate of a background click (random outcome).
pub const E0: f64 = 0.5;

/// Default photon-number truncation.
pub const DEFAULT_N_CUT: usize = 20;

/// Error-correction inefficiency `f(e) >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum EcEfficiency {
    Constant(f64),
    /// Piecewise-linear table of `(error rate, f)` knots, sorted by error rate.
    /// Values are clamped to the first/last knot outside the table.
    Table(Vec<(f64, f64)>),
}

impl EcEfficiency {
    pub fn at(&self, e: f64) -> f64 {
        match self {
            EcEfficiency::Constant(f) => *f,
            EcEfficiency::Table(knots) => {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if e <= first.0 {
                    return first.1;
                }
                if e >= last.0 {
                    return last.1;
                }
                let k = knots.windows(2).position(|w| e <= w[1].0).unwrap_or(0);
                let ((x0, y0), (x1, y1)) = (knots[k], knots[k + 1]);
                y0 + (y1 - y0) * (e - x0) / (x1 - x0)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            EcEfficiency::Constant(f) if *f >= 1.0 => Ok(()),
            EcEfficiency::Constant(f) => Err(domain(format!("f_ec = {f} < 1"))),
            EcEfficiency::Table(knots) => {
                if knots.is_empty() {
                    return Err(domain("empty f_ec table"));
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(domain("f_ec table knots must be strictly increasing"));
                }
                if knots.iter().any(|k| k.1 < 1.0) {
                    return Err(domain("f_ec table value below 1"));
                }
                Ok(())
            }
        }
    }
}

/// One experimental setup.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentParams {
    pub name: String,
    pub wavelength_nm: f64,
    /// Fibre loss coefficient in dB/km.
    pub beta: f64,
    /// Bob's detection-side transmittance including detector efficiency.
    pub eta_bob: f64,
    /// Alice's trigger detector efficiency (1 for coherent sources).
    pub eta_alice: f64,
    /// Intrinsic misalignment error `e_d`.
    pub e_detector: f64,
    /// Alice-side background click probability per pulse.
    pub y0_alice: f64,
    /// Bob-side background click probability per pulse.
    pub y0_bob: f64,
    /// Basis reconciliation factor.
    pub q_basis: f64,
    pub f_ec: EcEfficiency,
    /// Pulses per second.
    pub rep_rate: f64,
}

impl ExperimentParams {
    /// Background probability used by one-sided (coherent / triggering) models.
    pub fn y0(&self) -> f64 {
        self.y0_bob
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta_bob", self.eta_bob),
            ("eta_alice", self.eta_alice),
            ("e_detector", self.e_detector),
            ("y0_alice", self.y0_alice),
            ("y0_bob", self.y0_bob),
            ("q_basis", self.q_basis),
        ] {
            check_fraction(name, v)?;
        }
        if !(self.beta >= 0.0) {
            return Err(domain(format!("beta = {} must be >= 0", self.beta)));
        }
        self.f_ec.validate()
    }
}

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 2] = ["gys", "pdc144"];

/// Named parameter sets.
///
/// * `gys`: 1550 nm fibre link, 0.21 dB/km, η_B = 4.5 %, e_d = 3.3 %,
///   Y₀ = 1.7e-6, 2 MHz.
/// * `pdc144`: 710 nm free-space link, η_A = η_B = 14.5 %, e_d = 1.5 %,
///   Y₀ = 6.024e-6 on each side, 249 MHz. Losses are given directly in dB.
pub fn preset(name: &str) -> Result<ExperimentParams> {
    match name {
        "gys" => Ok(ExperimentParams {
            name: "gys".into(),
            wavelength_nm: 1550.0,
            beta: 0.21,
            eta_bob: 0.045,
            eta_alice: 1.0,
            e_detector: 0.033,
            y0_alice: 0.0,
            y0_bob: 1.7e-6,
            q_basis: 0.5,
            f_ec: EcEfficiency::Constant(1.22),
            rep_rate: 2.0e6,
        }),
        "pdc144" => Ok(ExperimentParams {
            name: "pdc144".into(),
            wavelength_nm: 710.0,
            beta: 0.0,
            eta_bob: 0.145,
            eta_alice: 0.145,
            e_detector: 0.015,
            y0_alice: 6.024e-6,
            y0_bob: 6.024e-6,
            q_basis: 0.5,
            f_ec: EcEfficiency::Constant(1.22),
            rep_rate: 249.0e6,
        }),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

/// Channel-plus-detector transmittance at a fibre distance in km.
pub fn transmittance(params: &ExperimentParams, distance_km: f64) -> Result<f64> {
    if !(distance_km >= 0.0) {
        return Err(domain(format!("distance {distance_km} km is negative")));
    }
    Ok(params.eta_bob * 10f64.powf(-params.beta * distance_km / 10.0))
}

/// Transmittance for a total optical loss in dB (free-space style axis).
pub fn transmittance_db(params: &ExperimentParams, loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0) {
        return Err(domain(format!("loss {loss_db} dB is negative")));
    }
    Ok(params.eta_bob * 10f64.powf(-loss_db / 10.0))
}

/// Photon-number statistics of a source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// Phase-randomised weak coherent pulse: Poisson.
    Coherent,
    /// One arm of a down-conversion source: thermal, `μ^n/(1+μ)^(n+1)`.
    PdcPair,
    /// Pair number of an entangled down-conversion source,
    /// `(n+1)λ^n/(1+λ)^(n+2)`; the intensity is `λ = μ/2`.
    PdcEntangled,
}

/// Truncated photon-number distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonNumberDist {
    pub kind: SourceKind,
    pub intensity: f64,
    pub probs: Vec<f64>,
}

impl PhotonNumberDist {
    pub fn n_cut(&self) -> usize {
        self.probs.len() - 1
    }

    /// Probability mass beyond the truncation.
    pub fn tail(&self) -> f64 {
        (1.0 - self.probs.iter().sum::<f64>()).max(0.0)
    }
}

/// Single probability `P(n)` of a source kind, evaluated in log space.
pub fn photon_prob(kind: SourceKind, x: f64, n: usize) -> f64 {
    let nf = n as f64;
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let ln = match kind {
        SourceKind::Coherent => -x + nf * x.ln() - ln_factorial(n),
        SourceKind::PdcPair => nf * x.ln() - (nf + 1.0) * x.ln_1p(),
        SourceKind::PdcEntangled => (nf + 1.0).ln() + nf * x.ln() - (nf + 2.0) * x.ln_1p(),
    };
    ln.exp()
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

pub fn photon_distribution(kind: SourceKind, intensity: f64, n_cut: usize) -> Result<PhotonNumberDist> {
    if !(intensity >= 0.0) || !intensity.is_finite() {
        return Err(domain(format!("intensity {intensity} must be finite and >= 0")));
    }
    if n_cut < 1 {
        return Err(domain("n_cut must be >= 1"));
    }
    let probs = (0..=n_cut).map(|n| photon_prob(kind, intensity, n)).collect();
    Ok(PhotonNumberDist { kind, intensity, probs })
}

/// Per-photon-number yields and error rates.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldProfile {
    pub eta_total: f64,
    pub y: Vec<f64>,
    pub e: Vec<f64>,
}

/// `i`-photon transmittance `1 − (1 − η)^i`.
pub fn eta_i(eta: f64, i: usize) -> f64 {
    -(i as f64 * (-eta).ln_1p()).exp_m1()
}

pub fn yield_error_profile(params: &ExperimentParams, eta_total: f64, n_cut: usize) -> Result<YieldProfile> {
    check_fraction("eta_total", eta_total)?;
    let y0 = params.y0();
    let ed = params.e_detector;
    let mut y = Vec::with_capacity(n_cut + 1);
    let mut e = Vec::with_capacity(n_cut + 1);
    for i in 0..=n_cut {
        let ei = eta_i(eta_total, i);
        let yi = y0 + ei - y0 * ei;
        y.push(yi);
        e.push(if yi > 0.0 { (E0 * y0 + ed * ei) / yi } else { E0 });
    }
    Ok(YieldProfile { eta_total, y, e })
}

/// Event counts behind an observed gain and QBER.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Counts {
    pub pulses: f64,
    pub detections: f64,
    pub errors: f64,
}

/// An observed (gain, QBER) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelObservables {
    pub gain: f64,
    pub qber: f64,
    pub counts: Option<Counts>,
}

impl ChannelObservables {
    pub fn new(gain: f64, qber: f64) -> Self {
        ChannelObservables { gain, qber, counts: None }
    }

    /// Error-weighted gain `E·Q`.
    pub fn error_gain(&self) -> f64 {
        self.gain * self.qber
    }

    /// Attach expected counts for `pulses` sent.
    pub fn with_pulses(self, pulses: f64) -> Self {
        let detections = self.gain * pulses;
        ChannelObservables {
            counts: Some(Counts { pulses, detections, errors: detections * self.qber }),
            ..self
        }
    }
}

/// How to evaluate gain and QBER.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Sum `P(i)·Y_i` and `P(i)·e_i·Y_i` up to the truncation.
    Series,
    /// Closed form, coherent sources only.
    Closed,
}

/// Overall gain and QBER.
///
/// The closed form is the exact resummation of the series:
/// `Q = 1 − (1 − Y₀)e^(−ημ)` and `E·Q = e₀Y₀ + e_d(1 − e^(−ημ))`.
pub fn channel_observables(
    params: &ExperimentParams,
    dist: &PhotonNumberDist,
    profile: &YieldProfile,
    mode: EvalMode,
) -> Result<ChannelObservables> {
    match mode {
        EvalMode::Series => {
            let n = dist.probs.len().min(profile.y.len());
            let mut q = 0.0;
            let mut eq = 0.0;
            for i in 0..n {
                q += dist.probs[i] * profile.y[i];
                eq += dist.probs[i] * profile.e[i] * profile.y[i];
            }
            Ok(ChannelObservables::new(q, if q > 0.0 { eq / q } else { E0 }))
        }
        EvalMode::Closed => {
            if dist.kind != SourceKind::Coherent {
                return Err(Error::Unsupported("closed form exists only for coherent sources".into()));
            }
            Ok(coherent_closed(params, dist.intensity, profile.eta_total))
        }
    }
}

/// Closed-form coherent observables at intensity `mu` and transmittance `eta`.
pub fn coherent_closed(params: &ExperimentParams, mu: f64, eta: f64) -> ChannelObservables {
    let y0 = params.y0();
    let signal = -(-eta * mu).exp_m1();
    let q = y0 + signal - y0 * signal;
    let eq = E0 * y0 + params.e_detector * signal;
    ChannelObservables::new(q, if q > 0.0 { eq / q } else { E0 })
}

/// True single-photon yield and error rate at transmittance `eta`.
pub fn single_photon_truth(params: &ExperimentParams, eta: f64) -> (f64, f64) {
    let y0 = params.y0();
    let y1 = y0 + eta - y0 * eta;
    let e1 = if y1 > 0.0 { (E0 * y0 + params.e_detector * eta) / y1 } else { E0 };
    (y1, e1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gys() -> ExperimentParams {
        preset("gys").unwrap()
    }

    #[test]
    fn presets_validate() {
        for name in PRESET_NAMES {
            preset(name).unwrap().validate().unwrap();
        }
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn transmittance_examples() {
        assert_eq!(transmittance(&gys(), 0.0).unwrap(), 0.045);
        // 0.045 · 10^(-2.1), evaluated by hand to 6 digits.
        let t = transmittance(&gys(), 100.0).unwrap();
        assert!((t - 3.574_51e-4).abs() / 3.574_51e-4 < 1e-5, "{t}");
        assert!(transmittance(&gys(), -1.0).is_err());
    }

    #[test]
    fn distribution_examples() {
        let d = photon_distribution(SourceKind::Coherent, 0.0, 5).unwrap();
        assert_eq!(d.probs[0], 1.0);
        assert!(d.probs[1..].iter().all(|&p| p == 0.0));
        let d = photon_distribution(SourceKind::Coherent, 1.0, 20).unwrap();
        assert!((d.probs[20] - 1.51e-19).abs() / 1.51e-19 < 0.01);
        let d = photon_distribution(SourceKind::PdcPair, 0.5, 3).unwrap();
        assert!((d.probs[2] - 0.25 / 3.375).abs() < 1e-15);
        assert!((d.probs[2] - 0.074074).abs() < 1e-6);
        assert!(photon_distribution(SourceKind::PdcPair, -0.1, 3).is_err());
    }

    #[test]
    fn yield_examples() {
        let mut p = gys();
        p.y0_bob = 0.0;
        let prof = yield_error_profile(&p, 1.0, 3).unwrap();
        assert_eq!(prof.y[1], 1.0);
        assert_eq!(prof.e[1], p.e_detector);
        let prof = yield_error_profile(&gys(), 0.045, 3).unwrap();
        assert_eq!(prof.y[0], 1.7e-6);
        assert_eq!(prof.e[0], 0.5);
        // Y₁ = Y₀ + η − Y₀η and e₁ = (e₀Y₀ + e_dη)/Y₁ by hand.
        let y1 = 1.7e-6 + 0.045 - 1.7e-6 * 0.045;
        assert!((prof.y[1] - y1).abs() < 1e-16);
        assert!((prof.y[1] - 0.0450017).abs() < 1e-7);
        assert!((prof.e[1] - 0.0330176).abs() < 1e-7, "{}", prof.e[1]);
    }

    #[test]
    fn closed_observables_example() {
        let p = gys();
        let d = photon_distribution(SourceKind::Coherent, 0.48, 20).unwrap();
        let prof = yield_error_profile(&p, 0.045, 20).unwrap();
        let o = channel_observables(&p, &d, &prof, EvalMode::Closed).unwrap();
        assert!((o.gain - 0.021370).abs() < 5e-7, "{}", o.gain);
        assert!((o.qber - 0.033038).abs() < 1e-6, "{}", o.qber);
        let s = channel_observables(&p, &d, &prof, EvalMode::Series).unwrap();
        assert!((s.gain - o.gain).abs() / o.gain < 1e-10);
        assert!((s.qber - o.qber).abs() / o.qber < 1e-10);
    }

    #[test]
    fn vacuum_source_sees_background_only() {
        let p = gys();
        let o = coherent_closed(&p, 0.0, 0.3);
        assert_eq!(o.gain, p.y0());
        assert_eq!(o.qber, E0);
    }

    #[test]
    fn closed_mode_rejects_pdc() {
        let p = gys();
        let d = photon_distribution(SourceKind::PdcPair, 0.1, 10).unwrap();
        let prof = yield_error_profile(&p, 0.1, 10).unwrap();
        assert!(matches!(
            channel_observables(&p, &d, &prof, EvalMode::Closed),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn ec_table_interpolates() {
        let f = EcEfficiency::Table(vec![(0.01, 1.16), (0.05, 1.16), (0.1, 1.22)]);
        assert_eq!(f.at(0.0), 1.16);
        assert!((f.at(0.075) - 1.19).abs() < 1e-12);
        assert_eq!(f.at(0.3), 1.22);
    }
}
