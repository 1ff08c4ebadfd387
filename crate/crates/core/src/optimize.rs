//! Optimal source intensities, scalar maximisation and maximal-reach search.
//!
//! The closed conditions come from small-`η` approximations of each rate
//! formula; scenario sweeps re-optimise numerically with [`maximize_scalar`].

use crate::core_model::ExperimentParams;
use crate::error::{domain, Error, Result};
use crate::keyrate::h2;
use crate::solver::{bisect, scan_then_golden, BISECT_MAX_ITER};

/// Lower end of every intensity bracket.
pub const MU_FLOOR: f64 = 1e-6;

fn root_on_bracket<F: Fn(f64) -> f64>(g: F, lo: f64, hi: f64, what: &str) -> Result<f64> {
    bisect(g, lo, hi, 1e-15, BISECT_MAX_ITER).map_err(|_| Error::NoRoot(format!("{what}: no root in [{lo}, {hi}]")))
}

fn check_ed(e_d: f64) -> Result<()> {
    if !(0.0..0.5).contains(&e_d) {
        return Err(domain(format!("e_d = {e_d} not in [0, 1/2)")));
    }
    Ok(())
}

/// `f·H₂(e_d)/(1 − H₂(e_d))`, the right-hand side of the decoy conditions.
fn cost_ratio(e_d: f64, f: f64) -> f64 {
    f * h2(e_d) / (1.0 - h2(e_d))
}

/// Optimal signal intensity for a coherent source at transmittance `eta`.
///
/// Without decoys the rate surrogate `(1+μ)e^{−μ} − e^{−ημ}` is stationary
/// where `−μe^{−μ} + ηe^{−ημ} = 0`, giving `μ ≈ η`. With decoys the
/// condition is `(1−μ)e^{−μ} = f·H₂(e_d)/(1 − H₂(e_d))`.
pub fn optimal_mu_coherent(params: &ExperimentParams, eta: f64, decoy: bool) -> Result<f64> {
    let e_d = params.e_detector;
    check_ed(e_d)?;
    if decoy {
        let rhs = cost_ratio(e_d, params.f_ec.at(e_d));
        if rhs >= 1.0 {
            return Err(Error::NoRoot(format!("e_d = {e_d} leaves no positive intensity")));
        }
        if rhs == 0.0 {
            return Ok(1.0);
        }
        root_on_bracket(|mu| (1.0 - mu) * (-mu).exp() - rhs, MU_FLOOR, 1.0, "decoy intensity")
    } else {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(domain(format!("eta = {eta} not in (0, 1)")));
        }
        root_on_bracket(|mu| -mu * (-mu).exp() + eta * (-eta * mu).exp(), 0.0, 1.0, "non-decoy intensity")
    }
}

/// Non-decoy triggering condition in `x = μ/η`.
pub fn trig_nondecoy_condition(x: f64, e_d: f64, f: f64) -> f64 {
    let r = e_d / (1.0 - x);
    let first = if e_d > 0.0 { e_d * r.log2() } else { 0.0 };
    -f * h2(e_d) + 1.0 - 2.0 * x + first + (1.0 - e_d - 2.0 * x) * (1.0 - r).log2()
}

/// Optimal intensity for a threshold-triggered source.
///
/// Without decoys the result is the ratio `x = μ/η`; with infinitely many
/// decoys it is `μ` itself, the root of `(1−μ)/(1+μ)³ = f·H₂(e_d)/(1 − H₂(e_d))`.
pub fn optimal_mu_triggering(e_d: f64, f: f64, decoy: bool) -> Result<f64> {
    check_ed(e_d)?;
    if decoy {
        let rhs = cost_ratio(e_d, f);
        if rhs >= 1.0 {
            return Err(Error::NoRoot(format!("e_d = {e_d} leaves no positive intensity")));
        }
        if rhs == 0.0 {
            return Ok(1.0);
        }
        root_on_bracket(|mu| (1.0 - mu) / (1.0 + mu).powi(3) - rhs, MU_FLOOR, 1.0, "triggering decoy intensity")
    } else {
        // The condition turns positive again as x → 1 − e_d; the maximum is
        // the first root, below (1 − e_d)/2.
        let hi = 0.5 * (1.0 - e_d);
        root_on_bracket(|x| trig_nondecoy_condition(x, e_d, f), MU_FLOOR, hi, "triggering non-decoy ratio")
    }
}

/// Limiting regime of the trigger-arm transmittance for the entangled source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntRegime {
    /// `η_A ≈ 1`
    HighTrigger,
    /// `η_A ≪ 1`
    LowTrigger,
}

/// Approximate entangled-source QBER in the given regime.
pub fn ent_qber_approx(lambda: f64, e_d: f64, regime: EntRegime) -> f64 {
    match regime {
        EntRegime::HighTrigger => (2.0 * e_d + lambda) / (2.0 + 2.0 * lambda),
        EntRegime::LowTrigger => (e_d + lambda + e_d * lambda) / (1.0 + 3.0 * lambda),
    }
}

/// Approximate entangled-source gain, up to the constant transmittance factor.
pub fn ent_gain_approx(lambda: f64, regime: EntRegime) -> f64 {
    match regime {
        EntRegime::HighTrigger => 2.0 * lambda,
        EntRegime::LowTrigger => 2.0 * lambda * (1.0 + 3.0 * lambda),
    }
}

/// Stationarity condition of `Q_λ[1 − (1+f)H₂(E_λ)]` in the given regime.
pub fn ent_condition(lambda: f64, e_d: f64, f: f64, regime: EntRegime) -> f64 {
    let e = ent_qber_approx(lambda, e_d, regime);
    let logit = ((1.0 - e) / e).log2();
    let core = 1.0 - (1.0 + f) * h2(e);
    match regime {
        EntRegime::HighTrigger => core - lambda * (1.0 + f) * (1.0 - 2.0 * e_d) / (2.0 * (1.0 + lambda).powi(2)) * logit,
        EntRegime::LowTrigger => {
            (1.0 + 6.0 * lambda) * core - lambda * (1.0 + f) * (1.0 - 2.0 * e_d) / (1.0 + 3.0 * lambda) * logit
        }
    }
}

/// Optimal pair parameter `λ` (half the mean photon-pair number) for an
/// entangled source.
pub fn optimal_lambda_entanglement(e_d: f64, f: f64, regime: EntRegime) -> Result<f64> {
    check_ed(e_d)?;
    root_on_bracket(|l| ent_condition(l, e_d, f, regime), MU_FLOOR, 1.0, "entangled pair parameter")
}

/// Absolute tolerance of [`maximize_scalar`] on the argument.
pub const ARG_TOL: f64 = 1e-6;

/// Maximise `f` on `[lo, hi]`: a grid scan (geometric when the bracket spans
/// more than two decades) refined by golden-section search. Plateaus return
/// their leftmost point.
pub fn maximize_scalar<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> (f64, f64) {
    let log = lo > 0.0 && hi / lo > 100.0;
    scan_then_golden(f, lo, hi, 41, log, ARG_TOL)
}

/// Axis of a reach search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Km,
    Db,
}

impl Axis {
    fn coarse_step(self) -> f64 {
        match self {
            Axis::Km => 1.0,
            Axis::Db => 0.5,
        }
    }

    fn limit(self) -> f64 {
        match self {
            Axis::Km => 1000.0,
            Axis::Db => 200.0,
        }
    }
}

/// Resolution of [`max_reach`].
pub const REACH_RESOLUTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reach {
    pub value: f64,
    /// False when the rate never exceeded the cutoff.
    pub found: bool,
}

/// Largest axis value with `rate > cutoff`: coarse scan from zero until the
/// first failure after a success, then bisection to [`REACH_RESOLUTION`].
pub fn max_reach<F: Fn(f64) -> f64>(rate: F, axis: Axis, cutoff: f64) -> Reach {
    let step = axis.coarse_step();
    let mut last_ok: Option<f64> = None;
    let mut x = 0.0;
    while x <= axis.limit() {
        if rate(x) > cutoff {
            last_ok = Some(x);
        } else if last_ok.is_some() {
            break;
        }
        x += step;
    }
    let Some(mut lo) = last_ok else {
        return Reach { value: 0.0, found: false };
    };
    let mut hi = lo + step;
    while hi - lo > REACH_RESOLUTION {
        let m = 0.5 * (lo + hi);
        if rate(m) > cutoff {
            lo = m;
        } else {
            hi = m;
        }
    }
    Reach { value: lo, found: true }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_model::preset;
    use crate::solver::golden_max;

    fn grid_root<F: Fn(f64) -> f64>(g: F, lo: f64, hi: f64, step: f64) -> f64 {
        let mut x = lo;
        let mut prev = g(x);
        while x + step <= hi {
            let v = g(x + step);
            if v.signum() != prev.signum() {
                return x + step / 2.0;
            }
            prev = v;
            x += step;
        }
        f64::NAN
    }

    #[test]
    fn coherent_decoy_intensity_for_gys() {
        let p = preset("gys").unwrap();
        let mu = optimal_mu_coherent(&p, 1e-3, true).unwrap();
        assert!((mu - 0.48).abs() < 0.005, "{mu}");
        let rhs = cost_ratio(0.033, 1.22);
        assert!(((1.0 - mu) * (-mu).exp() - rhs).abs() < 1e-10);
        // The root maximises the small-η surrogate −μfH₂(e_d) + μe^{−μ}[1 − H₂(e_d)].
        let h = h2(0.033);
        let (x, _) = golden_max(|m| -m * 1.22 * h + m * (-m).exp() * (1.0 - h), 0.0, 1.0, 1e-10);
        assert!((x - mu).abs() < 1e-6);
    }

    #[test]
    fn coherent_decoy_limits() {
        let mut p = preset("gys").unwrap();
        p.e_detector = 0.0;
        assert_eq!(optimal_mu_coherent(&p, 1e-3, true).unwrap(), 1.0);
        p.e_detector = 0.2;
        assert!(matches!(optimal_mu_coherent(&p, 1e-3, true), Err(Error::NoRoot(_))));
        p.e_detector = 0.6;
        assert!(optimal_mu_coherent(&p, 1e-3, true).is_err());
    }

    #[test]
    fn coherent_nondecoy_intensity_tracks_eta() {
        let p = preset("gys").unwrap();
        let mu = optimal_mu_coherent(&p, 0.01, false).unwrap();
        let (x, _) = golden_max(|m| (1.0 + m) * (-m).exp() - (-0.01 * m).exp(), 0.0, 1.0, 1e-12);
        assert!((mu - x).abs() < 1e-6, "{mu} vs {x}");
        assert!((mu - 0.01).abs() < 2e-4, "{mu}");
        assert!(optimal_mu_coherent(&p, 0.0, false).is_err());
    }

    #[test]
    fn triggering_conditions() {
        assert!((optimal_mu_triggering(0.0, 1.22, false).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(optimal_mu_triggering(0.0, 1.22, true).unwrap(), 1.0);
        let mu = optimal_mu_triggering(0.015, 1.22, true).unwrap();
        assert!((mu - 0.52).abs() < 0.052, "{mu}");

        // Roots maximise the corresponding small-η surrogates.
        let (ed, f) = (0.03, 1.22);
        let h = h2(ed);
        let mu = optimal_mu_triggering(ed, f, true).unwrap();
        let (m, _) = golden_max(|m| -f * m * h + m / (1.0 + m).powi(2) * (1.0 - h), 0.0, 1.0, 1e-10);
        assert!((m - mu).abs() < 1e-6);
        let x = optimal_mu_triggering(ed, f, false).unwrap();
        let surrogate = |x: f64| -f * x * h + (x - x * x) * (1.0 - h2(ed / (1.0 - x)));
        let (xm, _) = golden_max(surrogate, 0.0, 1.0 - ed - 1e-9, 1e-10);
        assert!((xm - x).abs() < 1e-6, "{x} vs {xm}");
    }

    #[test]
    fn entangled_roots_match_grid_and_surrogate() {
        for regime in [EntRegime::HighTrigger, EntRegime::LowTrigger] {
            for ed in [1e-9, 0.015, 0.03] {
                let l = optimal_lambda_entanglement(ed, 1.22, regime).unwrap();
                if ed <= 0.015 {
                    assert!((0.05..=1.0).contains(&l), "{regime:?} {ed}: {l}");
                }
                assert!(ent_condition(l, ed, 1.22, regime).abs() < 1e-10);
                let g = grid_root(|x| ent_condition(x, ed, 1.22, regime), 1e-5, 1.0, 1e-5);
                assert!((g - l).abs() < 1e-5, "{g} vs {l}");
                let surrogate = |x: f64| ent_gain_approx(x, regime) * (1.0 - 2.22 * h2(ent_qber_approx(x, ed, regime)));
                let (xm, _) = golden_max(surrogate, MU_FLOOR, 1.0, 1e-10);
                assert!((xm - l).abs() < 1e-6, "{xm} vs {l}");
            }
        }
    }

    #[test]
    fn maximize_scalar_basics() {
        let (x, v) = maximize_scalar(|_| 3.0, 0.1, 1.0);
        assert_eq!((x, v), (0.1, 3.0));
        let (x, _) = maximize_scalar(|x| -(x - 0.3719).powi(2), 0.0, 1.0);
        assert!((x - 0.3719).abs() < 1e-6);
        let (x, _) = maximize_scalar(|x| -(x.ln() - 1e-3f64.ln()).powi(2), 1e-6, 1.0);
        assert!((x - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn reach_of_linear_rate() {
        let r = max_reach(|x| 1.0 - x / 123.456, Axis::Km, 0.0);
        assert!(r.found && (r.value - 123.456).abs() <= REACH_RESOLUTION);
        let r = max_reach(|x| 37.3 - x, Axis::Db, 0.0);
        assert!((r.value - 37.3).abs() <= REACH_RESOLUTION);
        let r = max_reach(|_| 0.0, Axis::Km, 0.0);
        assert!(!r.found && r.value == 0.0);
    }
}
