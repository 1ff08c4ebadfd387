//! Cross-module pipelines through the public API.

use qkd_core::core_model::{coherent_closed, preset, transmittance, ChannelObservables, SourceKind};
use qkd_core::estimators::{truth_bounds, vacuum_weak_bounds};
use qkd_core::keyrate::{distance_upper_bound, gllp_rate};
use qkd_core::mc_oracle::{simulate_channel, SimConfig};
use qkd_core::optimize::{max_reach, maximize_scalar, Axis};

/// Observables measured by the pulse-level simulator.
fn measured(params: &qkd_core::core_model::ExperimentParams, mu: f64, eta: f64, n: u64, seed: u64) -> ChannelObservables {
    let cfg = SimConfig::from_params(params, SourceKind::Coherent, mu, eta, n, seed);
    let t = simulate_channel(&cfg).unwrap().total;
    let q = t.gain(n);
    ChannelObservables::new(q, t.error_gain(n) / q)
}

#[test]
fn decoy_bounds_from_simulated_counts_track_the_truth() {
    let p = preset("gys").unwrap();
    let eta = transmittance(&p, 20.0).unwrap();
    let n = 4_000_000;
    let obs_mu = measured(&p, 0.48, eta, n, 11);
    let obs_nu = measured(&p, 0.13, eta, n, 12);
    let b = vacuum_weak_bounds(&obs_mu, &obs_nu, p.y0(), 0.48, 0.13).unwrap();
    let truth = truth_bounds(&p, 0.48, eta);
    assert!((b.y1_low / truth.y1_low - 1.0).abs() < 0.1, "{} vs {}", b.y1_low, truth.y1_low);
    assert!(b.e1_high > 0.0 && b.e1_high < 0.1, "{}", b.e1_high);
    let r = gllp_rate(&p, &obs_mu, &b).rate;
    let r_true = gllp_rate(&p, &coherent_closed(&p, 0.48, eta), &truth).rate;
    assert!(r > 0.5 * r_true && r < 1.2 * r_true, "{r} vs {r_true}");
}

#[test]
fn vacuum_weak_rate_stays_below_infinite_decoy() {
    let p = preset("gys").unwrap();
    for km in [0.0, 30.0, 60.0, 90.0, 120.0, 135.0] {
        let eta = transmittance(&p, km).unwrap();
        let (mu, nu) = (0.48, 0.13);
        let obs_mu = coherent_closed(&p, mu, eta);
        let obs_nu = coherent_closed(&p, nu, eta);
        let vw = vacuum_weak_bounds(&obs_mu, &obs_nu, p.y0(), mu, nu).unwrap();
        let r_vw = gllp_rate(&p, &obs_mu, &vw).rate;
        let r_inf = gllp_rate(&p, &obs_mu, &truth_bounds(&p, mu, eta)).rate;
        assert!(r_vw <= r_inf * (1.0 + 1e-12), "{km} km: {r_vw} > {r_inf}");
    }
}

#[test]
fn optimised_reach_lies_below_the_single_photon_bound() {
    let p = preset("gys").unwrap();
    let rate = |km: f64| {
        let eta = transmittance(&p, km).unwrap();
        maximize_scalar(|mu| gllp_rate(&p, &coherent_closed(&p, mu, eta), &truth_bounds(&p, mu, eta)).rate, 1e-4, 1.0).1
    };
    let reach = max_reach(rate, Axis::Km, 0.0);
    let bound = distance_upper_bound(&p).unwrap();
    assert!(reach.value > 100.0 && reach.value < bound, "{} vs {bound}", reach.value);
}
