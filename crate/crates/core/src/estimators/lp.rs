//! Cut-off estimator: bound `Y₁` and `e₁` by linear programming over the
//! truncated yields.
//!
//! Variables are `Y_i` and `z_i = e_iY_i` for `i <= n_cut`, with
//! `0 <= z_i <= Y_i <= 1` and `z₀ = e₀Y₀`. Each observation row `k`
//! contributes `Q_k − tail_k <= Σ w_{k,i}Y_i <= Q_k` and the same interval for
//! the error gain, where `tail_k` is the weight mass beyond the cut-off.
//! The worst case minimises the single-photon credit `Y₁[1 − H₂(e₁)]`: for
//! each trial `Y₁` an inner LP maximises `z₁`, and a one-dimensional search
//! over `Y₁` picks the minimum.

use super::{Method, SinglePhotonBounds};
use crate::core_model::{photon_prob, ChannelObservables, SourceKind, E0};
use crate::error::{domain, Error, Result};
use crate::keyrate::pa_cost;
use crate::pdc_model::{TriggerOutcome, TriggerResponse};
use crate::solver::{scan_then_golden, LinearProgram, Relation};

/// One linear constraint row: weights on `Y_0..Y_n_cut` and the observation.
#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub weights: Vec<f64>,
    /// Total weight beyond the cut-off.
    pub tail: f64,
    pub gain: f64,
    pub error_gain: f64,
}

/// Rows for actively chosen intensities (Poisson or thermal weights).
pub fn active_rows(kind: SourceKind, entries: &[(f64, ChannelObservables)], n_cut: usize) -> Vec<LpRow> {
    entries
        .iter()
        .map(|(x, o)| {
            let weights: Vec<f64> = (0..=n_cut).map(|i| photon_prob(kind, *x, i)).collect();
            let tail = (1.0 - weights.iter().sum::<f64>()).max(0.0);
            LpRow { weights, tail, gain: o.gain, error_gain: o.error_gain() }
        })
        .collect()
}

/// Rows for passively grouped trigger outcomes, weights `P(i)·η_{j|i}`.
pub fn passive_rows(resp: &TriggerResponse, mu: f64, outcomes: &[TriggerOutcome]) -> Vec<LpRow> {
    let n_cut = resp.n_cut();
    let p: Vec<f64> = (0..=n_cut).map(|i| photon_prob(SourceKind::PdcPair, mu, i)).collect();
    let tail_p = (1.0 - p.iter().sum::<f64>()).max(0.0);
    outcomes
        .iter()
        .enumerate()
        .map(|(j, o)| LpRow {
            weights: p.iter().enumerate().map(|(i, pi)| pi * resp.eta(j, i)).collect(),
            tail: tail_p,
            gain: o.gain,
            error_gain: o.error_gain(),
        })
        .collect()
}

struct Program {
    base: LinearProgram,
    n: usize,
}

impl Program {
    fn new(rows: &[LpRow], y0_known: Option<f64>) -> Result<Self> {
        let n = rows[0].weights.len();
        if rows.iter().any(|r| r.weights.len() != n) {
            return Err(domain("rows have different cut-offs"));
        }
        let mut lp = LinearProgram::new(2 * n);
        for j in 0..2 * n {
            lp.upper[j] = Some(1.0);
        }
        for r in rows {
            let mut y = vec![0.0; 2 * n];
            y[..n].copy_from_slice(&r.weights);
            lp.push(y.clone(), Relation::Le, r.gain);
            lp.push(y, Relation::Ge, r.gain - r.tail);
            let mut z = vec![0.0; 2 * n];
            z[n..].copy_from_slice(&r.weights);
            lp.push(z.clone(), Relation::Le, r.error_gain);
            lp.push(z, Relation::Ge, r.error_gain - r.tail);
        }
        for i in 0..n {
            let mut c = vec![0.0; 2 * n];
            c[n + i] = 1.0;
            c[i] = -1.0;
            lp.push(c, if i == 0 { Relation::Eq } else { Relation::Le }, 0.0);
        }
        // z₀ = e₀Y₀ (background clicks are random).
        let last = lp.constraints.len() - n;
        lp.constraints[last].coef[0] = -E0;
        if let Some(y0) = y0_known {
            let mut c = vec![0.0; 2 * n];
            c[0] = 1.0;
            lp.push(c, Relation::Eq, y0);
        }
        Ok(Program { base: lp, n })
    }

    fn optimise(&self, var: usize, sign: f64, fix_y1: Option<f64>) -> Result<f64> {
        let mut lp = self.base.clone();
        lp.objective = vec![0.0; 2 * self.n];
        lp.objective[var] = sign;
        if let Some(y1) = fix_y1 {
            let mut c = vec![0.0; 2 * self.n];
            c[1] = 1.0;
            lp.push(c, Relation::Eq, y1);
        }
        Ok(sign * lp.solve()?.value)
    }
}

/// Worst-case single-photon bounds over all yields consistent with `rows`.
///
/// `p1` is the single-photon probability of the signal, used for the credited
/// gain `q1_low = p1·Y₁`.
pub fn lp_bounds(rows: &[LpRow], y0_known: Option<f64>, p1: f64) -> Result<SinglePhotonBounds> {
    if rows.len() < 2 {
        return Err(domain("need at least two observation rows"));
    }
    if rows[0].weights.len() < 3 {
        return Err(domain("n_cut must be at least 2"));
    }
    let prog = Program::new(rows, y0_known)?;
    let n = prog.n;
    let y1_min = prog.optimise(1, 1.0, None)?.max(0.0);
    let y1_max = prog.optimise(1, -1.0, None)?.min(1.0);
    if y1_min <= 0.0 && y1_max <= 0.0 {
        return Ok(SinglePhotonBounds::insecure(Method::Lp));
    }
    let z_max = |y1: f64| prog.optimise(n + 1, -1.0, Some(y1));
    let credit = |y1: f64| -> f64 {
        match z_max(y1) {
            Ok(z) if y1 > 0.0 => y1 * (1.0 - pa_cost(z / y1)),
            _ => f64::INFINITY,
        }
    };
    let lo = y1_min.max(y1_max * 1e-12);
    let hi = y1_max.max(lo);
    let (y1, neg) = if hi > lo * (1.0 + 1e-12) {
        scan_then_golden(|y| -credit(y), lo, hi, 17, false, (hi - lo) * 1e-10)
    } else {
        (lo, -credit(lo))
    };
    if !neg.is_finite() {
        return Err(Error::Infeasible("inner program failed at every trial yield".into()));
    }
    let z1 = z_max(y1)?;
    let mut b = SinglePhotonBounds::checked(y1, z1 / y1, p1 * y1, Method::Lp);
    b.q0_low = y0_known;
    Ok(b)
}
