//! Task execution: each task turns a scenario into a table and a summary.

use rayon::prelude::*;

use qkd_core::core_model::single_photon_truth;
use qkd_core::core_model::transmittance;
use qkd_core::estimators::deviation_metrics;
use qkd_core::fluctuation::{optimize_allocation, ConfidenceSpec};
use qkd_core::keyrate::{collision_cost, distance_upper_bound, h2, pa_deviation_scan, timeshift_analysis, RateStatus};
use qkd_core::optimize::{
    max_reach, optimal_lambda_entanglement, optimal_mu_coherent, optimal_mu_triggering, Axis, EntRegime,
};
use qkd_core::twoway::{gl_threshold, gl_tolerable_region};

use crate::scenario::{evaluate, MuPolicy, OptimizeTarget, Point, Scenario, Source, Task};
use crate::table::{Cell, Table};
use crate::verify::run_suite;
use crate::CliError;

/// Table plus named scalar results.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub name: String,
    pub table: Table,
    pub summary: Vec<(String, Cell)>,
    /// Every evaluated point had zero rate.
    pub insecure_everywhere: bool,
    /// A self-check failed.
    pub check_failed: bool,
}

impl Report {
    fn new(s: &Scenario, table: Table) -> Self {
        Report { name: s.name.clone(), table, summary: Vec::new(), insecure_everywhere: false, check_failed: false }
    }

    fn add(&mut self, key: &str, value: impl Into<Cell>) {
        self.summary.push((key.to_string(), value.into()));
    }

    /// Numeric summary entry.
    pub fn get(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).and_then(|(_, v)| v.as_f64())
    }
}

/// Map `f` over sweep points, on `jobs` threads when `jobs > 1`. Results
/// keep the order of `xs`.
fn par_map<T, F>(xs: &[f64], jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(f64) -> T + Sync,
{
    if jobs <= 1 {
        return xs.iter().map(|&x| f(x)).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| xs.par_iter().map(|&x| f(x)).collect()),
        Err(_) => xs.iter().map(|&x| f(x)).collect(),
    }
}

fn context(s: &Scenario) -> impl Fn(qkd_core::Error) -> CliError + '_ {
    move |source| CliError::Scenario { name: s.name.clone(), source }
}

fn axis_name(axis: Axis) -> &'static str {
    match axis {
        Axis::Km => "km",
        Axis::Db => "db",
    }
}

fn status_name(s: RateStatus) -> &'static str {
    match s {
        RateStatus::Positive => "positive",
        RateStatus::ClampedZero => "zero",
        RateStatus::Insecure => "insecure",
    }
}

fn point_table(s: &Scenario, points: &[Point]) -> Table {
    let mut t = Table::new(&[axis_name(s.sweep.axis), "mu", "gain", "qber", "y1_low", "e1_high", "rate", "status"]);
    for p in points {
        t.push(vec![
            p.x.into(),
            p.mu.into(),
            p.gain.into(),
            p.qber.into(),
            p.y1.into(),
            p.e1.into(),
            p.rate.into(),
            status_name(p.status).into(),
        ]);
    }
    t
}

fn sweep_points(s: &Scenario, jobs: usize) -> Result<Vec<Point>, CliError> {
    par_map(&s.sweep.points, jobs, |x| evaluate(s, x)).into_iter().collect::<Result<_, _>>().map_err(context(s))
}

/// Run the scenario's task on up to `jobs` threads.
pub fn run_scenario(s: &Scenario, jobs: usize) -> Result<Report, CliError> {
    match s.task {
        Task::Sweep | Task::Rate => sweep(s, jobs),
        Task::Reach => reach(s),
        Task::Compare => compare(s, jobs),
        Task::Optimize => optimize(s, jobs),
        Task::Region => region(s, jobs),
        Task::PaDeviation => pa(s),
        Task::UpperBound => upper_bound(s),
        Task::Attack => attack(s),
        Task::Verify => verify(s),
    }
}

fn sweep(s: &Scenario, jobs: usize) -> Result<Report, CliError> {
    let xs = if s.task == Task::Rate { &s.sweep.points[..s.sweep.points.len().min(1)] } else { &s.sweep.points[..] };
    let points = sweep_points(&Scenario { sweep: crate::scenario::Sweep { points: xs.to_vec(), ..s.sweep.clone() }, ..s.clone() }, jobs)?;
    let mut r = Report::new(s, point_table(s, &points));
    r.add("points", points.len());
    if let Some(first) = points.first() {
        r.add("rate", first.rate);
        r.add("mu", first.mu);
    }
    let above: Vec<&Point> = points.iter().filter(|p| p.rate > s.sweep.cutoff).collect();
    r.add("max_rate", points.iter().map(|p| p.rate).fold(0.0, f64::max));
    r.add("last_secure", above.last().map(|p| p.x));
    r.insecure_everywhere = !points.is_empty() && above.is_empty();
    Ok(r)
}

/// Rate used by reach searches; evaluation failures count as no key.
fn rate_or_zero(s: &Scenario, x: f64) -> f64 {
    evaluate(s, x).map_or(0.0, |p| p.rate)
}

fn reach(s: &Scenario) -> Result<Report, CliError> {
    let start = evaluate(s, 0.0).map_err(context(s))?;
    let found = max_reach(|x| rate_or_zero(s, x), s.sweep.axis, s.sweep.cutoff);
    let mut t = Table::new(&["reach", "found", "rate_at_zero", "mu_at_zero"]);
    t.push(vec![found.value.into(), found.found.into(), start.rate.into(), start.mu.into()]);
    let mut r = Report::new(s, t);
    r.add("reach", found.value);
    r.add("found", found.found);
    r.add("rate_at_zero", start.rate);
    r.add("mu_at_zero", start.mu);
    r.insecure_everywhere = !found.found;
    Ok(r)
}

fn compare(s: &Scenario, jobs: usize) -> Result<Report, CliError> {
    let base = s.baseline();
    let pairs: Vec<(Point, Point)> = par_map(&s.sweep.points, jobs, |x| Ok((evaluate(s, x)?, evaluate(&base, x)?)))
        .into_iter()
        .collect::<Result<_, qkd_core::Error>>()
        .map_err(context(s))?;
    let mut t = Table::new(&[axis_name(s.sweep.axis), "mu", "rate", "baseline_mu", "baseline_rate", "ratio"]);
    let mut gains = Vec::new();
    let mut crossover = None;
    for (k, (a, b)) in pairs.iter().enumerate() {
        let ratio = (b.rate > 0.0).then(|| a.rate / b.rate);
        t.push(vec![a.x.into(), a.mu.into(), a.rate.into(), b.mu.into(), b.rate.into(), ratio.into()]);
        if let Some(q) = ratio {
            gains.push(q - 1.0);
        }
        if k > 0 && crossover.is_none() {
            let (pa, pb) = &pairs[k - 1];
            let (d0, d1) = (pa.rate - pb.rate, a.rate - b.rate);
            if d0 < 0.0 && d1 > 0.0 && b.rate > 0.0 {
                crossover = Some(pa.x + (a.x - pa.x) * d0 / (d0 - d1));
            }
        }
    }
    let mut r = Report::new(s, t);
    r.add("min_gain", gains.iter().copied().reduce(f64::min));
    r.add("max_gain", gains.iter().copied().reduce(f64::max));
    r.add("crossover", crossover);
    if s.baseline.reach {
        let a = max_reach(|x| rate_or_zero(s, x), s.sweep.axis, s.sweep.cutoff);
        let b = max_reach(|x| rate_or_zero(&base, x), s.sweep.axis, s.sweep.cutoff);
        r.add("reach", a.value);
        r.add("baseline_reach", b.value);
        r.add("reach_gain", a.value - b.value);
    }
    r.insecure_everywhere = !pairs.is_empty() && pairs.iter().all(|(a, _)| a.rate <= s.sweep.cutoff);
    Ok(r)
}

fn optimize(s: &Scenario, jobs: usize) -> Result<Report, CliError> {
    match s.optimize {
        OptimizeTarget::Mu => {
            let opt = match s.mu {
                MuPolicy::Optimized { .. } => s.clone(),
                _ => Scenario { mu: MuPolicy::Optimized { lo: 1e-4, hi: 1.0 }, ..s.clone() },
            };
            let mut r = sweep(&Scenario { task: Task::Sweep, ..opt }, jobs)?;
            r.name = s.name.clone();
            Ok(r)
        }
        OptimizeTarget::Allocation => allocation(s, jobs),
        OptimizeTarget::Conditions => conditions(s),
    }
}

fn allocation(s: &Scenario, jobs: usize) -> Result<Report, CliError> {
    let unsupported = |m: &str| CliError::Scenario { name: s.name.clone(), source: qkd_core::Error::Unsupported(m.into()) };
    let (Some(f), MuPolicy::Fixed(mu), Source::Coherent, Axis::Km) = (s.fluctuation, s.mu, s.source, s.sweep.axis) else {
        return Err(unsupported("allocation needs a coherent source, a fixed mu, [fluctuation] and a km axis"));
    };
    let p = &s.params;
    let conf = ConfidenceSpec::new(f.u).map_err(context(s))?;
    let rows = par_map(&s.sweep.points, jobs, |km| {
        let a = optimize_allocation(p, f.n_total, km, mu, conf)?;
        let (y1, e1) = single_photon_truth(p, transmittance(p, km)?);
        let beta = deviation_metrics(&a.result.bounds, y1, e1).ok();
        Ok((km, a, beta))
    })
    .into_iter()
    .collect::<Result<Vec<_>, qkd_core::Error>>()
    .map_err(context(s))?;
    let mut t = Table::new(&[
        "km", "n_signal", "n_vacuum", "n_weak", "nu", "y1_low", "e1_high", "beta_y1", "beta_e1", "rate", "key_bits",
    ]);
    for (km, a, beta) in &rows {
        let b = &a.budget;
        t.push(vec![
            (*km).into(),
            b.n_signal.into(),
            b.n_vacuum.into(),
            b.n_weak.into(),
            a.nu.into(),
            a.result.bounds.y1_low.into(),
            a.result.bounds.e1_high.into(),
            beta.map(|b| b.0).into(),
            beta.map(|b| b.1).into(),
            a.result.rate.rate.into(),
            (a.result.rate.rate * f.n_total).into(),
        ]);
    }
    let mut r = Report::new(s, t);
    if let Some((_, a, beta)) = rows.first() {
        r.add("nu", a.nu);
        r.add("n_signal", a.budget.n_signal);
        r.add("n_vacuum", a.budget.n_vacuum);
        r.add("n_weak", a.budget.n_weak);
        r.add("rate", a.result.rate.rate);
        r.add("key_bits", a.result.rate.rate * f.n_total);
        r.add("beta_y1", beta.map(|b| b.0));
        r.add("beta_e1", beta.map(|b| b.1));
    }
    r.insecure_everywhere = !rows.is_empty() && rows.iter().all(|(_, a, _)| a.result.rate.rate <= 0.0);
    Ok(r)
}

fn conditions(s: &Scenario) -> Result<Report, CliError> {
    let p = &s.params;
    let e_d = p.e_detector;
    let f = p.f_ec.at(e_d);
    let x = s.sweep.points.first().copied().unwrap_or(0.0);
    let eta = match s.sweep.axis {
        Axis::Km => transmittance(p, x),
        Axis::Db => qkd_core::core_model::transmittance_db(p, x),
    }
    .map_err(context(s))?;
    let entries = [
        ("coherent_decoy_mu", optimal_mu_coherent(p, eta, true)),
        ("coherent_nondecoy_mu", optimal_mu_coherent(p, eta, false)),
        ("triggering_decoy_mu", optimal_mu_triggering(e_d, f, true)),
        ("triggering_nondecoy_ratio", optimal_mu_triggering(e_d, f, false)),
        ("entangled_lambda_high_trigger", optimal_lambda_entanglement(e_d, f, EntRegime::HighTrigger)),
        ("entangled_lambda_low_trigger", optimal_lambda_entanglement(e_d, f, EntRegime::LowTrigger)),
    ];
    let mut t = Table::new(&["quantity", "value", "note"]);
    let mut r_entries = Vec::new();
    for (name, v) in entries {
        let (cell, note) = match v {
            Ok(v) => (Cell::Num(v), String::new()),
            Err(e) => (Cell::Empty, e.to_string()),
        };
        t.push(vec![name.into(), cell.clone(), note.into()]);
        r_entries.push((name, cell));
    }
    let mut r = Report::new(s, t);
    r.add("eta", eta);
    for (name, cell) in r_entries {
        r.add(name, cell);
    }
    Ok(r)
}

const REGION_TOL: f64 = 1e-6;

fn region(s: &Scenario, jobs: usize) -> Result<Report, CliError> {
    let n = s.region_max_steps;
    let threshold = gl_threshold(n, REGION_TOL).map_err(context(s))?;
    let one_way = gl_threshold(0, REGION_TOL).map_err(context(s))?;
    let table = if s.region_grid_step > 0.0 {
        let g = s.region_grid_step;
        let k = (0.3 / g + 1e-9).floor() as usize;
        let axis: Vec<f64> = (0..=k).map(|i| i as f64 * g).collect();
        let cells = par_map(&axis, jobs, |db| {
            axis.iter().map(|&dp| gl_tolerable_region(db, dp, n).map(|pt| (db, dp, pt))).collect::<Vec<_>>()
        });
        let mut t = Table::new(&["delta_b", "delta_p", "tolerable", "sequence"]);
        for row in cells {
            for c in row {
                let (db, dp, pt) = c.map_err(context(s))?;
                let seq = pt.sequence.map_or(String::new(), |q| q.to_string());
                t.push(vec![db.into(), dp.into(), pt.tolerable.into(), seq.into()]);
            }
        }
        t
    } else {
        let steps: Vec<f64> = (0..=n).map(|k| k as f64).collect();
        let mut t = Table::new(&["max_steps", "threshold"]);
        for (k, th) in steps.iter().zip(par_map(&steps, jobs, |k| gl_threshold(k as usize, REGION_TOL))) {
            t.push(vec![Cell::Int(*k as i64), th.map_err(context(s))?.into()]);
        }
        t
    };
    let mut r = Report::new(s, table);
    r.add("threshold", threshold);
    r.add("one_way_threshold", one_way);
    Ok(r)
}

fn pa(s: &Scenario) -> Result<Report, CliError> {
    let d = pa_deviation_scan(s.pa_step);
    let mut t = Table::new(&["error_rate", "entropy_cost", "collision_cost", "relative_gap"]);
    let n = (0.5 / s.pa_step).floor() as usize;
    let stride = (n / 500).max(1);
    for k in (1..n).step_by(stride) {
        let e = k as f64 * s.pa_step;
        let (h, c) = (h2(e), collision_cost(e));
        t.push(vec![e.into(), h.into(), c.into(), ((h - c) / h).into()]);
    }
    let mut r = Report::new(s, t);
    r.add("error_rate", d.error_rate);
    r.add("relative", d.relative);
    r.add("absolute", d.absolute);
    Ok(r)
}

fn upper_bound(s: &Scenario) -> Result<Report, CliError> {
    let km = distance_upper_bound(&s.params).map_err(context(s))?;
    let mut t = Table::new(&["distance_km"]);
    t.push(vec![km.into()]);
    let mut r = Report::new(s, t);
    r.add("distance_km", km);
    r.insecure_everywhere = km == 0.0;
    Ok(r)
}

fn attack(s: &Scenario) -> Result<Report, CliError> {
    let g = s.attack_step;
    let k = (1.0 / g + 1e-9).floor() as usize;
    let mut t = Table::new(&["eta0", "eta1", "eve_info", "mismatch_rate"]);
    let mut worst: f64 = 0.0;
    for i in 1..=k {
        for j in 0..=k {
            let (e0, e1) = (i as f64 * g, j as f64 * g);
            let ts = timeshift_analysis(e0.min(1.0), e1.min(1.0)).map_err(context(s))?;
            worst = worst.max((ts.eve_info + ts.mismatch_rate - 1.0).abs());
            t.push(vec![e0.into(), e1.into(), ts.eve_info.into(), ts.mismatch_rate.into()]);
        }
    }
    let mut r = Report::new(s, t);
    r.add("identity_error", worst);
    Ok(r)
}

fn verify(s: &Scenario) -> Result<Report, CliError> {
    let checks = run_suite(s.verify_cases, s.verify_pulses, s.seed).map_err(context(s))?;
    let mut t = Table::new(&["check", "cases", "worst", "tolerance", "pass"]);
    for c in &checks {
        t.push(vec![c.name.into(), c.cases.into(), c.worst.into(), c.tolerance.into(), c.pass().into()]);
    }
    let mut r = Report::new(s, t);
    let all = checks.iter().all(|c| c.pass());
    for c in &checks {
        r.add(c.key, c.worst);
    }
    r.add("all_pass", all);
    r.check_failed = !all;
    Ok(r)
}
