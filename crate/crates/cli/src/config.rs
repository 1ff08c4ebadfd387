//! Line-oriented scenario configuration.
//!
//! ```text
//! # comment
//! name = c01_endpoints
//! task = reach
//! preset = gys
//!
//! [estimator]
//! method = vacuum_weak
//! nu = 0.13
//! ```
//!
//! Keys before the first `[section]` header belong to the top level. Every
//! key must be known for its section, and a key may appear only once.

use std::collections::BTreeMap;
use std::fmt;

use qkd_core::core_model::{preset, EcEfficiency, ExperimentParams};
use qkd_core::optimize::Axis;
use qkd_core::pdc_model::TriggerKind;

use crate::scenario::{
    Baseline, Estimator, Fluctuation, MuPolicy, OptimizeTarget, PostProcess, Scenario, Source, Sweep, Task,
};

/// Parse or validation failure, with the offending line when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(line: Option<usize>, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, message: message.into() })
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("", &["name", "task", "preset"]),
    (
        "params",
        &["wavelength_nm", "beta", "eta_bob", "eta_alice", "e_detector", "y0_alice", "y0_bob", "q_basis", "f_ec", "rep_rate"],
    ),
    ("source", &["kind", "trigger", "n_cut"]),
    ("estimator", &["method", "nu"]),
    ("postprocess", &["scheme", "b_steps"]),
    ("intensity", &["policy", "mu", "min", "max"]),
    ("fluctuation", &["n_total", "u", "signal_fraction", "log_failure"]),
    ("sweep", &["axis", "start", "stop", "step", "points", "cutoff"]),
    ("compare", &["scheme", "b_steps", "method", "fluctuation", "reach"]),
    ("optimize", &["target"]),
    ("region", &["max_steps", "grid_step"]),
    ("pa", &["step"]),
    ("attack", &["step"]),
    ("verify", &["n_pulses", "cases", "seed"]),
];

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Key/value pairs by `(section, key)`, plus the sections present.
#[derive(Debug, Default)]
struct Raw {
    entries: BTreeMap<(String, String), Entry>,
    sections: BTreeMap<String, usize>,
}

fn lex(text: &str) -> Result<Raw, ConfigError> {
    let mut raw = Raw::default();
    let mut section = String::new();
    for (k, full) in text.lines().enumerate() {
        let n = k + 1;
        let line = full.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return err(Some(n), format!("malformed section header `{line}`"));
            };
            let name = name.trim();
            if name.is_empty() || !SECTIONS.iter().any(|(s, _)| *s == name) {
                return err(Some(n), format!("unknown section [{name}]"));
            }
            if raw.sections.insert(name.to_string(), n).is_some() {
                return err(Some(n), format!("section [{name}] repeated"));
            }
            section = name.to_string();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return err(Some(n), format!("expected `key = value`, got `{line}`"));
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return err(Some(n), "missing key before `=`");
        }
        if value.is_empty() {
            return err(Some(n), format!("missing value for `{key}`"));
        }
        let known = SECTIONS.iter().find(|(s, _)| *s == section).map_or(&[][..], |(_, keys)| keys);
        if !known.contains(&key) {
            let place = if section.is_empty() { "top level".to_string() } else { format!("section [{section}]") };
            return err(Some(n), format!("unknown key `{key}` in {place}"));
        }
        let slot = (section.clone(), key.to_string());
        if raw.entries.contains_key(&slot) {
            return err(Some(n), format!("key `{key}` repeated"));
        }
        raw.entries.insert(slot, Entry { value: value.to_string(), line: n });
    }
    Ok(raw)
}

impl Raw {
    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    fn f64(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(section, key).map(|e| parse_f64(e, key)).transpose()
    }

    fn usize(&self, section: &str, key: &str) -> Result<Option<usize>, ConfigError> {
        self.get(section, key)
            .map(|e| {
                let x = parse_f64(e, key)?;
                if x < 0.0 || x.fract() != 0.0 || x > 1e15 {
                    return err(Some(e.line), format!("`{key}` must be a non-negative integer, got `{}`", e.value));
                }
                Ok(x as usize)
            })
            .transpose()
    }

    fn bool(&self, section: &str, key: &str) -> Result<Option<bool>, ConfigError> {
        self.choice(section, key, &[("true", true), ("on", true), ("false", false), ("off", false)])
    }

    fn choice<T: Copy>(&self, section: &str, key: &str, options: &[(&str, T)]) -> Result<Option<T>, ConfigError> {
        let Some(e) = self.get(section, key) else { return Ok(None) };
        match options.iter().find(|(name, _)| *name == e.value) {
            Some((_, v)) => Ok(Some(*v)),
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                err(Some(e.line), format!("invalid `{key}` value `{}`; expected one of {}", e.value, names.join(", ")))
            }
        }
    }

    fn list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(e) = self.get(section, key) else { return Ok(None) };
        e.value
            .split(',')
            .map(|item| {
                let item = item.trim();
                item.parse::<f64>().ok().filter(|x| x.is_finite()).map_or_else(
                    || err(Some(e.line), format!("`{key}`: `{item}` is not a number")),
                    Ok,
                )
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn line(&self, section: &str, key: &str) -> Option<usize> {
        self.get(section, key).map(|e| e.line).or_else(|| self.sections.get(section).copied())
    }
}

fn parse_f64(e: &Entry, key: &str) -> Result<f64, ConfigError> {
    match e.value.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => err(Some(e.line), format!("`{key}` must be a finite number, got `{}`", e.value)),
    }
}

fn range_check(raw: &Raw, section: &str, key: &str, ok: bool, want: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        let v = raw.get(section, key).map_or("", |e| e.value.as_str());
        err(raw.line(section, key), format!("`{key}` = {v} out of range: {want}"))
    }
}

const TASKS: &[(&str, Task)] = &[
    ("rate", Task::Rate),
    ("sweep", Task::Sweep),
    ("reach", Task::Reach),
    ("compare", Task::Compare),
    ("optimize", Task::Optimize),
    ("region", Task::Region),
    ("pa_deviation", Task::PaDeviation),
    ("upper_bound", Task::UpperBound),
    ("attack", Task::Attack),
    ("verify", Task::Verify),
];

const ESTIMATORS: &[(&str, Estimator)] = &[
    ("truth", Estimator::Truth),
    ("nondecoy", Estimator::NonDecoy),
    ("vacuum_weak", Estimator::VacuumWeak),
    ("one_decoy", Estimator::OneDecoy),
    ("lp", Estimator::Lp),
    ("trig_weak", Estimator::TrigWeak),
    ("ayki", Estimator::Ayki),
];

#[derive(Clone, Copy)]
enum Scheme {
    OneWay,
    BSteps,
    Recurrence,
}

const SCHEMES: &[(&str, Scheme)] =
    &[("one_way", Scheme::OneWay), ("b_steps", Scheme::BSteps), ("recurrence", Scheme::Recurrence)];

fn post_process(raw: &Raw, section: &str) -> Result<Option<PostProcess>, ConfigError> {
    let steps = raw.usize(section, "b_steps")?;
    Ok(match raw.choice(section, "scheme", SCHEMES)? {
        None => None,
        Some(Scheme::OneWay) => Some(PostProcess::OneWay),
        Some(Scheme::Recurrence) => Some(PostProcess::Recurrence),
        Some(Scheme::BSteps) => {
            let n = steps.unwrap_or(1);
            range_check(raw, section, "b_steps", n <= qkd_core::twoway::MAX_STEPS, "at most 12 B steps")?;
            Some(PostProcess::BSteps(n))
        }
    })
}

fn params(raw: &Raw) -> Result<ExperimentParams, ConfigError> {
    let mut p = match raw.get("", "preset") {
        Some(e) => preset(&e.value).or_else(|_| {
            err(
                Some(e.line),
                format!("unknown preset `{}`; expected one of {}", e.value, qkd_core::core_model::PRESET_NAMES.join(", ")),
            )
        })?,
        None => {
            for key in ["beta", "eta_bob", "e_detector", "y0_bob"] {
                if raw.get("params", key).is_none() {
                    return err(None, format!("without `preset`, [params] must set `{key}`"));
                }
            }
            ExperimentParams {
                name: "custom".into(),
                wavelength_nm: 1550.0,
                beta: 0.0,
                eta_bob: 0.0,
                eta_alice: 1.0,
                e_detector: 0.0,
                y0_alice: 0.0,
                y0_bob: 0.0,
                q_basis: 0.5,
                f_ec: EcEfficiency::Constant(1.22),
                rep_rate: 1e6,
            }
        }
    };
    let fields: [(&str, &mut f64); 9] = [
        ("wavelength_nm", &mut p.wavelength_nm),
        ("beta", &mut p.beta),
        ("eta_bob", &mut p.eta_bob),
        ("eta_alice", &mut p.eta_alice),
        ("e_detector", &mut p.e_detector),
        ("y0_alice", &mut p.y0_alice),
        ("y0_bob", &mut p.y0_bob),
        ("q_basis", &mut p.q_basis),
        ("rep_rate", &mut p.rep_rate),
    ];
    for (key, slot) in fields {
        if let Some(v) = raw.f64("params", key)? {
            *slot = v;
        }
    }
    if let Some(f) = raw.f64("params", "f_ec")? {
        p.f_ec = EcEfficiency::Constant(f);
    }
    if let Err(e) = p.validate() {
        return err(raw.sections.get("params").copied(), e.to_string());
    }
    Ok(p)
}

fn sweep(raw: &Raw, axis_default: Axis) -> Result<Sweep, ConfigError> {
    let axis = raw.choice("sweep", "axis", &[("km", Axis::Km), ("db", Axis::Db)])?.unwrap_or(axis_default);
    let cutoff = raw.f64("sweep", "cutoff")?.unwrap_or(0.0);
    range_check(raw, "sweep", "cutoff", cutoff >= 0.0, ">= 0")?;
    let points = if let Some(points) = raw.list("sweep", "points")? {
        if raw.get("sweep", "start").is_some() || raw.get("sweep", "stop").is_some() {
            return err(raw.line("sweep", "points"), "give either `points` or `start`/`stop`/`step`");
        }
        points
    } else {
        let start = raw.f64("sweep", "start")?.unwrap_or(0.0);
        let stop = raw.f64("sweep", "stop")?.unwrap_or(start);
        let step = raw.f64("sweep", "step")?.unwrap_or(1.0);
        range_check(raw, "sweep", "step", step > 0.0, "> 0")?;
        if stop < start {
            Vec::new()
        } else {
            let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
            range_check(raw, "sweep", "step", n <= 1_000_000, "at most 1e6 points")?;
            (0..n).map(|k| start + k as f64 * step).collect()
        }
    };
    for (k, &x) in points.iter().enumerate() {
        if x < 0.0 {
            return err(raw.line("sweep", "points").or(raw.line("sweep", "start")), format!("axis value {x} is negative"));
        }
        if k > 0 && x <= points[k - 1] {
            return err(raw.line("sweep", "points"), "sweep points must be strictly increasing");
        }
    }
    Ok(Sweep { axis, points, cutoff })
}

/// Parse configuration text into a validated scenario.
pub fn parse_config(text: &str) -> Result<Scenario, ConfigError> {
    let raw = lex(text)?;
    let params = params(&raw)?;
    let name = raw.get("", "name").map_or_else(|| params.name.clone(), |e| e.value.clone());
    let mut s = Scenario::for_preset("gys").expect("built-in preset");
    s.name = name;
    s.params = params;
    s.task = raw.choice("", "task", TASKS)?.unwrap_or(Task::Sweep);

    s.source = match raw.choice(
        "source",
        "kind",
        &[("coherent", 0), ("triggering", 1), ("entangled", 2)],
    )? {
        None | Some(0) => Source::Coherent,
        Some(1) => Source::Triggering(
            raw.choice("source", "trigger", &[("threshold", TriggerKind::Threshold), ("pnr", TriggerKind::PerfectPnr)])?
                .unwrap_or(TriggerKind::Threshold),
        ),
        Some(_) => Source::Entangled,
    };
    if !matches!(s.source, Source::Triggering(_)) && raw.get("source", "trigger").is_some() {
        return err(raw.line("source", "trigger"), "`trigger` applies to triggering sources only");
    }
    if let Some(n) = raw.usize("source", "n_cut")? {
        range_check(&raw, "source", "n_cut", (2..=200).contains(&n), "between 2 and 200")?;
        s.n_cut = n;
    }

    s.estimator = raw.choice("estimator", "method", ESTIMATORS)?.unwrap_or(Estimator::Truth);
    if let Some(nu) = raw.f64("estimator", "nu")? {
        range_check(&raw, "estimator", "nu", nu > 0.0 && nu < 1.0, "0 < nu < 1")?;
        s.nu = nu;
    }
    s.post = post_process(&raw, "postprocess")?.unwrap_or(PostProcess::OneWay);

    let policy = raw.choice(
        "intensity",
        "policy",
        &[("fixed", 0), ("optimized", 1), ("transmittance", 2)],
    )?;
    let mu = raw.f64("intensity", "mu")?;
    if let Some(m) = mu {
        range_check(&raw, "intensity", "mu", m > 0.0 && m <= 1.0, "0 < mu <= 1")?;
    }
    let lo = raw.f64("intensity", "min")?.unwrap_or(1e-4);
    let hi = raw.f64("intensity", "max")?.unwrap_or(1.0);
    s.mu = match (policy, mu) {
        (Some(0) | None, Some(m)) => MuPolicy::Fixed(m),
        (Some(0), None) => return err(raw.line("intensity", "policy"), "fixed policy needs `mu`"),
        (Some(2), _) => MuPolicy::Transmittance,
        (_, Some(_)) => return err(raw.line("intensity", "mu"), "`mu` is only used by the fixed policy"),
        _ => {
            range_check(&raw, "intensity", "min", lo > 0.0 && lo < hi, "0 < min < max")?;
            range_check(&raw, "intensity", "max", hi <= 1.0, "max <= 1")?;
            MuPolicy::Optimized { lo, hi }
        }
    };

    if raw.has_section("fluctuation") {
        let Some(n_total) = raw.f64("fluctuation", "n_total")? else {
            return err(raw.line("fluctuation", "n_total"), "[fluctuation] needs `n_total`");
        };
        range_check(&raw, "fluctuation", "n_total", n_total >= 1e6, ">= 1e6")?;
        let u = raw.f64("fluctuation", "u")?.unwrap_or(10.0);
        range_check(&raw, "fluctuation", "u", u > 0.0, "> 0")?;
        let signal_fraction = raw.f64("fluctuation", "signal_fraction")?;
        if let Some(fs) = signal_fraction {
            range_check(&raw, "fluctuation", "signal_fraction", fs > 0.0 && fs < 1.0, "0 < fraction < 1")?;
        }
        let log_failure = raw.f64("fluctuation", "log_failure")?.unwrap_or(-50.0);
        range_check(&raw, "fluctuation", "log_failure", log_failure < 0.0, "< 0")?;
        s.fluctuation = Some(Fluctuation { n_total, u, signal_fraction, log_failure });
    }

    let axis_default = if matches!(s.source, Source::Coherent) { Axis::Km } else { Axis::Db };
    s.sweep = sweep(&raw, axis_default)?;
    if !raw.has_section("sweep") && s.sweep.axis == Axis::Db {
        s.sweep.points = (0..=20).map(|k| 2.0 * k as f64).collect();
    } else if !raw.has_section("sweep") {
        s.sweep.points = Scenario::for_preset("gys").expect("built-in preset").sweep.points;
    }

    s.baseline = Baseline {
        post: post_process(&raw, "compare")?,
        estimator: raw.choice("compare", "method", ESTIMATORS)?,
        fluctuation_off: raw.bool("compare", "fluctuation")?.is_some_and(|on| !on),
        reach: raw.bool("compare", "reach")?.unwrap_or(false),
    };
    s.optimize = raw
        .choice(
            "optimize",
            "target",
            &[("mu", OptimizeTarget::Mu), ("allocation", OptimizeTarget::Allocation), ("conditions", OptimizeTarget::Conditions)],
        )?
        .unwrap_or(OptimizeTarget::Mu);
    if let Some(n) = raw.usize("region", "max_steps")? {
        range_check(&raw, "region", "max_steps", n <= qkd_core::twoway::MAX_STEPS, "at most 12")?;
        s.region_max_steps = n;
    }
    if let Some(g) = raw.f64("region", "grid_step")? {
        range_check(&raw, "region", "grid_step", g == 0.0 || (1e-3..=0.5).contains(&g), "0 or in [1e-3, 0.5]")?;
        s.region_grid_step = g;
    }
    if let Some(step) = raw.f64("pa", "step")? {
        range_check(&raw, "pa", "step", step > 1e-7 && step < 0.5, "in (1e-7, 0.5)")?;
        s.pa_step = step;
    }
    if let Some(step) = raw.f64("attack", "step")? {
        range_check(&raw, "attack", "step", (1e-3..=1.0).contains(&step), "in [1e-3, 1]")?;
        s.attack_step = step;
    }
    if let Some(n) = raw.usize("verify", "n_pulses")? {
        range_check(&raw, "verify", "n_pulses", n >= 1000, ">= 1000")?;
        s.verify_pulses = n as u64;
    }
    if let Some(n) = raw.usize("verify", "cases")? {
        range_check(&raw, "verify", "cases", n >= 1, ">= 1")?;
        s.verify_cases = n;
    }
    if let Some(seed) = raw.usize("verify", "seed")? {
        s.seed = seed as u64;
    }

    s.validate().map_err(|e| ConfigError { line: None, message: e.to_string() })?;
    Ok(s)
}
