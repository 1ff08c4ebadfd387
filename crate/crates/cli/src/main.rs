use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qkd_cli::scenario::{OptimizeTarget, Task};
use qkd_cli::{emit_csv, load_scenario, run_scenario, CliError, Report, Scenario};
use qkd_cli::{EXIT_CHECK_FAILED, EXIT_INSECURE, EXIT_VALIDATION};

#[derive(Parser)]
#[command(name = "qkdsim", version, about = "Decoy-state QKD key-rate scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task named in the scenario file.
    Run(Common),
    /// Rate at the first axis point.
    Rate(Common),
    /// Rate over the sweep points.
    Sweep(Common),
    /// Largest axis value with rate above the cutoff.
    Reach(Common),
    /// Optimise mu, the pulse allocation, or report the closed-form optima.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// mu | allocation | conditions (overrides the scenario).
        #[arg(long)]
        target: Option<String>,
    },
    /// Two-way tolerable region: thresholds or a grid map.
    Region(Common),
    /// Time-shift attack table.
    Attack(Common),
    /// Self-check suite including the Monte Carlo agreement grid.
    Verify(Common),
    /// List the built-in parameter presets.
    Presets,
}

#[derive(Args)]
struct Common {
    /// Scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset to use when no scenario file is given.
    #[arg(long)]
    preset: Option<String>,
    /// CSV destination; CSV goes to stdout and the summary to stderr otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the verification suite.
    #[arg(long)]
    seed: Option<u64>,
    /// Rate cutoff for reach searches and secure-point counts.
    #[arg(long)]
    cutoff: Option<f64>,
    /// Worker threads for sweep points.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn scenario(c: &Common, task: Option<Task>) -> Result<Scenario, CliError> {
    let mut s = match (&c.config, &c.preset) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give --config or --preset, not both".into())),
        (Some(path), None) => load_scenario(path)?,
        (None, Some(name)) => Scenario::for_preset(name).map_err(|e| CliError::Usage(e.to_string()))?,
        (None, None) => return Err(CliError::Usage("a scenario needs --config PATH or --preset NAME".into())),
    };
    if c.preset.is_some() && matches!(s.params.name.as_str(), "pdc144") {
        s.source = qkd_cli::scenario::Source::Triggering(qkd_core::pdc_model::TriggerKind::Threshold);
        s.sweep.axis = qkd_core::optimize::Axis::Db;
        s.sweep.points = (0..=20).map(|k| 2.0 * k as f64).collect();
    }
    if let Some(t) = task {
        s.task = t;
    }
    if let Some(seed) = c.seed {
        s.seed = seed;
    }
    if let Some(cut) = c.cutoff {
        if !(cut >= 0.0) {
            return Err(CliError::Usage(format!("--cutoff {cut} must be >= 0")));
        }
        s.sweep.cutoff = cut;
    }
    if c.jobs == 0 {
        return Err(CliError::Usage("--jobs must be >= 1".into()));
    }
    s.validate().map_err(|e| CliError::Scenario { name: s.name.clone(), source: e })?;
    Ok(s)
}

fn emit(report: &Report, out: Option<&PathBuf>) -> Result<(), CliError> {
    let summary: String =
        report.summary.iter().map(|(k, v)| format!("{k} = {v}\n")).collect::<String>();
    match out {
        Some(path) => {
            emit_csv(&report.table, path)?;
            print!("# {}\n{summary}", report.name);
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            let io = |e: std::io::Error| CliError::Io { path: "<stdout>".into(), source: e };
            report.table.write_csv(&mut lock).map_err(|e| io(e.into()))?;
            lock.flush().map_err(io)?;
            eprint!("# {}\n{summary}", report.name);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let (common, task, target) = match cli.command {
        Command::Presets => {
            for name in qkd_core::core_model::PRESET_NAMES {
                let p = qkd_core::core_model::preset(name).map_err(|e| CliError::Usage(e.to_string()))?;
                println!(
                    "{name}: wavelength {} nm, beta {} dB/km, eta_bob {}, eta_alice {}, e_d {}, y0_bob {:e}, f_ec {}, rep_rate {:e}",
                    p.wavelength_nm, p.beta, p.eta_bob, p.eta_alice, p.e_detector, p.y0_bob, p.f_ec.at(p.e_detector), p.rep_rate
                );
            }
            return Ok(0);
        }
        Command::Run(c) => (c, None, None),
        Command::Rate(c) => (c, Some(Task::Rate), None),
        Command::Sweep(c) => (c, Some(Task::Sweep), None),
        Command::Reach(c) => (c, Some(Task::Reach), None),
        Command::Optimize { common, target } => (common, Some(Task::Optimize), target),
        Command::Region(c) => (c, Some(Task::Region), None),
        Command::Attack(c) => (c, Some(Task::Attack), None),
        Command::Verify(c) => (c, Some(Task::Verify), None),
    };
    let mut s = scenario(&common, task)?;
    if let Some(t) = target {
        s.optimize = match t.as_str() {
            "mu" => OptimizeTarget::Mu,
            "allocation" => OptimizeTarget::Allocation,
            "conditions" => OptimizeTarget::Conditions,
            other => return Err(CliError::Usage(format!("unknown --target `{other}`; expected mu, allocation, conditions"))),
        };
    }
    let report = run_scenario(&s, common.jobs)?;
    emit(&report, common.out.as_ref())?;
    Ok(if report.check_failed {
        EXIT_CHECK_FAILED
    } else if report.insecure_everywhere {
        EXIT_INSECURE
    } else {
        0
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION as u8)
        }
    }
}
