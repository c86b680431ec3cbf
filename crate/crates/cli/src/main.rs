use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epmem::runner::{
    csv_string, load_config, preset, presets, run_divisibility, run_trace, run_verify,
    write_outputs, InitialState, RunReport, Scenario, StateName, VerifyOptions, PRESET_NAMES,
};
use epmem::Error;

#[derive(Parser)]
#[command(
    name = "epmem",
    version,
    about = "Entropy production and memory effects for a qubit coupled to one bosonic mode"
)]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Entropy-production time series for one initial state.
    Trace(RunArgs),
    /// Divisibility flags, σ^fp_min and σ_map on the time grid.
    Divisibility(RunArgs),
    /// Invariant and theorem suite; exit status 1 if any check fails.
    Verify(VerifyArgs),
    /// List the shipped presets.
    Presets,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// fig1, fig2 or fig4.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// TOML file with [scenario], [system], [numerics], [output] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Final time in units of 1/ω_A.
    #[arg(long)]
    tmax: Option<f64>,
    /// Number of time steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Resolution of the initial-state grid used for σ^fp_min.
    #[arg(long)]
    grid: Option<usize>,
    /// Start from a thermal qubit at inverse temperature ω_Aβ_A.
    #[arg(long = "beta-a")]
    beta_a: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// CSV path; a JSON manifest is written next to it. Default: CSV on stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Random rate sets for the theorem fuzz (run when no scenario is given).
    #[arg(long, default_value_t = 10_000)]
    fuzz: usize,
    /// Random initial states for the master-equation comparison.
    #[arg(long, default_value_t = 20)]
    me_states: usize,
    /// Classify divisibility with γ₂ sign-flipped (mutation check).
    #[arg(long)]
    flip_gamma2: bool,
    /// Write the check list as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn scenario(a: &ScenarioArgs, default: Option<&str>) -> Result<Option<Scenario>, Error> {
    let mut s = match (&a.preset, &a.config, default) {
        (Some(p), _, _) => preset(p)?,
        (None, Some(path), _) => load_config(path)?,
        (None, None, Some(d)) => preset(d)?,
        (None, None, None) => return Ok(None),
    };
    if let Some(t) = a.tmax {
        s.cfg.t_max = t;
    }
    if let Some(n) = a.steps {
        s.cfg.n_steps = n;
    }
    if let Some(n) = a.grid {
        s.cfg.state_grid = n;
    }
    if let Some(b) = a.beta_a {
        s.params.beta_a = Some(b);
        s.initial_state = InitialState::Named(StateName::Thermal);
    }
    s.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(Some(s))
}

fn emit(report: &RunReport, out: &Option<PathBuf>) -> Result<(), Error> {
    match out {
        Some(path) => {
            let m = write_outputs(report, path)?;
            eprintln!(
                "wrote {} rows to {} and {} ({:.1} s)",
                report.rows.len(),
                path.display(),
                m.display(),
                report.wall_time
            );
        }
        None => print!("{}", csv_string(report)),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.cmd {
        Command::Presets => {
            for s in presets() {
                let p = &s.params;
                println!(
                    "{:<5} omega_b={} g={} beta_a={} beta_b={} t_max={} (gt_max={})",
                    s.name,
                    p.omega_b,
                    p.g,
                    p.beta_a.map_or("unset".into(), |b| b.to_string()),
                    p.beta_b,
                    s.cfg.t_max,
                    s.cfg.t_max * p.g
                );
            }
            Ok(true)
        }
        Command::Trace(a) => {
            let s = scenario(&a.scenario, None)?
                .ok_or_else(|| Error::Config("give --preset or --config".into()))?;
            emit(&run_trace(&s)?, &a.out)?;
            Ok(true)
        }
        Command::Divisibility(a) => {
            let s = scenario(&a.scenario, None)?
                .ok_or_else(|| Error::Config("give --preset or --config".into()))?;
            emit(&run_divisibility(&s)?, &a.out)?;
            Ok(true)
        }
        Command::Verify(a) => {
            let opts = VerifyOptions {
                fuzz_samples: a.fuzz,
                me_states: a.me_states,
                flip_gamma2: a.flip_gamma2,
                ..VerifyOptions::default()
            };
            let all = a.scenario.preset.as_deref() == Some("all");
            let report = if all || (a.scenario.preset.is_none() && a.scenario.config.is_none()) {
                let mut list = Vec::new();
                for name in PRESET_NAMES {
                    let sa = ScenarioArgs {
                        preset: Some(name.into()),
                        config: None,
                        ..a.scenario.clone()
                    };
                    list.extend(scenario(&sa, None)?);
                }
                run_verify("all", &list, true, &opts)
            } else {
                let s = scenario(&a.scenario, None)?.expect("preset or config given");
                run_verify(&s.name.clone(), &[s], false, &opts)
            };
            print!("{}", report.scoreboard());
            if let Some(path) = &a.out {
                let text = serde_json::to_string_pretty(&report).expect("report serialises");
                std::fs::write(path, text + "\n")?;
            }
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ (Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidState(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
