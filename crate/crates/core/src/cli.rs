//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::channel::{dump_realization, ChannelModel};
use crate::geometry::SystemConfig;
use crate::harness::{
    config_at, records_from, run_sweep_detailed, write_csv, write_trace, Mode, ScenarioSpec,
    SweepSpec, SweepVariable, TrialOutcome, TrialRunner,
};
use crate::sinr::Scenario;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "risim", version, about = "Two-cluster RIS downlink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep the cluster-1 transmit power (dBm).
    SweepPower(CommonArgs),
    /// Sweep the cluster-1 RIS element count (perfect squares).
    SweepElements(CommonArgs),
    /// Sweep the EMI level (dBm) of the EMI scenarios.
    SweepEmi(CommonArgs),
    /// Run one trial and print per-user SINR and rates.
    SingleTrial(SingleArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Scenario configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Monte Carlo trials per grid point [default: from config].
    #[arg(long)]
    trials: Option<usize>,
    /// Root RNG seed [default: from config].
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated modes: fixed_phase, optimized_unaware, optimized_aware [default: fixed_phase].
    #[arg(long, value_delimiter = ',')]
    mode: Vec<String>,
    /// Comma-separated scenarios, e.g. EIF,IRR,EMI@-65,EMI_IRR@-75.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    scenario: Vec<String>,
    /// Comma-separated grid values [default: from config].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    grid: Vec<f64>,
    /// Output CSV [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the AO trace (single trial, one scenario, one optimised mode).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the channels of trial 0 at each grid point into this directory.
    #[arg(long)]
    dump_channels: Option<PathBuf>,
    /// Add outage columns for every user.
    #[arg(long)]
    per_user_outage: bool,
}

#[derive(Debug, Args)]
struct SingleArgs {
    /// Scenario configuration (JSON) [default: built-in scenario].
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root RNG seed [default: from config].
    #[arg(long)]
    seed: Option<u64>,
    /// Trial index, selecting the RNG stream.
    #[arg(long, default_value_t = 0)]
    trial: u64,
    /// Comma-separated modes [default: fixed_phase].
    #[arg(long, value_delimiter = ',')]
    mode: Vec<String>,
    /// Comma-separated scenarios [default: the six standard curves].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    scenario: Vec<String>,
    /// Write the AO trace CSV (requires one scenario and one optimised mode).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the channel realization into this directory.
    #[arg(long)]
    dump_channels: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(cli.command, &mut out) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            let _ = Cli::command().print_help();
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn run<W: Write>(cmd: Command, out: &mut W) -> std::result::Result<(), Failure> {
    match cmd {
        Command::SweepPower(a) => sweep(SweepVariable::TxPowerDbm, a, out),
        Command::SweepElements(a) => sweep(SweepVariable::RisElements, a, out),
        Command::SweepEmi(a) => sweep(SweepVariable::EmiPowerDbm, a, out),
        Command::SingleTrial(a) => single_trial(a, out),
    }
}

fn parse_modes(raw: &[String]) -> std::result::Result<Vec<Mode>, Failure> {
    if raw.is_empty() {
        return Ok(vec![Mode::FixedPhase]);
    }
    raw.iter()
        .map(|s| s.parse().map_err(|e: Error| usage(e.to_string())))
        .collect()
}

fn parse_scenarios(raw: &[String]) -> std::result::Result<Vec<ScenarioSpec>, Failure> {
    raw.iter()
        .map(|s| s.parse().map_err(|e: Error| usage(e.to_string())))
        .collect()
}

fn default_scenarios(variable: SweepVariable, cfg: &SystemConfig) -> Vec<ScenarioSpec> {
    match variable {
        SweepVariable::EmiPowerDbm => vec![
            ScenarioSpec::new(Scenario::Eif),
            ScenarioSpec::new(Scenario::Emi),
            ScenarioSpec::new(Scenario::EmiIrr),
        ],
        _ => {
            let g = &cfg.sweeps.emi_power_dbm;
            let low = g.iter().cloned().fold(f64::INFINITY, f64::min);
            let high = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if g.is_empty() {
                ScenarioSpec::standard_set(-75.0, -65.0)
            } else {
                ScenarioSpec::standard_set(low, high)
            }
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<SystemConfig> {
    match path {
        Some(p) => SystemConfig::from_path(p),
        None => Ok(SystemConfig::default_scenario()),
    }
}

fn sweep<W: Write>(
    variable: SweepVariable,
    a: CommonArgs,
    out: &mut W,
) -> std::result::Result<(), Failure> {
    let Some(config_path) = a.config.as_deref() else {
        return Err(usage("--config is required for sweeps"));
    };
    if a.trace.is_some() {
        return Err(usage(
            "invalid combination: --trace is only available with single-trial",
        ));
    }
    let modes = parse_modes(&a.mode)?;
    let mut scenarios = parse_scenarios(&a.scenario)?;
    let cfg = load_config(Some(config_path))?;
    if scenarios.is_empty() {
        scenarios = default_scenarios(variable, &cfg);
    }
    let grid = if a.grid.is_empty() {
        variable.default_grid(&cfg)
    } else {
        a.grid
    };
    let mut spec = SweepSpec::new(
        variable,
        grid,
        scenarios,
        a.trials.unwrap_or(cfg.mc_trials),
        a.seed.unwrap_or(cfg.rng_seed),
    );
    spec.modes = modes;
    spec.per_user_outage = a.per_user_outage;
    spec.validate().map_err(|e| usage(e.to_string()))?;

    if let Some(dir) = &a.dump_channels {
        for (idx, value) in spec.grid.iter().enumerate() {
            let vcfg = config_at(&cfg, variable, *value)?.validate()?;
            let model = ChannelModel::new(&vcfg)?;
            let runner = TrialRunner {
                cfg: &vcfg,
                model: &model,
                ao: spec.ao,
                sweep_emi_dbm: None,
            };
            dump_realization(
                &runner.draw(spec.seed, 0),
                &dir.join(format!("point_{idx}")),
            )?;
        }
    }

    let points = run_sweep_detailed(&spec, &cfg)?;
    let records = records_from(&points, cfg.rate_threshold_bps_hz)?;
    match &a.out {
        Some(path) => {
            let mut buf = Vec::new();
            write_csv(&mut buf, &records, spec.per_user_outage)?;
            std::fs::write(path, buf).map_err(Error::from)?;
        }
        None => write_csv(out, &records, spec.per_user_outage)?,
    }
    Ok(())
}

fn single_trial<W: Write>(a: SingleArgs, out: &mut W) -> std::result::Result<(), Failure> {
    let modes = parse_modes(&a.mode)?;
    let mut scenarios = parse_scenarios(&a.scenario)?;
    let cfg = load_config(a.config.as_deref())?;
    if scenarios.is_empty() {
        scenarios = default_scenarios(SweepVariable::TxPowerDbm, &cfg);
    }
    if a.trace.is_some() && (scenarios.len() != 1 || modes.len() != 1 || !modes[0].is_optimized()) {
        return Err(usage(
            "invalid combination: --trace needs exactly one scenario and one optimized mode",
        ));
    }
    let seed = a.seed.unwrap_or(cfg.rng_seed);
    let vcfg = cfg.validate()?;
    let model = ChannelModel::new(&vcfg)?;
    let runner = TrialRunner {
        cfg: &vcfg,
        model: &model,
        ao: Default::default(),
        sweep_emi_dbm: None,
    };
    let real = runner.draw(seed, a.trial);
    if let Some(dir) = &a.dump_channels {
        dump_realization(&real, dir)?;
    }
    let cells: Vec<(ScenarioSpec, Mode)> = scenarios
        .iter()
        .flat_map(|s| modes.iter().map(move |m| (*s, *m)))
        .collect();
    let detail = runner.run(&real, &cells)?;
    let emit = |out: &mut W| -> std::io::Result<()> {
        writeln!(out, "seed,trial,scenario,mode,sum_rate_bps_hz,rates_bps_hz")?;
        for ((spec, mode), o) in cells.iter().zip(&detail.outcomes) {
            match o {
                TrialOutcome::Valid { sum_rate, rates } => {
                    let r: Vec<String> = rates.iter().map(|x| x.to_string()).collect();
                    writeln!(
                        out,
                        "{seed},{},{spec},{mode},{sum_rate},{}",
                        a.trial,
                        r.join(" ")
                    )?;
                }
                TrialOutcome::Skipped => {
                    writeln!(out, "{seed},{},{spec},{mode},skipped,", a.trial)?
                }
            }
        }
        Ok(())
    };
    emit(out).map_err(Error::from)?;
    if let Some(path) = &a.trace {
        let Some(ao) = detail.ao.first().and_then(|t| t.as_ref()) else {
            return Err(Failure::Runtime(Error::Config(
                "trial was skipped; no trace to write".into(),
            )));
        };
        let mut buf = Vec::new();
        write_trace(&mut buf, a.trial, ao)?;
        std::fs::write(path, buf).map_err(Error::from)?;
    }
    Ok(())
}
