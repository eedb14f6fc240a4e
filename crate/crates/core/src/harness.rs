//! Seeded Monte Carlo sweeps over transmit power, RIS size or EMI power.
//!
//! Every trial draws one channel realization (its own RNG stream) that is
//! shared by all scenarios and modes at that grid point, so scenario
//! differences are paired. Trials run in parallel and are reduced in index
//! order, which keeps the output independent of scheduling.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::ao::{
    alternate_optimize, alternate_optimize_from, evaluate, evaluate_fixed, optimize_cluster2,
    AoOptions, AoOutcome, Awareness, Cluster2State, TrialInputs,
};
use crate::channel::{draw_realization, trial_rng, ChannelModel, ChannelRealization};
use crate::geometry::{SystemConfig, ValidatedConfig};
use crate::sinr::{InterferenceLevels, Scenario, SinrReport};
use crate::{dbm_to_watts, Error, Result};

/// Exact CSV header of [`write_csv`] without per-user columns.
pub const CSV_HEADER: &str =
    "sweep_value,scenario,mode,mean_sum_rate_bps_hz,outage_user1,trials,skipped";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// Cluster-1 BS transmit power in dBm.
    TxPowerDbm,
    /// Cluster-1 RIS element count `L^2`.
    RisElements,
    /// EMI level `A sigma^2` in dBm for the EMI scenarios.
    EmiPowerDbm,
}

impl SweepVariable {
    pub fn label(self) -> &'static str {
        match self {
            SweepVariable::TxPowerDbm => "tx_power_dbm",
            SweepVariable::RisElements => "ris_elements",
            SweepVariable::EmiPowerDbm => "emi_power_dbm",
        }
    }

    /// Default grid stored in the configuration.
    pub fn default_grid(self, cfg: &SystemConfig) -> Vec<f64> {
        match self {
            SweepVariable::TxPowerDbm => cfg.sweeps.tx_power_dbm.clone(),
            SweepVariable::RisElements => cfg.sweeps.ris_elements.clone(),
            SweepVariable::EmiPowerDbm => cfg.sweeps.emi_power_dbm.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    FixedPhase,
    OptimizedUnaware,
    OptimizedAware,
}

impl Mode {
    pub const ALL: [Mode; 3] = [
        Mode::FixedPhase,
        Mode::OptimizedUnaware,
        Mode::OptimizedAware,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Mode::FixedPhase => "fixed_phase",
            Mode::OptimizedUnaware => "optimized_unaware",
            Mode::OptimizedAware => "optimized_aware",
        }
    }

    pub fn is_optimized(self) -> bool {
        self != Mode::FixedPhase
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "fixed_phase" | "fixed" => Ok(Mode::FixedPhase),
            "optimized_unaware" | "unaware" => Ok(Mode::OptimizedUnaware),
            "optimized_aware" | "aware" => Ok(Mode::OptimizedAware),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

/// A scenario with an optional EMI level, written `EMI@-65` or `EMI_IRR@-75`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub emi_dbm: Option<f64>,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            emi_dbm: None,
        }
    }

    pub fn with_emi(scenario: Scenario, dbm: f64) -> Self {
        Self {
            scenario,
            emi_dbm: Some(dbm),
        }
    }

    pub fn label(&self) -> String {
        match self.emi_dbm {
            Some(l) if self.scenario.has_emi() => format!("{}@{}", self.scenario, l),
            _ => self.scenario.label().to_string(),
        }
    }

    /// The six fixed-phase curves: EIF, IRR and EMI / EMI_IRR at two levels.
    pub fn standard_set(low_dbm: f64, high_dbm: f64) -> Vec<ScenarioSpec> {
        vec![
            Self::new(Scenario::Eif),
            Self::new(Scenario::Irr),
            Self::with_emi(Scenario::Emi, low_dbm),
            Self::with_emi(Scenario::Emi, high_dbm),
            Self::with_emi(Scenario::EmiIrr, low_dbm),
            Self::with_emi(Scenario::EmiIrr, high_dbm),
        ]
    }

    /// EMI levels in watts. A sweep level overrides the spec's own level,
    /// which overrides the per-cluster configured levels.
    fn levels(
        &self,
        cfg: &ValidatedConfig,
        sweep_emi_dbm: Option<f64>,
    ) -> Result<InterferenceLevels> {
        let mut lv = InterferenceLevels {
            emi_self_factor: cfg.config().emi_self_factor,
            ..InterferenceLevels::none()
        };
        if !self.scenario.has_emi() {
            return Ok(lv);
        }
        match sweep_emi_dbm.or(self.emi_dbm) {
            Some(dbm) => {
                lv.emi1_w = dbm_to_watts(dbm);
                lv.emi2_w = lv.emi1_w;
            }
            None => {
                lv.emi1_w = cfg.cluster(0).emi_power_w;
                lv.emi2_w = cfg.cluster(1).emi_power_w;
                if lv.emi1_w == 0.0 {
                    return Err(Error::Config(format!(
                        "scenario {} needs an EMI level (EMI@<dBm> or a configured emi_power_dbm)",
                        self.scenario
                    )));
                }
            }
        }
        Ok(lv)
    }
}

impl fmt::Display for ScenarioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for ScenarioSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, level) = match s.split_once('@') {
            Some((n, l)) => {
                let v: f64 = l
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad EMI level in {s:?}")))?;
                (n, Some(v))
            }
            None => (s, None),
        };
        let scenario: Scenario = name.trim().parse()?;
        if level.is_some() && !scenario.has_emi() {
            return Err(Error::Config(format!(
                "scenario {scenario} takes no EMI level"
            )));
        }
        Ok(Self {
            scenario,
            emi_dbm: level,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub scenarios: Vec<ScenarioSpec>,
    pub modes: Vec<Mode>,
    pub trials: usize,
    pub seed: u64,
    /// Template for the optimised modes; scenario and awareness are set per cell.
    pub ao: AoOptions,
    /// Adds `outage_user2..K` columns to the CSV.
    pub per_user_outage: bool,
}

impl SweepSpec {
    pub fn new(
        variable: SweepVariable,
        grid: Vec<f64>,
        scenarios: Vec<ScenarioSpec>,
        trials: usize,
        seed: u64,
    ) -> Self {
        Self {
            variable,
            grid,
            scenarios,
            modes: vec![Mode::FixedPhase],
            trials,
            seed,
            ao: AoOptions::default(),
            per_user_outage: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.scenarios.is_empty() || self.modes.is_empty() {
            return Err(Error::Config(
                "at least one scenario and one mode are required".into(),
            ));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep grid values must be finite".into()));
        }
        if self.variable == SweepVariable::RisElements {
            for v in &self.grid {
                side_of(*v)?;
            }
        }
        if self.modes.iter().any(|m| m.is_optimized()) {
            self.ao.validate()?;
        }
        Ok(())
    }
}

fn side_of(elements: f64) -> Result<usize> {
    let side = elements.sqrt().round();
    if side < 1.0 || side * side != elements {
        return Err(Error::Config(format!(
            "RIS element count {elements} is not a perfect square"
        )));
    }
    Ok(side as usize)
}

/// Configuration at one grid point.
pub fn config_at(cfg: &SystemConfig, variable: SweepVariable, value: f64) -> Result<SystemConfig> {
    let mut out = cfg.clone();
    match variable {
        SweepVariable::TxPowerDbm => out.clusters[0].tx_power_dbm = value,
        SweepVariable::RisElements => out.clusters[0].ris_side = side_of(value)?,
        SweepVariable::EmiPowerDbm => {}
    }
    Ok(out)
}

/// Result of one trial for one scenario and mode.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Valid {
        sum_rate: f64,
        rates: Vec<f64>,
    },
    /// Degenerate ZF or non-finite objective.
    Skipped,
}

impl TrialOutcome {
    pub fn from_report(report: &SinrReport) -> Self {
        TrialOutcome::Valid {
            sum_rate: report.sum_rate(),
            rates: report.rates.clone(),
        }
    }

    pub fn sum_rate(&self) -> Option<f64> {
        match self {
            TrialOutcome::Valid { sum_rate, .. } => Some(*sum_rate),
            TrialOutcome::Skipped => None,
        }
    }
}

/// Aggregated metrics of one grid point, scenario and mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub sweep_value: f64,
    pub scenario: String,
    pub mode: Mode,
    pub mean_sum_rate: f64,
    /// Standard error of the mean sum rate.
    pub sum_rate_std_error: f64,
    /// Fraction of valid trials with `rate_k < R_TH`, per user.
    pub outage: Vec<f64>,
    /// Valid trials.
    pub trials: usize,
    pub skipped: usize,
    /// Wall time of the whole grid point, seconds.
    pub wall_time_s: f64,
    /// `false` when every trial was skipped.
    pub valid: bool,
}

/// Mean sum rate, its standard error and per-user outage over valid trials.
pub fn aggregate(
    sweep_value: f64,
    scenario: &str,
    mode: Mode,
    outcomes: &[TrialOutcome],
    rate_threshold: f64,
) -> Result<MetricRecord> {
    let valid: Vec<(&f64, &Vec<f64>)> = outcomes
        .iter()
        .filter_map(|o| match o {
            TrialOutcome::Valid { sum_rate, rates } => Some((sum_rate, rates)),
            TrialOutcome::Skipped => None,
        })
        .collect();
    let n = valid.len();
    if n == 0 {
        return Err(Error::NoValidTrials {
            point: sweep_value,
            scenario: scenario.to_string(),
            mode: mode.label().to_string(),
        });
    }
    let mean = valid.iter().map(|(s, _)| **s).sum::<f64>() / n as f64;
    let std_error = if n > 1 {
        let var = valid.iter().map(|(s, _)| (**s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    let users = valid.iter().map(|(_, r)| r.len()).max().unwrap_or(0);
    let outage = (0..users)
        .map(|k| {
            let hits = valid
                .iter()
                .filter(|(_, r)| r.get(k).is_some_and(|x| *x < rate_threshold))
                .count();
            hits as f64 / n as f64
        })
        .collect();
    Ok(MetricRecord {
        sweep_value,
        scenario: scenario.to_string(),
        mode,
        mean_sum_rate: mean,
        sum_rate_std_error: std_error,
        outage,
        trials: n,
        skipped: outcomes.len() - n,
        wall_time_s: 0.0,
        valid: true,
    })
}

/// Per-trial outcomes of one grid point, `outcomes[cell][trial]` with cells
/// ordered scenario-major over `cells`.
#[derive(Debug, Clone)]
pub struct PointOutcomes {
    pub sweep_value: f64,
    pub cells: Vec<(ScenarioSpec, Mode)>,
    pub outcomes: Vec<Vec<TrialOutcome>>,
    pub wall_time_s: f64,
}

impl PointOutcomes {
    pub fn cell(&self, scenario: &ScenarioSpec, mode: Mode) -> Option<&[TrialOutcome]> {
        self.cells
            .iter()
            .position(|(s, m)| s == scenario && *m == mode)
            .map(|i| self.outcomes[i].as_slice())
    }
}

/// Runs every cell of one trial on a shared channel realization.
///
/// Cluster 2 is optimised once per trial. Cluster 1 is optimised in two
/// stages: an EIF run from zero phases, shared by every scenario, then a
/// warm-started continuation on the objective of the mode (EIF when unaware,
/// the scenario's own when aware). Both modes get the same iteration budget
/// and the same starting point, so their results differ only through the
/// objective the optimiser sees.
pub struct TrialRunner<'a> {
    pub cfg: &'a ValidatedConfig,
    pub model: &'a ChannelModel,
    pub ao: AoOptions,
    pub sweep_emi_dbm: Option<f64>,
}

/// Trial result plus the optional AO traces of optimised cells.
pub struct TrialDetail {
    pub outcomes: Vec<TrialOutcome>,
    pub ao: Vec<Option<AoOutcome>>,
}

fn skippable(e: &Error) -> bool {
    matches!(e, Error::ZfDegenerate(_) | Error::NonFiniteObjective { .. })
}

fn soft<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if skippable(&e) => {
            log::debug!("trial skipped: {e}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

impl TrialRunner<'_> {
    pub fn draw(&self, seed: u64, trial: u64) -> ChannelRealization {
        draw_realization(self.model, trial, &mut trial_rng(seed, trial))
    }

    fn inputs<'b>(
        &'b self,
        real: &'b ChannelRealization,
        spec: &ScenarioSpec,
    ) -> Result<TrialInputs<'b>> {
        let levels = spec.levels(self.cfg, self.sweep_emi_dbm)?;
        Ok(TrialInputs::from_config(
            self.cfg,
            real,
            [&self.model.correlation[0], &self.model.correlation[1]],
            levels,
        ))
    }

    pub fn run(
        &self,
        real: &ChannelRealization,
        cells: &[(ScenarioSpec, Mode)],
    ) -> Result<TrialDetail> {
        let mut outcomes = Vec::with_capacity(cells.len());
        let mut traces = Vec::with_capacity(cells.len());
        // cluster 2 and the unaware cluster-1 optimum do not depend on the scenario
        let mut cluster2: Option<Option<Cluster2State>> = None;
        let mut stage_one: Option<Option<AoOutcome>> = None;
        let mut unaware: Option<Option<AoOutcome>> = None;
        for (spec, mode) in cells {
            let inputs = self.inputs(real, spec)?;
            let (outcome, trace) = match mode {
                Mode::FixedPhase => (soft(evaluate_fixed(&inputs, spec.scenario))?, None),
                Mode::OptimizedUnaware | Mode::OptimizedAware => {
                    if cluster2.is_none() {
                        cluster2 = Some(soft(optimize_cluster2(&inputs, &self.ao))?);
                    }
                    let Some(c2) = cluster2.as_ref().and_then(|c| c.as_ref()) else {
                        outcomes.push(TrialOutcome::Skipped);
                        traces.push(None);
                        continue;
                    };
                    let eif_opts = AoOptions {
                        scenario: Scenario::Eif,
                        awareness: Awareness::Unaware,
                        ..self.ao
                    };
                    if stage_one.is_none() {
                        stage_one = Some(soft(alternate_optimize(&inputs, c2, &eif_opts, None))?);
                    }
                    let Some(start) = stage_one.clone().flatten() else {
                        outcomes.push(TrialOutcome::Skipped);
                        traces.push(None);
                        continue;
                    };
                    let ao = if *mode == Mode::OptimizedAware && spec.scenario != Scenario::Eif {
                        let opts = AoOptions {
                            scenario: spec.scenario,
                            awareness: Awareness::Aware,
                            ..self.ao
                        };
                        soft(alternate_optimize_from(&inputs, c2, &opts, &start))?
                    } else {
                        if unaware.is_none() {
                            unaware = Some(soft(alternate_optimize_from(
                                &inputs, c2, &eif_opts, &start,
                            ))?);
                        }
                        unaware.clone().flatten()
                    };
                    match ao {
                        Some(out) => {
                            let report = soft(evaluate(
                                &inputs,
                                c2,
                                &out.theta,
                                &out.precoders,
                                spec.scenario,
                            ))?;
                            (report, Some(out))
                        }
                        None => (None, None),
                    }
                }
            };
            outcomes.push(outcome.map_or(TrialOutcome::Skipped, |r| TrialOutcome::from_report(&r)));
            traces.push(trace);
        }
        Ok(TrialDetail {
            outcomes,
            ao: traces,
        })
    }
}

/// Runs every grid point and returns per-trial outcomes.
pub fn run_sweep_detailed(spec: &SweepSpec, cfg: &SystemConfig) -> Result<Vec<PointOutcomes>> {
    spec.validate()?;
    let cells: Vec<(ScenarioSpec, Mode)> = spec
        .scenarios
        .iter()
        .flat_map(|s| spec.modes.iter().map(move |m| (*s, *m)))
        .collect();
    let mut points = Vec::with_capacity(spec.grid.len());
    for &value in &spec.grid {
        let start = Instant::now();
        let vcfg = config_at(cfg, spec.variable, value)?.validate()?;
        let model = ChannelModel::new(&vcfg)?;
        let runner = TrialRunner {
            cfg: &vcfg,
            model: &model,
            ao: spec.ao,
            sweep_emi_dbm: (spec.variable == SweepVariable::EmiPowerDbm).then_some(value),
        };
        let per_trial: Vec<Vec<TrialOutcome>> = (0..spec.trials as u64)
            .into_par_iter()
            .map(|t| {
                runner
                    .run(&runner.draw(spec.seed, t), &cells)
                    .map(|d| d.outcomes)
            })
            .collect::<Result<_>>()?;
        let outcomes = (0..cells.len())
            .map(|c| per_trial.iter().map(|row| row[c].clone()).collect())
            .collect();
        points.push(PointOutcomes {
            sweep_value: value,
            cells: cells.clone(),
            outcomes,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok(points)
}

/// Aggregates detailed outcomes. A cell whose trials were all skipped yields
/// a record with `valid = false` and NaN metrics.
pub fn records_from(points: &[PointOutcomes], rate_threshold: f64) -> Result<Vec<MetricRecord>> {
    let mut records = Vec::new();
    for p in points {
        for ((scenario, mode), outs) in p.cells.iter().zip(&p.outcomes) {
            let label = scenario.label();
            let mut rec = match aggregate(p.sweep_value, &label, *mode, outs, rate_threshold) {
                Ok(r) => r,
                Err(Error::NoValidTrials { .. }) => {
                    log::warn!("no valid trials at {} for {label} / {mode}", p.sweep_value);
                    MetricRecord {
                        sweep_value: p.sweep_value,
                        scenario: label,
                        mode: *mode,
                        mean_sum_rate: f64::NAN,
                        sum_rate_std_error: f64::NAN,
                        outage: Vec::new(),
                        trials: 0,
                        skipped: outs.len(),
                        wall_time_s: 0.0,
                        valid: false,
                    }
                }
                Err(e) => return Err(e),
            };
            rec.wall_time_s = p.wall_time_s;
            records.push(rec);
        }
    }
    Ok(records)
}

/// One record per grid point, scenario and mode, in that nesting order.
pub fn run_sweep(spec: &SweepSpec, cfg: &SystemConfig) -> Result<Vec<MetricRecord>> {
    let points = run_sweep_detailed(spec, cfg)?;
    records_from(&points, cfg.rate_threshold_bps_hz)
}

/// Writes records as CSV. Wall time is left out so that output is
/// reproducible byte for byte.
pub fn write_csv<W: Write>(
    out: &mut W,
    records: &[MetricRecord],
    per_user_outage: bool,
) -> Result<()> {
    let extra = if per_user_outage {
        records
            .iter()
            .map(|r| r.outage.len())
            .max()
            .unwrap_or(1)
            .max(1)
    } else {
        1
    };
    write!(out, "{CSV_HEADER}")?;
    for k in 2..=extra {
        write!(out, ",outage_user{k}")?;
    }
    writeln!(out)?;
    for r in records {
        let outage = |k: usize| r.outage.get(k).map_or("nan".to_string(), |v| v.to_string());
        write!(
            out,
            "{},{},{},{},{},{},{}",
            r.sweep_value,
            r.scenario,
            r.mode,
            r.mean_sum_rate,
            outage(0),
            r.trials,
            r.skipped
        )?;
        for k in 1..extra {
            write!(out, ",{}", outage(k))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_csv_file(path: &Path, records: &[MetricRecord], per_user_outage: bool) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(&mut f, records, per_user_outage)?;
    f.flush()?;
    Ok(())
}

/// Header of [`write_trace`].
pub const TRACE_HEADER: &str = "trial,outer_iter,inner_iter,objective,grad_norm,step";

/// One row per accepted RCG iteration of every outer iteration. Each outer
/// iteration also gets an `inner_iter = 0` row holding its starting objective.
pub fn write_trace<W: Write>(out: &mut W, trial: u64, ao: &AoOutcome) -> Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for o in &ao.trace {
        writeln!(out, "{trial},{},0,{},,", o.outer_iter, o.start_objective)?;
        for it in &o.inner {
            writeln!(
                out,
                "{trial},{},{},{},{},{}",
                o.outer_iter, it.iter, it.objective, it.grad_norm, it.step
            )?;
        }
    }
    Ok(())
}
