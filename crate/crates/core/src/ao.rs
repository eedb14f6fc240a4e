//! Alternating optimisation of cluster-1 precoders and RIS phases.
//!
//! Each outer iteration recomputes the ZF precoders for the current phases,
//! then runs RCG on the phases with those precoders held fixed. Cluster 2 is
//! set up first (zero phases, or its own interference-unaware AO) and frozen.

use rand::Rng;

use crate::channel::{trial_rng, ChannelRealization, CorrelationModel};
use crate::geometry::ValidatedConfig;
use crate::precoding::{effective_channel, zf_precoder, PrecoderSet};
use crate::rcg::{
    rcg_optimize, CircleObjective, InitMode, IterationRecord, PhaseVector, RcgOptions, StopReason,
};
use crate::sinr::{
    build_cascades, direct_sinr, CascadeTerms, InterferenceLevels, LinkBudget, LinkState,
    PhaseObjective, Scenario, SinrReport,
};
use crate::{CMatrix, CVector, Error, Result};

/// Slack below which an outer-objective decrease is not reported.
pub const DECREASE_SLACK: f64 = 1e-8;

/// Which objective the cluster-1 optimiser sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Awareness {
    /// Optimises the scenario's own SINR.
    Aware,
    /// Optimises the EIF SINR whatever the true scenario is.
    Unaware,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoOptions {
    /// Stop once `|Obj(t) - Obj(t-1)| <= eta`.
    pub eta: f64,
    pub max_outer_iters: usize,
    pub scenario: Scenario,
    pub awareness: Awareness,
    pub rcg: RcgOptions,
}

impl Default for AoOptions {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            max_outer_iters: 10,
            scenario: Scenario::Eif,
            awareness: Awareness::Aware,
            rcg: RcgOptions {
                max_inner_iters: 20,
                ..RcgOptions::default()
            },
        }
    }
}

impl AoOptions {
    pub fn validate(&self) -> Result<()> {
        if self.eta.is_nan() || self.eta <= 0.0 || self.max_outer_iters == 0 {
            return Err(Error::Config(format!(
                "AO needs eta > 0 and at least one outer iteration, got eta={} max={}",
                self.eta, self.max_outer_iters
            )));
        }
        self.rcg.validate()
    }

    /// Scenario whose objective the optimiser maximises.
    pub fn objective_scenario(&self) -> Scenario {
        match self.awareness {
            Awareness::Aware => self.scenario,
            Awareness::Unaware => Scenario::Eif,
        }
    }
}

/// One trial: channels, correlation models and the cluster budgets.
#[derive(Debug, Clone)]
pub struct TrialInputs<'a> {
    pub realization: &'a ChannelRealization,
    pub correlation: [&'a CorrelationModel; 2],
    /// Cluster-1 powers and weights; `irr_powers` are the cluster-2 powers.
    pub budget: LinkBudget,
    /// Cluster-2 powers and weights for its own EIF optimisation.
    pub cluster2_budget: LinkBudget,
    pub levels: InterferenceLevels,
}

impl<'a> TrialInputs<'a> {
    /// Budgets from a validated configuration: `p_k = P_T / K`, configured weights.
    pub fn from_config(
        cfg: &ValidatedConfig,
        realization: &'a ChannelRealization,
        correlation: [&'a CorrelationModel; 2],
        levels: InterferenceLevels,
    ) -> Self {
        let c1 = cfg.cluster(0);
        let c2 = cfg.cluster(1);
        let noise = cfg.noise_power_w;
        Self {
            realization,
            correlation,
            budget: LinkBudget {
                powers: c1.per_user_power_w(),
                irr_powers: c2.per_user_power_w(),
                weights: c1.weights.clone(),
                noise_power: noise,
            },
            cluster2_budget: LinkBudget {
                powers: c2.per_user_power_w(),
                irr_powers: Vec::new(),
                weights: c2.weights.clone(),
                noise_power: noise,
            },
            levels,
        }
    }

    fn link_state<'b>(
        &'b self,
        cluster2: &'b Cluster2State,
        precoders1: &'b PrecoderSet,
    ) -> LinkState<'b> {
        LinkState {
            realization: self.realization,
            correlation: self.correlation,
            theta2: &cluster2.theta,
            precoders1,
            precoders2: &cluster2.precoders,
            levels: self.levels,
        }
    }
}

/// Frozen cluster-2 phases and precoders.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster2State {
    pub theta: PhaseVector,
    pub precoders: PrecoderSet,
}

fn zf_for(g: &[CVector], theta: &PhaseVector, h: &CMatrix) -> Result<PrecoderSet> {
    zf_precoder(&effective_channel(g, theta, h)?)
}

/// Zero phases with the matching ZF precoders.
pub fn fixed_cluster2(inputs: &TrialInputs<'_>) -> Result<Cluster2State> {
    let c2 = &inputs.realization.clusters[1];
    let theta = PhaseVector::zero_phase(c2.bs_ris.nrows());
    let precoders = zf_for(&c2.ris_ue, &theta, &c2.bs_ris)?;
    Ok(Cluster2State { theta, precoders })
}

/// Interference-unaware AO of cluster 2 on its own EIF objective.
pub fn optimize_cluster2(inputs: &TrialInputs<'_>, opts: &AoOptions) -> Result<Cluster2State> {
    let c2 = &inputs.realization.clusters[1];
    let init = initial_theta(
        opts.rcg.init,
        c2.bs_ris.nrows(),
        inputs.realization.trial,
        None,
    )?;
    let out = run_ao(&c2.ris_ue, &c2.bs_ris, init, opts, |precoders| {
        CascadeTerms::intra(&c2.bs_ris, &c2.ris_ue, precoders)?
            .objective(Scenario::Eif, &inputs.cluster2_budget)
    })?;
    Ok(Cluster2State {
        theta: out.theta,
        precoders: out.precoders,
    })
}

/// First phase vector for a given initialisation mode. `Random` mixes the
/// seed with the trial index; `Given` requires `given`.
pub fn initial_theta(
    mode: InitMode,
    n: usize,
    trial: u64,
    given: Option<&PhaseVector>,
) -> Result<PhaseVector> {
    match mode {
        InitMode::ZeroPhase => Ok(PhaseVector::zero_phase(n)),
        InitMode::Random { seed } => {
            let mut rng = trial_rng(seed, trial);
            let _: u64 = rng.random();
            Ok(PhaseVector::random(n, &mut rng))
        }
        InitMode::Given => match given {
            Some(t) if t.len() == n => Ok(t.clone()),
            Some(t) => Err(Error::Dimension(format!(
                "initial phases have {} entries, expected {n}",
                t.len()
            ))),
            None => Err(Error::Config(
                "InitMode::Given without initial phases".into(),
            )),
        },
    }
}

/// One outer iteration.
#[derive(Debug, Clone)]
pub struct OuterRecord {
    /// 1-based outer counter.
    pub outer_iter: usize,
    /// Objective at the start of the phase update (new precoders, old phases).
    pub start_objective: f64,
    /// Objective after the phase update.
    pub objective: f64,
    pub inner: Vec<IterationRecord>,
    pub stop: StopReason,
}

#[derive(Debug, Clone)]
pub struct AoOutcome {
    /// Best iterate found, with the precoders it was optimised against.
    pub theta: PhaseVector,
    pub precoders: PrecoderSet,
    /// Optimiser objective (natural-log weighted sum rate) at the best iterate.
    pub objective: f64,
    pub trace: Vec<OuterRecord>,
    pub converged: bool,
    /// Outer decreases larger than [`DECREASE_SLACK`].
    pub decreases: usize,
}

fn run_ao<F>(
    g: &[CVector],
    h: &CMatrix,
    init: PhaseVector,
    opts: &AoOptions,
    mut objective: F,
) -> Result<AoOutcome>
where
    F: FnMut(&PrecoderSet) -> Result<PhaseObjective>,
{
    opts.validate()?;
    let mut theta = init;
    let mut trace = Vec::new();
    let mut best: Option<(PhaseVector, PrecoderSet, f64)> = None;
    let mut prev: Option<f64> = None;
    let mut converged = false;
    let mut decreases = 0;
    for t in 1..=opts.max_outer_iters {
        let precoders = zf_for(g, &theta, h)?;
        let obj = objective(&precoders)?;
        let out = rcg_optimize(&obj, theta, &opts.rcg)?;
        theta = out.theta;
        let value = out.objective;
        let reference = prev.unwrap_or(out.initial_objective);
        if value < reference - DECREASE_SLACK {
            decreases += 1;
            log::debug!("AO objective decreased at outer iteration {t}: {reference} -> {value}");
        }
        trace.push(OuterRecord {
            outer_iter: t,
            start_objective: out.initial_objective,
            objective: value,
            inner: out.trace,
            stop: out.stop,
        });
        if best.as_ref().is_none_or(|b| value > b.2) {
            best = Some((theta.clone(), precoders, value));
        }
        prev = Some(value);
        if (value - reference).abs() <= opts.eta {
            converged = true;
            break;
        }
    }
    let (theta, precoders, objective) = best.expect("at least one outer iteration");
    Ok(AoOutcome {
        theta,
        precoders,
        objective,
        trace,
        converged,
        decreases,
    })
}

/// Cluster-1 AO with cluster 2 frozen at `cluster2`.
///
/// Cascade terms that do not depend on the cluster-1 precoders (IRR vectors
/// and EMI matrices) are built once.
pub fn alternate_optimize(
    inputs: &TrialInputs<'_>,
    cluster2: &Cluster2State,
    opts: &AoOptions,
    theta_init: Option<&PhaseVector>,
) -> Result<AoOutcome> {
    let c1 = &inputs.realization.clusters[0];
    let n = c1.bs_ris.nrows();
    let init = initial_theta(opts.rcg.init, n, inputs.realization.trial, theta_init)?;
    let target = opts.objective_scenario();
    let mut base: Option<CascadeTerms> = None;
    run_ao(&c1.ris_ue, &c1.bs_ris, init, opts, |precoders| {
        let terms = match base.as_mut() {
            Some(b) => {
                b.signal = CascadeTerms::intra(&c1.bs_ris, &c1.ris_ue, precoders)?.signal;
                b
            }
            None => base.insert(build_cascades(&inputs.link_state(cluster2, precoders))?),
        };
        terms.objective(target, &inputs.budget)
    })
}

/// Cluster-1 AO started from a previous outcome (typically the unaware
/// optimum). The previous phases and precoders are kept when the new run does
/// not improve on them under `opts`' objective.
pub fn alternate_optimize_from(
    inputs: &TrialInputs<'_>,
    cluster2: &Cluster2State,
    opts: &AoOptions,
    incumbent: &AoOutcome,
) -> Result<AoOutcome> {
    let warm = AoOptions {
        rcg: RcgOptions {
            init: InitMode::Given,
            ..opts.rcg
        },
        ..*opts
    };
    let mut out = alternate_optimize(inputs, cluster2, &warm, Some(&incumbent.theta))?;
    let terms = build_cascades(&inputs.link_state(cluster2, &incumbent.precoders))?;
    let start = terms
        .objective(opts.objective_scenario(), &inputs.budget)?
        .value(incumbent.theta.as_vector());
    if start > out.objective {
        out.theta = incumbent.theta.clone();
        out.precoders = incumbent.precoders.clone();
        out.objective = start;
    }
    Ok(out)
}

/// True-scenario SINR of cluster 1 for given phases and precoders.
pub fn evaluate(
    inputs: &TrialInputs<'_>,
    cluster2: &Cluster2State,
    theta1: &PhaseVector,
    precoders1: &PrecoderSet,
    scenario: Scenario,
) -> Result<SinrReport> {
    direct_sinr(
        &inputs.link_state(cluster2, precoders1),
        theta1,
        scenario,
        &inputs.budget,
    )
}

/// Fixed-phase baseline: zero phases on both RISs and ZF precoders.
pub fn evaluate_fixed(inputs: &TrialInputs<'_>, scenario: Scenario) -> Result<SinrReport> {
    let cluster2 = fixed_cluster2(inputs)?;
    let c1 = &inputs.realization.clusters[0];
    let theta1 = PhaseVector::zero_phase(c1.bs_ris.nrows());
    let precoders1 = zf_for(&c1.ris_ue, &theta1, &c1.bs_ris)?;
    evaluate(inputs, &cluster2, &theta1, &precoders1, scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_realization, ChannelModel};
    use crate::geometry::SystemConfig;

    fn small_config(side: usize) -> ValidatedConfig {
        let mut cfg = SystemConfig::default_scenario();
        for c in &mut cfg.clusters {
            c.ris_side = side;
        }
        cfg.validate().unwrap()
    }

    #[test]
    fn options_validation() {
        assert!(AoOptions::default().validate().is_ok());
        let bad = AoOptions {
            eta: 0.0,
            ..AoOptions::default()
        };
        assert!(bad.validate().is_err());
        let unaware = AoOptions {
            scenario: Scenario::Emi,
            awareness: Awareness::Unaware,
            ..AoOptions::default()
        };
        assert_eq!(unaware.objective_scenario(), Scenario::Eif);
    }

    #[test]
    fn huge_eta_runs_one_outer_iteration() {
        let cfg = small_config(3);
        let model = ChannelModel::new(&cfg).unwrap();
        let real = draw_realization(&model, 0, &mut trial_rng(1, 0));
        let inputs = TrialInputs::from_config(
            &cfg,
            &real,
            [&model.correlation[0], &model.correlation[1]],
            InterferenceLevels::none(),
        );
        let c2 = fixed_cluster2(&inputs).unwrap();
        let opts = AoOptions {
            eta: 1e9,
            ..AoOptions::default()
        };
        let out = alternate_optimize(&inputs, &c2, &opts, None).unwrap();
        assert_eq!(out.trace.len(), 1);
        assert!(out.converged);
    }

    #[test]
    fn optimized_dominates_fixed() {
        let cfg = small_config(4);
        let model = ChannelModel::new(&cfg).unwrap();
        for trial in 0..5 {
            let real = draw_realization(&model, trial, &mut trial_rng(3, trial));
            let inputs = TrialInputs::from_config(
                &cfg,
                &real,
                [&model.correlation[0], &model.correlation[1]],
                InterferenceLevels::none(),
            );
            let fixed = evaluate_fixed(&inputs, Scenario::Eif).unwrap();
            let c2 = fixed_cluster2(&inputs).unwrap();
            let out = alternate_optimize(&inputs, &c2, &AoOptions::default(), None).unwrap();
            let opt = evaluate(&inputs, &c2, &out.theta, &out.precoders, Scenario::Eif).unwrap();
            assert!(opt.sum_rate() >= fixed.sum_rate() - 1e-12);
        }
    }

    #[test]
    fn given_init_requires_phases() {
        assert!(initial_theta(InitMode::Given, 3, 0, None).is_err());
        let t = PhaseVector::from_phases(&[0.1, 0.2]);
        assert!(initial_theta(InitMode::Given, 3, 0, Some(&t)).is_err());
        assert_eq!(initial_theta(InitMode::Given, 2, 0, Some(&t)).unwrap(), t);
        let a = initial_theta(InitMode::Random { seed: 4 }, 5, 1, None).unwrap();
        let b = initial_theta(InitMode::Random { seed: 4 }, 5, 1, None).unwrap();
        assert_eq!(a, b);
    }
}
