//! Riemannian conjugate gradient ascent on the complex circle manifold
//! `{theta in C^n : |theta_l| = 1}`.
//!
//! The manifold is treated as a Riemannian submanifold of C^n viewed as
//! R^2n, with inner product `Re{x^H y}`. Tangent vectors at `theta` satisfy
//! `Re{v_l conj(theta_l)} = 0` entrywise.

use rand::Rng;

use crate::{real_inner, CVector, Error, Result, C64};

/// Unit-modulus phase vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector(CVector);

impl PhaseVector {
    /// All phases zero (all-ones vector).
    pub fn zero_phase(n: usize) -> Self {
        Self(CVector::from_element(n, C64::new(1.0, 0.0)))
    }

    pub fn from_phases(phases: &[f64]) -> Self {
        Self(CVector::from_iterator(
            phases.len(),
            phases.iter().map(|p| C64::from_polar(1.0, *p)),
        ))
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let phases: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        Self::from_phases(&phases)
    }

    /// Normalises every entry to unit modulus. Fails on zero entries.
    pub fn normalized(v: CVector) -> Result<Self> {
        if v.iter().any(|z| !(z.norm() > 0.0 && z.norm().is_finite())) {
            return Err(Error::Dimension(
                "cannot normalise a zero or non-finite entry".into(),
            ));
        }
        Ok(Self(v.map(|z| z / z.norm())))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &CVector {
        &self.0
    }

    pub fn into_inner(self) -> CVector {
        self.0
    }

    /// Diagonal of the reflection matrix, `conj(theta)`.
    pub fn reflection(&self) -> CVector {
        self.0.map(|z| z.conj())
    }

    pub fn phases(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.arg()).collect()
    }

    /// `max_l ||theta_l| - 1|`.
    pub fn modulus_error(&self) -> f64 {
        self.0
            .iter()
            .map(|z| (z.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// A smooth real function of a complex vector, maximised on the manifold.
pub trait CircleObjective {
    fn value(&self, theta: &CVector) -> f64;

    /// Euclidean gradient under `Re{x^H y}`: `f(theta + t v) = f + t Re{grad^H v} + O(t^2)`.
    fn euclidean_gradient(&self, theta: &CVector) -> CVector;
}

/// Orthogonal projection of `v` onto the tangent space at `theta`.
fn project(v: &CVector, theta: &CVector) -> CVector {
    v.zip_map(theta, |x, t| x - t * (x * t.conj()).re)
}

/// `grad - Re{grad . conj(theta)} . theta`.
pub fn riemannian_grad(egrad: &CVector, theta: &PhaseVector) -> CVector {
    project(egrad, theta.as_vector())
}

/// Polak-Ribiere parameter `Re{g_now^H (g_now - g_prev)} / ||g_prev||^2`;
/// zero when the previous gradient vanishes.
pub fn polak_ribiere(rgrad_now: &CVector, rgrad_prev: &CVector) -> f64 {
    let denom = rgrad_prev.norm_squared();
    if denom == 0.0 || !denom.is_finite() {
        return 0.0;
    }
    real_inner(rgrad_now, &(rgrad_now - rgrad_prev)) / denom
}

/// Moves a previous direction into the tangent space at `theta_new`.
pub fn vector_transport(d_prev: &CVector, theta_new: &PhaseVector) -> CVector {
    project(d_prev, theta_new.as_vector())
}

/// `theta_l <- (theta_l + step d_l) / |theta_l + step d_l|`. A vanishing
/// entry halves the step until every entry is non-zero.
pub fn retract(theta: &PhaseVector, step: f64, d: &CVector) -> PhaseVector {
    let mut step = step;
    for _ in 0..64 {
        let moved = theta.0.zip_map(d, |t, v| t + v * step);
        if moved.iter().all(|z| z.norm() > 0.0 && z.norm().is_finite()) {
            return PhaseVector(moved.map(|z| z / z.norm()));
        }
        step *= 0.5;
    }
    theta.clone()
}

/// `max_l |Re{v_l conj(theta_l)}|`.
pub fn tangency_error(v: &CVector, theta: &PhaseVector) -> f64 {
    v.iter()
        .zip(theta.0.iter())
        .map(|(x, t)| (x * t.conj()).re.abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoParams {
    pub initial_step: f64,
    pub contraction: f64,
    pub sufficient_increase: f64,
    pub max_backtracks: usize,
    /// Divide the initial step by `max_l |d_l|`, so that the first trial
    /// point rotates the most-moved entry by about `initial_step` radians.
    pub normalize: bool,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            contraction: 0.5,
            sufficient_increase: 1e-4,
            max_backtracks: 50,
            normalize: true,
        }
    }
}

/// Result of one backtracking search.
#[derive(Debug, Clone)]
pub struct LineSearch {
    /// Accepted step; zero when the search stagnated.
    pub step: f64,
    pub theta: PhaseVector,
    pub value: f64,
    pub stagnated: bool,
}

/// Largest `s rho^m` with `f(R(theta, t d)) >= f(theta) + c t Re<rgrad, d>`.
///
/// `d` must be an ascent direction; callers reset it to `rgrad` otherwise.
pub fn armijo_search<O: CircleObjective + ?Sized>(
    objective: &O,
    theta: &PhaseVector,
    value: f64,
    rgrad: &CVector,
    d: &CVector,
    params: &ArmijoParams,
) -> LineSearch {
    let slope = real_inner(rgrad, d);
    let stalled = LineSearch {
        step: 0.0,
        theta: theta.clone(),
        value,
        stagnated: true,
    };
    if !(slope > 0.0 && slope.is_finite()) {
        return stalled;
    }
    let mut step = params.initial_step;
    if params.normalize {
        let peak = d.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if peak > 0.0 && peak.is_finite() {
            step /= peak;
        }
    }
    for _ in 0..=params.max_backtracks {
        let candidate = retract(theta, step, d);
        let v = objective.value(candidate.as_vector());
        if v >= value + params.sufficient_increase * step * slope {
            return LineSearch {
                step,
                theta: candidate,
                value: v,
                stagnated: false,
            };
        }
        step *= params.contraction;
    }
    stalled
}

/// How the AO driver picks the first phase vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    ZeroPhase,
    Random { seed: u64 },
    Given,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcgOptions {
    /// Stop once `|f(r) - f(r-1)| <= epsilon`.
    pub epsilon: f64,
    pub max_inner_iters: usize,
    pub armijo: ArmijoParams,
    pub init: InitMode,
}

impl Default for RcgOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_inner_iters: 200,
            armijo: ArmijoParams::default(),
            init: InitMode::ZeroPhase,
        }
    }
}

impl RcgOptions {
    pub fn validate(&self) -> Result<()> {
        let a = &self.armijo;
        let ok = self.epsilon > 0.0
            && a.initial_step > 0.0
            && a.contraction > 0.0
            && a.contraction < 1.0
            && a.sufficient_increase > 0.0
            && a.sufficient_increase < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid RCG options {self:?}")))
        }
    }
}

/// One accepted RCG iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration counter.
    pub iter: usize,
    /// Objective after the update.
    pub objective: f64,
    /// Norm of the Riemannian gradient at the start of the iteration.
    pub grad_norm: f64,
    pub step: f64,
    /// Unit-modulus deviation of the updated iterate.
    pub modulus_error: f64,
    /// Largest tangency violation of the gradient and direction used.
    pub tangency_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    Stagnated,
}

#[derive(Debug, Clone)]
pub struct RcgOutcome {
    pub theta: PhaseVector,
    pub initial_objective: f64,
    pub objective: f64,
    pub trace: Vec<IterationRecord>,
    pub stop: StopReason,
}

fn check_finite(value: f64, iteration: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteObjective { value, iteration })
    }
}

/// Conjugate gradient ascent from `theta_init`.
///
/// The first iteration follows the Riemannian gradient; later ones combine it
/// with the transported previous direction through a Polak-Ribiere
/// coefficient clamped at zero. A non-ascent direction is replaced by the
/// gradient. Convergence (`|f(r) - f(r-1)| <= epsilon`) and stagnation are
/// only declared on a gradient step; a conjugate step that stalls restarts
/// the method from the gradient.
pub fn rcg_optimize<O: CircleObjective + ?Sized>(
    objective: &O,
    theta_init: PhaseVector,
    opts: &RcgOptions,
) -> Result<RcgOutcome> {
    opts.validate()?;
    let mut theta = theta_init;
    let initial_objective = check_finite(objective.value(theta.as_vector()), 0)?;
    let mut value = initial_objective;
    let mut trace = Vec::new();
    let mut prev: Option<(CVector, CVector)> = None; // (rgrad, direction)
    let mut stop = StopReason::MaxIterations;

    for r in 0..opts.max_inner_iters {
        let egrad = objective.euclidean_gradient(theta.as_vector());
        let rgrad = riemannian_grad(&egrad, &theta);
        let grad_norm = rgrad.norm();
        if !grad_norm.is_finite() {
            return Err(Error::NonFiniteObjective {
                value: grad_norm,
                iteration: r,
            });
        }
        if grad_norm == 0.0 {
            stop = StopReason::Converged;
            break;
        }
        let mut conjugate = false;
        let mut d = match &prev {
            None => rgrad.clone(),
            Some((g_prev, d_prev)) => {
                let tau = polak_ribiere(&rgrad, g_prev).max(0.0);
                conjugate = tau > 0.0;
                let mut d = rgrad.clone();
                d.axpy(
                    C64::new(tau, 0.0),
                    &vector_transport(d_prev, &theta),
                    C64::new(1.0, 0.0),
                );
                d
            }
        };
        if real_inner(&rgrad, &d) <= 0.0 {
            d = rgrad.clone();
            conjugate = false;
        }
        let tangency = tangency_error(&rgrad, &theta).max(tangency_error(&d, &theta));

        let ls = armijo_search(objective, &theta, value, &rgrad, &d, &opts.armijo);
        if ls.stagnated {
            if conjugate {
                prev = None;
                continue;
            }
            stop = StopReason::Stagnated;
            break;
        }
        let new_value = check_finite(ls.value, r + 1)?;
        theta = ls.theta;
        trace.push(IterationRecord {
            iter: r + 1,
            objective: new_value,
            grad_norm,
            step: ls.step,
            modulus_error: theta.modulus_error(),
            tangency_error: tangency,
        });
        let delta = (new_value - value).abs();
        value = new_value;
        if delta <= opts.epsilon {
            if conjugate {
                // a stalled conjugate step is retried along the gradient
                prev = None;
                continue;
            }
            stop = StopReason::Converged;
            break;
        }
        prev = Some((rgrad, d));
    }
    Ok(RcgOutcome {
        theta,
        initial_objective,
        objective: value,
        trace,
        stop,
    })
}
