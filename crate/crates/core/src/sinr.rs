//! Per-user SINR of cluster 1 under the four interference scenarios.
//!
//! Two independent evaluation routes are provided:
//!
//! - the compact cascade form (`theta^H a`, `theta^H B theta`, ...) built by
//!   [`build_cascades`], which also yields the Euclidean gradient used by the
//!   phase optimiser;
//! - [`direct_sinr`], which multiplies out `g^H Theta H u` and the EMI
//!   covariance products without forming any cascade matrix.
//!
//! The phase vector `theta` is the optimisation variable; the reflection
//! matrix is `Theta = diag(conj(theta))`, so `g^H Theta H u = theta^H a`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, CorrelationModel};
use crate::linalg::{mul_complex, mul_complex_real};
use crate::precoding::PrecoderSet;
use crate::rcg::{CircleObjective, PhaseVector};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Interference scenario seen by cluster 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// External-interference-free.
    Eif,
    /// EMI at RIS 1 only.
    Emi,
    /// Inter-RIS reflections from cluster 2 only.
    Irr,
    /// EMI at both RISs plus inter-RIS reflections.
    EmiIrr,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Eif,
        Scenario::Emi,
        Scenario::Irr,
        Scenario::EmiIrr,
    ];

    pub fn has_emi(self) -> bool {
        matches!(self, Scenario::Emi | Scenario::EmiIrr)
    }

    pub fn has_irr(self) -> bool {
        matches!(self, Scenario::Irr | Scenario::EmiIrr)
    }

    pub fn label(self) -> &'static str {
        match self {
            Scenario::Eif => "EIF",
            Scenario::Emi => "EMI",
            Scenario::Irr => "IRR",
            Scenario::EmiIrr => "EMI_IRR",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace(['+', '-'], "_").as_str() {
            "EIF" => Ok(Scenario::Eif),
            "EMI" => Ok(Scenario::Emi),
            "IRR" => Ok(Scenario::Irr),
            "EMI_IRR" => Ok(Scenario::EmiIrr),
            _ => Err(Error::Config(format!("unknown scenario {s:?}"))),
        }
    }
}

/// Powers, weights and noise entering the cluster-1 SINR.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    /// `p_k1` in watts.
    pub powers: Vec<f64>,
    /// `p_j2` in watts.
    pub irr_powers: Vec<f64>,
    pub weights: Vec<f64>,
    pub noise_power: f64,
}

/// EMI levels `A_n sigma_n^2` (watts) and the cluster-1 EMI multiplier of the
/// joint scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceLevels {
    pub emi1_w: f64,
    pub emi2_w: f64,
    pub emi_self_factor: f64,
}

impl InterferenceLevels {
    pub fn none() -> Self {
        Self {
            emi1_w: 0.0,
            emi2_w: 0.0,
            emi_self_factor: 4.0,
        }
    }
}

/// Everything about a trial except the cluster-1 phases.
#[derive(Debug, Clone, Copy)]
pub struct LinkState<'a> {
    pub realization: &'a ChannelRealization,
    pub correlation: [&'a CorrelationModel; 2],
    pub theta2: &'a PhaseVector,
    pub precoders1: &'a PrecoderSet,
    pub precoders2: &'a PrecoderSet,
    pub levels: InterferenceLevels,
}

/// Precomputed per-user cascade vectors and matrices of cluster 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeTerms {
    /// `a[k][i] = diag(g_k^*) H_1 u_i`.
    pub signal: Vec<Vec<CVector>>,
    /// `e[k][j] = diag(g_k^*) Z_21^H Theta_2 H_2 u_j2`; empty rows without cluster 2.
    pub irr: Vec<Vec<CVector>>,
    /// `B_k = diag(g_k^*) A_1 sigma_1^2 R_1 diag(g_k)`.
    pub emi_b: Vec<CMatrix>,
    /// `C_k = factor * B_k`.
    pub emi_c: Vec<CMatrix>,
    /// `D_k = diag(g_k^*) Z_21^H Theta_2 A_2 sigma_2^2 R_2 Theta_2^H Z_21 diag(g_k)`.
    pub emi_d: Vec<CMatrix>,
}

impl CascadeTerms {
    /// Intra-cluster terms only, for any cluster.
    pub fn intra(h: &CMatrix, g: &[CVector], precoders: &PrecoderSet) -> Result<Self> {
        let n = h.nrows();
        if precoders.vectors.nrows() != h.ncols() {
            return Err(Error::Dimension(format!(
                "precoders have {} rows, H has {} columns",
                precoders.vectors.nrows(),
                h.ncols()
            )));
        }
        let hu: Vec<CVector> = (0..precoders.num_users())
            .map(|i| h * precoders.vectors.column(i))
            .collect();
        let signal = g
            .iter()
            .map(|gk| {
                if gk.len() != n {
                    return Err(Error::Dimension(format!(
                        "g has {} entries, expected {n}",
                        gk.len()
                    )));
                }
                Ok(hu.iter().map(|v| conj_hadamard(gk, v)).collect())
            })
            .collect::<Result<Vec<Vec<CVector>>>>()?;
        Ok(Self {
            irr: vec![Vec::new(); g.len()],
            signal,
            emi_b: Vec::new(),
            emi_c: Vec::new(),
            emi_d: Vec::new(),
        })
    }

    pub fn num_users(&self) -> usize {
        self.signal.len()
    }

    pub fn dim(&self) -> usize {
        self.signal
            .first()
            .and_then(|a| a.first())
            .map_or(0, |v| v.len())
    }

    /// Scenario-specific objective `sum_k w_k ln(1 + gamma_k)` over theta.
    pub fn objective(&self, scenario: Scenario, budget: &LinkBudget) -> Result<PhaseObjective> {
        let k_users = self.num_users();
        if budget.powers.len() != k_users || budget.weights.len() != k_users {
            return Err(Error::Dimension(format!(
                "{k_users} users but {} powers / {} weights",
                budget.powers.len(),
                budget.weights.len()
            )));
        }
        if scenario.has_emi() {
            let have = match scenario {
                Scenario::Emi => self.emi_b.len() == k_users,
                _ => self.emi_c.len() == k_users && self.emi_d.len() == k_users,
            };
            if !have {
                return Err(Error::Dimension(format!("{scenario} terms were not built")));
            }
        }
        let users = (0..k_users)
            .map(|k| {
                let mut interferers = Vec::new();
                for (i, a) in self.signal[k].iter().enumerate() {
                    if i != k {
                        interferers.push(a * C64::new(budget.powers[i].sqrt(), 0.0));
                    }
                }
                if scenario.has_irr() {
                    if self.irr[k].len() != budget.irr_powers.len() {
                        return Err(Error::Dimension(format!(
                            "{} IRR vectors but {} cluster-2 powers",
                            self.irr[k].len(),
                            budget.irr_powers.len()
                        )));
                    }
                    for (e, p) in self.irr[k].iter().zip(&budget.irr_powers) {
                        interferers.push(e * C64::new(p.sqrt(), 0.0));
                    }
                }
                let quad = match scenario {
                    Scenario::Emi => Some(self.emi_b[k].clone()),
                    Scenario::EmiIrr => Some(&self.emi_c[k] + &self.emi_d[k]),
                    _ => None,
                };
                Ok(UserModel {
                    weight: budget.weights[k],
                    desired: &self.signal[k][k] * C64::new(budget.powers[k].sqrt(), 0.0),
                    interferers,
                    quad,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PhaseObjective {
            users,
            noise_power: budget.noise_power,
        })
    }
}

fn conj_hadamard(g: &CVector, v: &CVector) -> CVector {
    g.zip_map(v, |a, b| a.conj() * b)
}

/// `diag(g^*) M diag(g)` for a complex kernel `M`, scaled by `s`.
fn sandwich(g: &CVector, m: &CMatrix, s: f64) -> CMatrix {
    CMatrix::from_fn(g.len(), g.len(), |l, q| g[l].conj() * m[(l, q)] * g[q] * s)
}

/// Builds every cluster-1 cascade term. All five families are present; `B`,
/// `C` and `D` are zero matrices when the corresponding EMI level is zero.
pub fn build_cascades(state: &LinkState<'_>) -> Result<CascadeTerms> {
    let real = state.realization;
    let c1 = &real.clusters[0];
    let c2 = &real.clusters[1];
    let mut terms = CascadeTerms::intra(&c1.bs_ris, &c1.ris_ue, state.precoders1)?;
    let n1 = c1.bs_ris.nrows();
    let n2 = c2.bs_ris.nrows();
    if state.theta2.len() != n2 || real.inter_ris.shape() != (n1, n2) {
        return Err(Error::Dimension(
            "cluster-2 phases or inter-RIS channel mismatch".into(),
        ));
    }
    if state.precoders2.vectors.nrows() != c2.bs_ris.ncols() {
        return Err(Error::Dimension(
            "cluster-2 precoders do not match H_2".into(),
        ));
    }

    // w_j = Z^H Theta_2 H_2 u_j2, shared by all cluster-1 users
    let theta2_conj = state.theta2.as_vector().map(|t| t.conj());
    let w: Vec<CVector> = (0..state.precoders2.num_users())
        .map(|j| {
            let hu = &c2.bs_ris * state.precoders2.vectors.column(j);
            &real.inter_ris * hu.component_mul(&theta2_conj)
        })
        .collect();
    terms.irr = c1
        .ris_ue
        .iter()
        .map(|g| w.iter().map(|wj| conj_hadamard(g, wj)).collect())
        .collect();

    let r1 = state.correlation[0].complex_matrix();
    let lv = state.levels;
    terms.emi_b = c1
        .ris_ue
        .iter()
        .map(|g| sandwich(g, &r1, lv.emi1_w))
        .collect();
    terms.emi_c = terms
        .emi_b
        .iter()
        .map(|b| b * C64::new(lv.emi_self_factor, 0.0))
        .collect();

    // kernel = Z^H Theta_2 R_2 Theta_2^H Z, with the unclipped R_2
    let kernel = if lv.emi2_w > 0.0 {
        let p = CMatrix::from_fn(n1, n2, |l, m| real.inter_ris[(l, m)] * theta2_conj[m]);
        let pr = mul_complex_real(&p, &state.correlation[1].matrix);
        mul_complex(&pr, &p.adjoint())
    } else {
        CMatrix::zeros(n1, n1)
    };
    terms.emi_d = c1
        .ris_ue
        .iter()
        .map(|g| sandwich(g, &kernel, lv.emi2_w))
        .collect();
    Ok(terms)
}

/// Per-user SINR and rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrReport {
    pub scenario: Scenario,
    pub sinr: Vec<f64>,
    /// `log2(1 + gamma_k)` in bits/s/Hz.
    pub rates: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SinrReport {
    pub fn new(scenario: Scenario, sinr: Vec<f64>, weights: Vec<f64>) -> Self {
        let rates = sinr.iter().map(|g| (1.0 + g).log2()).collect();
        Self {
            scenario,
            sinr,
            rates,
            weights,
        }
    }

    pub fn sum_rate(&self) -> f64 {
        sum_rate(self)
    }
}

/// Weighted sum rate in bits/s/Hz.
pub fn sum_rate(report: &SinrReport) -> f64 {
    report
        .rates
        .iter()
        .zip(&report.weights)
        .map(|(r, w)| w * r)
        .sum()
}

/// `true` for each user whose rate is strictly below `threshold`.
pub fn outage_indicator(report: &SinrReport, threshold: f64) -> Vec<bool> {
    report.rates.iter().map(|r| *r < threshold).collect()
}

#[derive(Debug, Clone)]
struct UserModel {
    weight: f64,
    /// `sqrt(p_k) a_kk`
    desired: CVector,
    /// `sqrt(p) x` for every rank-one interference path
    interferers: Vec<CVector>,
    quad: Option<CMatrix>,
}

/// Signal and interference power of one user at `theta`, with the vectors
/// needed for the gradient.
struct UserEval {
    signal: f64,
    interference: f64,
    desired_proj: C64,
    interferer_proj: Vec<C64>,
    quad_theta: Option<CVector>,
}

impl UserModel {
    fn eval(&self, theta: &CVector) -> UserEval {
        let desired_proj = self.desired.dotc(theta);
        let interferer_proj: Vec<C64> = self.interferers.iter().map(|x| x.dotc(theta)).collect();
        let mut interference: f64 = interferer_proj.iter().map(|c| c.norm_sqr()).sum();
        let quad_theta = self.quad.as_ref().map(|q| q * theta);
        if let Some(qt) = &quad_theta {
            interference += theta.dotc(qt).re;
        }
        UserEval {
            signal: desired_proj.norm_sqr(),
            interference,
            desired_proj,
            interferer_proj,
            quad_theta,
        }
    }
}

/// `f(theta) = sum_k w_k ln(1 + gamma_k(theta))` for one scenario.
#[derive(Debug, Clone)]
pub struct PhaseObjective {
    users: Vec<UserModel>,
    noise_power: f64,
}

impl PhaseObjective {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn sinr(&self, theta: &CVector) -> Vec<f64> {
        self.users
            .iter()
            .map(|u| {
                let e = u.eval(theta);
                e.signal / (e.interference + self.noise_power)
            })
            .collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.weight).collect()
    }
}

impl CircleObjective for PhaseObjective {
    fn value(&self, theta: &CVector) -> f64 {
        self.users
            .iter()
            .zip(self.sinr(theta))
            .map(|(u, g)| u.weight * g.ln_1p())
            .sum()
    }

    /// `sum_k 2 w_k [ (v_all)/(S + I + s^2) - (v_int)/(I + s^2) ]` where the
    /// `v` are the Wirtinger derivatives of the two denominators.
    fn euclidean_gradient(&self, theta: &CVector) -> CVector {
        let mut grad = CVector::zeros(theta.len());
        for u in &self.users {
            let e = u.eval(theta);
            let mut v_int = CVector::zeros(theta.len());
            for (x, c) in u.interferers.iter().zip(&e.interferer_proj) {
                v_int.axpy(*c, x, C64::new(1.0, 0.0));
            }
            if let Some(qt) = &e.quad_theta {
                v_int += qt;
            }
            let d_int = e.interference + self.noise_power;
            let d_all = d_int + e.signal;
            let mut v_all = v_int.clone();
            v_all.axpy(e.desired_proj, &u.desired, C64::new(1.0, 0.0));
            let w = 2.0 * u.weight;
            grad.axpy(C64::new(w / d_all, 0.0), &v_all, C64::new(1.0, 0.0));
            grad.axpy(C64::new(-w / d_int, 0.0), &v_int, C64::new(1.0, 0.0));
        }
        grad
    }
}

fn report(
    terms: &CascadeTerms,
    scenario: Scenario,
    theta: &PhaseVector,
    budget: &LinkBudget,
) -> Result<SinrReport> {
    let obj = terms.objective(scenario, budget)?;
    Ok(SinrReport::new(
        scenario,
        obj.sinr(theta.as_vector()),
        budget.weights.clone(),
    ))
}

pub fn sinr_eif(
    terms: &CascadeTerms,
    theta: &PhaseVector,
    budget: &LinkBudget,
) -> Result<SinrReport> {
    report(terms, Scenario::Eif, theta, budget)
}

pub fn sinr_emi(
    terms: &CascadeTerms,
    theta: &PhaseVector,
    budget: &LinkBudget,
) -> Result<SinrReport> {
    report(terms, Scenario::Emi, theta, budget)
}

pub fn sinr_irr(
    terms: &CascadeTerms,
    theta: &PhaseVector,
    budget: &LinkBudget,
) -> Result<SinrReport> {
    report(terms, Scenario::Irr, theta, budget)
}

pub fn sinr_emi_irr(
    terms: &CascadeTerms,
    theta: &PhaseVector,
    budget: &LinkBudget,
) -> Result<SinrReport> {
    report(terms, Scenario::EmiIrr, theta, budget)
}

pub fn sinr_for(
    terms: &CascadeTerms,
    scenario: Scenario,
    theta: &PhaseVector,
    budget: &LinkBudget,
) -> Result<SinrReport> {
    report(terms, scenario, theta, budget)
}

/// Direct evaluation of the cluster-1 SINR from the channel matrices.
///
/// Uses `x = Theta_1^H g_k` and `y = Theta_2^H Z_21 x` so that the EMI terms
/// are `x^H (A_1 s_1^2 R_1) x` and `y^H (A_2 s_2^2 R_2) y`.
pub fn direct_sinr(
    state: &LinkState<'_>,
    theta1: &PhaseVector,
    scenario: Scenario,
    budget: &LinkBudget,
) -> Result<SinrReport> {
    let real = state.realization;
    let c1 = &real.clusters[0];
    let c2 = &real.clusters[1];
    if theta1.len() != c1.bs_ris.nrows() {
        return Err(Error::Dimension("theta_1 does not match RIS 1".into()));
    }
    let refl1 = theta1.reflection();
    let refl2 = state.theta2.reflection();
    let h1u: Vec<CVector> = (0..state.precoders1.num_users())
        .map(|i| &c1.bs_ris * state.precoders1.vectors.column(i))
        .collect();
    let irr_in: Vec<CVector> = (0..state.precoders2.num_users())
        .map(|j| {
            let v = &c2.bs_ris * state.precoders2.vectors.column(j);
            &real.inter_ris * v.component_mul(&refl2)
        })
        .collect();
    let r1 = &state.correlation[0].matrix;
    let r2 = &state.correlation[1].matrix;
    let lv = state.levels;

    let sinr = c1
        .ris_ue
        .iter()
        .enumerate()
        .map(|(k, g)| {
            // row vector g^H Theta_1
            let gt = g.zip_map(&refl1, |a, t| a.conj() * t);
            let through = |v: &CVector| gt.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<C64>();
            let desired = budget.powers[k] * through(&h1u[k]).norm_sqr();
            let mut den = budget.noise_power;
            for (i, v) in h1u.iter().enumerate() {
                if i != k {
                    den += budget.powers[i] * through(v).norm_sqr();
                }
            }
            if scenario.has_irr() {
                for (j, v) in irr_in.iter().enumerate() {
                    den += budget.irr_powers[j] * through(v).norm_sqr();
                }
            }
            if scenario.has_emi() {
                let x = gt.map(|z| z.conj());
                let emi1 = lv.emi1_w * real_quadratic(r1, &x);
                den += match scenario {
                    Scenario::Emi => emi1,
                    _ => {
                        let zx = real.inter_ris.adjoint() * &x;
                        let y = zx.zip_map(&refl2, |a, t| a * t.conj());
                        lv.emi_self_factor * emi1 + lv.emi2_w * real_quadratic(r2, &y)
                    }
                };
            }
            desired / den
        })
        .collect();
    Ok(SinrReport::new(scenario, sinr, budget.weights.clone()))
}

/// `x^H R x` for real symmetric `R`.
fn real_quadratic(r: &nalgebra::DMatrix<f64>, x: &CVector) -> f64 {
    let re = x.map(|z| z.re);
    let im = x.map(|z| z.im);
    re.dot(&(r * &re)) + im.dot(&(r * &im))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_normal, trial_rng};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn scalar_terms(a: C64) -> CascadeTerms {
        CascadeTerms {
            signal: vec![vec![CVector::from_element(1, a)]],
            irr: vec![Vec::new()],
            emi_b: Vec::new(),
            emi_c: Vec::new(),
            emi_d: Vec::new(),
        }
    }

    fn budget(k: usize, noise: f64) -> LinkBudget {
        LinkBudget {
            powers: vec![1.0; k],
            irr_powers: vec![],
            weights: vec![1.0; k],
            noise_power: noise,
        }
    }

    #[test]
    fn scalar_case() {
        let t = scalar_terms(c(1.0));
        let r = sinr_eif(&t, &PhaseVector::zero_phase(1), &budget(1, 1.0)).unwrap();
        assert_eq!(r.sinr, vec![1.0]);
        assert_eq!(r.rates, vec![1.0]);
        assert_eq!(sum_rate(&r), 1.0);
    }

    #[test]
    fn noise_limited_sinr_is_linear_in_power() {
        let t = scalar_terms(C64::new(0.3, -0.4));
        let theta = PhaseVector::from_phases(&[0.2]);
        let mut b = budget(1, 1e-3);
        let g1 = sinr_eif(&t, &theta, &b).unwrap().sinr[0];
        b.powers[0] *= 7.0;
        let g7 = sinr_eif(&t, &theta, &b).unwrap().sinr[0];
        assert!((g7 / g1 - 7.0).abs() < 1e-12);
    }

    #[test]
    fn rates_and_outage() {
        let r = SinrReport::new(
            Scenario::Eif,
            vec![1.0, 0.0, 2f64.powf(0.1) - 1.0],
            vec![1.0; 3],
        );
        assert_eq!(r.rates[0], 1.0);
        assert_eq!(r.rates[1], 0.0);
        let out = outage_indicator(&r, 0.1);
        assert!(!out[0]);
        assert!(out[1]);
        // rate equal to the threshold (within one ulp of log2) is not an outage
        let exact = SinrReport {
            rates: vec![0.1],
            sinr: vec![0.0],
            weights: vec![1.0],
            scenario: Scenario::Eif,
        };
        assert_eq!(outage_indicator(&exact, 0.1), vec![false]);
    }

    #[test]
    fn all_ones_cascade() {
        let h = CMatrix::from_element(3, 1, c(1.0));
        let g = vec![CVector::from_element(3, c(1.0))];
        let u = PrecoderSet {
            vectors: CMatrix::from_element(1, 1, c(1.0)),
            effective_channel: CMatrix::zeros(1, 1),
        };
        let t = CascadeTerms::intra(&h, &g, &u).unwrap();
        assert_eq!(t.signal[0][0], CVector::from_element(3, c(1.0)));
    }

    #[test]
    fn missing_terms_are_reported() {
        let t = scalar_terms(c(1.0));
        assert!(sinr_emi(&t, &PhaseVector::zero_phase(1), &budget(1, 1.0)).is_err());
        assert!(sinr_emi_irr(&t, &PhaseVector::zero_phase(1), &budget(1, 1.0)).is_err());
    }

    #[test]
    fn hermitian_gradient_identity() {
        let mut rng = trial_rng(5, 0);
        let x = CMatrix::from_fn(4, 4, |_, _| complex_normal(&mut rng));
        let b = &x * x.adjoint();
        let theta = PhaseVector::random(4, &mut rng);
        let lhs = (&b + b.adjoint()) * theta.as_vector();
        let rhs = &b * theta.as_vector() * c(2.0);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn scenario_parse_roundtrip() {
        for s in Scenario::ALL {
            assert_eq!(s.label().parse::<Scenario>().unwrap(), s);
        }
        assert_eq!("emi+irr".parse::<Scenario>().unwrap(), Scenario::EmiIrr);
        assert!("foo".parse::<Scenario>().is_err());
    }
}
