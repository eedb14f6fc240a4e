//! Random small instances shared by the integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use risim::channel::{
    complex_normal, sample_correlated_rayleigh, spatial_correlation, ChannelRealization,
    ClusterChannels, CorrelationModel, PathLossSet,
};
use risim::geometry::{ris_element_positions, Point3};
use risim::precoding::{effective_channel, zf_precoder, PrecoderSet};
use risim::rcg::PhaseVector;
use risim::sinr::{InterferenceLevels, LinkBudget, LinkState, Scenario};
use risim::{CMatrix, CVector, C64};

pub const WAVELENGTH: f64 = 0.1;

/// Channels, frozen cluster-2 state, precoders and budgets of one instance.
#[derive(Clone)]
pub struct Instance {
    pub real: ChannelRealization,
    pub corr: [CorrelationModel; 2],
    pub theta1: PhaseVector,
    pub theta2: PhaseVector,
    pub precoders1: PrecoderSet,
    pub precoders2: PrecoderSet,
    pub levels: InterferenceLevels,
    pub budget: LinkBudget,
}

impl Instance {
    pub fn state(&self) -> LinkState<'_> {
        LinkState {
            realization: &self.real,
            correlation: [&self.corr[0], &self.corr[1]],
            theta2: &self.theta2,
            precoders1: &self.precoders1,
            precoders2: &self.precoders2,
            levels: self.levels,
        }
    }

    pub fn n1(&self) -> usize {
        self.real.clusters[0].bs_ris.nrows()
    }
}

pub fn correlation_for(positions: &[Point3]) -> CorrelationModel {
    spatial_correlation(positions, WAVELENGTH).unwrap()
}

/// Square RIS of the given side with quarter-wavelength pitch.
pub fn square_correlation(side: usize) -> CorrelationModel {
    correlation_for(&ris_element_positions(side, (WAVELENGTH / 4.0).powi(2)))
}

/// Linear RIS of `n` elements with quarter-wavelength pitch.
pub fn linear_correlation(n: usize) -> CorrelationModel {
    let pos: Vec<Point3> = (0..n)
        .map(|i| [i as f64 * WAVELENGTH / 4.0, 0.0, 0.0])
        .collect();
    correlation_for(&pos)
}

fn cluster<R: Rng>(
    corr: &CorrelationModel,
    antennas: usize,
    users: usize,
    rng: &mut R,
) -> ClusterChannels {
    let bs_ris = sample_correlated_rayleigh(corr, 1.0, antennas, rng);
    let ris_ue = (0..users)
        .map(|_| {
            sample_correlated_rayleigh(corr, 1.0, 1, rng)
                .column(0)
                .into_owned()
        })
        .collect();
    ClusterChannels { bs_ris, ris_ue }
}

fn zf(c: &ClusterChannels, theta: &PhaseVector) -> PrecoderSet {
    zf_precoder(&effective_channel(&c.ris_ue, theta, &c.bs_ris).unwrap()).unwrap()
}

/// Instance with correlation models `corr`, `k` users and `k` antennas per
/// cluster, unit-variance channels and interference levels of order one.
pub fn instance_with(seed: u64, corr: [CorrelationModel; 2], k: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c1 = cluster(&corr[0], k, k, &mut rng);
    let c2 = cluster(&corr[1], k, k, &mut rng);
    let (n1, n2) = (corr[0].dim(), corr[1].dim());
    let inter_ris = CMatrix::from_fn(n1, n2, |_, _| {
        complex_normal(&mut rng) * C64::new(0.3f64.sqrt(), 0.0)
    });
    let theta1 = PhaseVector::random(n1, &mut rng);
    let theta2 = PhaseVector::random(n2, &mut rng);
    let zf_phase = PhaseVector::random(n1, &mut rng);
    let precoders1 = zf(&c1, &zf_phase);
    let precoders2 = zf(&c2, &theta2);
    let levels = InterferenceLevels {
        emi1_w: rng.random_range(0.05..0.3),
        emi2_w: rng.random_range(0.05..0.3),
        emi_self_factor: 4.0,
    };
    let budget = LinkBudget {
        powers: (0..k).map(|_| rng.random_range(0.5..2.0)).collect(),
        irr_powers: (0..k).map(|_| rng.random_range(0.5..2.0)).collect(),
        weights: (0..k).map(|_| rng.random_range(0.5..1.5)).collect(),
        noise_power: rng.random_range(0.2..1.0),
    };
    Instance {
        real: ChannelRealization {
            clusters: vec![c1, c2],
            inter_ris,
            path_loss: PathLossSet {
                bs_ris: vec![1.0; 2],
                ris_ue: vec![vec![1.0; k]; 2],
                ris_ris: 1.0,
            },
            trial: seed,
        },
        corr,
        theta1,
        theta2,
        precoders1,
        precoders2,
        levels,
        budget,
    }
}

/// Square RISs of sides `side1` and `side2`.
pub fn random_instance(seed: u64, side1: usize, side2: usize, k: usize) -> Instance {
    instance_with(
        seed,
        [square_correlation(side1), square_correlation(side2)],
        k,
    )
}

/// Relative error `|a - b| / max(|a|, |b|, tiny)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Max entry-wise relative error between two slices.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| rel_err(*x, *y))
        .fold(0.0, f64::max)
}

/// Unit-modulus vector from phases.
pub fn unit(phases: &[f64]) -> CVector {
    CVector::from_iterator(
        phases.len(),
        phases.iter().map(|p| C64::from_polar(1.0, *p)),
    )
}

/// Received-signal SINR of cluster-1 users built from dense diagonal phase
/// matrices, independent of the cascade code.
pub fn dense_sinr(inst: &Instance, scenario: Scenario) -> Vec<f64> {
    let c1 = &inst.real.clusters[0];
    let c2 = &inst.real.clusters[1];
    let t1 = CMatrix::from_diagonal(&inst.theta1.as_vector().map(|t| t.conj()));
    let t2 = CMatrix::from_diagonal(&inst.theta2.as_vector().map(|t| t.conj()));
    let z = &inst.real.inter_ris;
    let r1 = inst.corr[0].complex_matrix();
    let r2 = inst.corr[1].complex_matrix();
    let b = &inst.budget;
    let lv = inst.levels;
    let k_users = c1.ris_ue.len();
    (0..k_users)
        .map(|k| {
            let gh = c1.ris_ue[k].adjoint();
            let row = &gh * &t1; // g^H Theta_1
            let amp = |i: usize| (&row * &c1.bs_ris * inst.precoders1.vectors.column(i))[(0, 0)];
            let signal = b.powers[k] * amp(k).norm_sqr();
            let mut interference: f64 = (0..k_users)
                .filter(|i| *i != k)
                .map(|i| b.powers[i] * amp(i).norm_sqr())
                .sum();
            if scenario.has_irr() {
                let via = &row * z * &t2 * &c2.bs_ris;
                interference += (0..inst.precoders2.num_users())
                    .map(|j| {
                        b.irr_powers[j]
                            * (&via * inst.precoders2.vectors.column(j))[(0, 0)].norm_sqr()
                    })
                    .sum::<f64>();
            }
            let self_emi = (&row * &r1 * row.adjoint())[(0, 0)].re * lv.emi1_w;
            match scenario {
                Scenario::Emi => interference += self_emi,
                Scenario::EmiIrr => {
                    let via = &row * z * &t2;
                    interference += lv.emi_self_factor * self_emi
                        + (&via * &r2 * via.adjoint())[(0, 0)].re * lv.emi2_w;
                }
                _ => {}
            }
            signal / (interference + b.noise_power)
        })
        .collect()
}
