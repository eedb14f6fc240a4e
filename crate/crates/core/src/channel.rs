//! Random channel generation.
//!
//! Every link uses the InF-SH LoS path loss and spatially correlated
//! Rayleigh fading with the isotropic (sinc) correlation of the RIS element
//! grid. Entries are scaled by `sqrt(A * beta)` so that their variance is
//! `A * beta`. Inter-RIS channels are i.i.d.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::{distance_3d, Point3, ValidatedConfig};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Eigenvalues of the correlation matrix below this are clipped to zero.
pub const EIGEN_CLIP: f64 = 1e-10;

/// InF-SH LoS path loss in dB for a 3D distance in meters and carrier in GHz.
pub fn path_loss_db(d3d: f64, fc_ghz: f64) -> Result<f64> {
    if !(d3d.is_finite() && d3d > 0.0) {
        return Err(Error::Geometry(format!(
            "path loss distance must be > 0, got {d3d}"
        )));
    }
    if !(fc_ghz.is_finite() && fc_ghz > 0.0) {
        return Err(Error::Geometry(format!(
            "carrier frequency must be > 0, got {fc_ghz}"
        )));
    }
    Ok(31.84 + 21.50 * d3d.log10() + 19.00 * fc_ghz.log10())
}

/// Linear path-loss gain `10^(-PL/10)`.
pub fn path_loss_linear(d3d: f64, fc_ghz: f64) -> Result<f64> {
    Ok(10f64.powf(-path_loss_db(d3d, fc_ghz)? / 10.0))
}

/// Normalised sinc, `sin(pi x) / (pi x)`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Spatial correlation of one RIS and a square-root factor of it.
///
/// The sinc kernel of a real geometry is real symmetric, so both matrices are
/// stored as real. `factor` keeps only the columns of non-clipped eigenpairs,
/// so it is `L^2 x r` with `factor * factor^T` equal to the clipped matrix.
#[derive(Debug, Clone)]
pub struct CorrelationModel {
    pub matrix: DMatrix<f64>,
    pub factor: DMatrix<f64>,
    pub min_eigenvalue: f64,
}

impl CorrelationModel {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    /// `R` as a complex matrix.
    pub fn complex_matrix(&self) -> CMatrix {
        self.matrix.map(|x| C64::new(x, 0.0))
    }

    /// `factor * factor^T`.
    pub fn reconstructed(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }
}

pub fn spatial_correlation(positions: &[Point3], wavelength_m: f64) -> Result<CorrelationModel> {
    if positions.is_empty() {
        return Err(Error::Dimension(
            "correlation needs at least one element".into(),
        ));
    }
    if !(wavelength_m.is_finite() && wavelength_m > 0.0) {
        return Err(Error::Geometry(format!(
            "wavelength must be > 0, got {wavelength_m}"
        )));
    }
    if positions.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Geometry("non-finite element position".into()));
    }
    let n = positions.len();
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            sinc(2.0 * distance_3d(&positions[i], &positions[j]) / wavelength_m)
        }
    });
    let eig = SymmetricEigen::new(matrix.clone());
    let min_eigenvalue = eig.eigenvalues.min();
    let keep: Vec<usize> = (0..n)
        .filter(|&i| eig.eigenvalues[i] >= EIGEN_CLIP)
        .collect();
    let mut factor = DMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        factor.set_column(c, &(eig.eigenvectors.column(i) * s));
    }
    Ok(CorrelationModel {
        matrix,
        factor,
        min_eigenvalue,
    })
}

/// One `CN(0, 1)` draw: independent real and imaginary parts of variance 1/2.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

fn iid_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    // column-major fill keeps the draw order stable
    let mut m = CMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = complex_normal(rng);
        }
    }
    m
}

/// `cols` independent columns, each `CN(0, scale * R)`.
pub fn sample_correlated_rayleigh<R: Rng + ?Sized>(
    corr: &CorrelationModel,
    scale: f64,
    cols: usize,
    rng: &mut R,
) -> CMatrix {
    let w = iid_matrix(corr.rank(), cols, rng);
    let amp = scale.max(0.0).sqrt();
    let re = &corr.factor * w.map(|z| z.re);
    let im = &corr.factor * w.map(|z| z.im);
    CMatrix::from_fn(corr.dim(), cols, |i, j| {
        C64::new(re[(i, j)], im[(i, j)]) * amp
    })
}

/// i.i.d. `CN(0, scale)` inter-RIS channel between RISs of sides `l1`, `l2`,
/// shaped `l1^2 x l2^2`.
pub fn sample_inter_ris<R: Rng + ?Sized>(l1: usize, l2: usize, scale: f64, rng: &mut R) -> CMatrix {
    iid_matrix(l1 * l1, l2 * l2, rng) * C64::new(scale.max(0.0).sqrt(), 0.0)
}

/// One EMI vector impinging on an RIS.
#[derive(Debug, Clone)]
pub struct EmiDraw {
    pub noise: CVector,
    /// `A sigma^2` in watts.
    pub scale_w: f64,
}

pub fn sample_emi<R: Rng + ?Sized>(corr: &CorrelationModel, a_sigma2: f64, rng: &mut R) -> EmiDraw {
    let m = sample_correlated_rayleigh(corr, a_sigma2, 1, rng);
    EmiDraw {
        noise: m.column(0).into_owned(),
        scale_w: a_sigma2,
    }
}

/// Linear path-loss gains of every link.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLossSet {
    pub bs_ris: Vec<f64>,
    pub ris_ue: Vec<Vec<f64>>,
    pub ris_ris: f64,
}

/// Everything about the channel that is fixed across trials: correlation
/// factors and per-link variances.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub correlation: Vec<CorrelationModel>,
    pub path_loss: PathLossSet,
    pub ris_sides: Vec<usize>,
    pub antennas: Vec<usize>,
    pub element_areas: Vec<f64>,
}

impl ChannelModel {
    pub fn new(cfg: &ValidatedConfig) -> Result<Self> {
        let fc = cfg.config().carrier_frequency_ghz;
        let mut correlation = Vec::new();
        let mut bs_ris = Vec::new();
        let mut ris_ue = Vec::new();
        for c in &cfg.geometry.clusters {
            correlation.push(spatial_correlation(
                &c.element_positions,
                cfg.wavelength_m(),
            )?);
            bs_ris.push(path_loss_linear(c.bs_ris_distance_m, fc)?);
            ris_ue.push(
                c.ris_ue_distances_m
                    .iter()
                    .map(|d| path_loss_linear(*d, fc))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        let ris_ris = path_loss_linear(cfg.geometry.ris_ris_distance_m, fc)?;
        Ok(Self {
            correlation,
            path_loss: PathLossSet {
                bs_ris,
                ris_ue,
                ris_ris,
            },
            ris_sides: cfg.config().clusters.iter().map(|c| c.ris_side).collect(),
            antennas: cfg
                .config()
                .clusters
                .iter()
                .map(|c| c.num_antennas)
                .collect(),
            element_areas: cfg
                .geometry
                .clusters
                .iter()
                .map(|c| c.element_area_m2)
                .collect(),
        })
    }

    pub fn inter_ris_scale(&self) -> f64 {
        (self.element_areas[0] * self.element_areas[1]).sqrt() * self.path_loss.ris_ris
    }
}

/// Channels of one cluster: `H_n` (`L^2 x T`) and one `g_kn` per user.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterChannels {
    pub bs_ris: CMatrix,
    pub ris_ue: Vec<CVector>,
}

/// One Monte Carlo draw of every channel.
///
/// `inter_ris` is the `L1^2 x L2^2` operator carrying RIS-2 reflections onto
/// RIS 1; it plays the role of `Z_21^H` in the cascaded expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub clusters: Vec<ClusterChannels>,
    pub inter_ris: CMatrix,
    pub path_loss: PathLossSet,
    pub trial: u64,
}

/// Independent stream for `trial` under the root `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Draws `H_1, H_2, g_k1, g_k2, Z_21` in that order.
pub fn draw_realization<R: Rng + ?Sized>(
    model: &ChannelModel,
    trial: u64,
    rng: &mut R,
) -> ChannelRealization {
    let pl = &model.path_loss;
    let bs_ris: Vec<CMatrix> = (0..2)
        .map(|n| {
            sample_correlated_rayleigh(
                &model.correlation[n],
                model.element_areas[n] * pl.bs_ris[n],
                model.antennas[n],
                rng,
            )
        })
        .collect();
    let ris_ue: Vec<Vec<CVector>> = (0..2)
        .map(|n| {
            pl.ris_ue[n]
                .iter()
                .map(|beta| {
                    sample_correlated_rayleigh(
                        &model.correlation[n],
                        model.element_areas[n] * beta,
                        1,
                        rng,
                    )
                    .column(0)
                    .into_owned()
                })
                .collect()
        })
        .collect();
    let inter_ris = sample_inter_ris(
        model.ris_sides[0],
        model.ris_sides[1],
        model.inter_ris_scale(),
        rng,
    );
    ChannelRealization {
        clusters: bs_ris
            .into_iter()
            .zip(ris_ue)
            .map(|(h, g)| ClusterChannels {
                bs_ris: h,
                ris_ue: g,
            })
            .collect(),
        inter_ris,
        path_loss: pl.clone(),
        trial,
    }
}

fn write_matrix_csv(path: &Path, m: &CMatrix) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "row,col,re,im")?;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            writeln!(f, "{i},{j},{:e},{:e}", z.re, z.im)?;
        }
    }
    f.flush()?;
    Ok(())
}

/// Writes one CSV per channel into `dir`: `H1.csv`, `H2.csv`, `g1.csv`,
/// `g2.csv` (one column per user) and `Z21.csv`.
pub fn dump_realization(real: &ChannelRealization, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (n, c) in real.clusters.iter().enumerate() {
        write_matrix_csv(&dir.join(format!("H{}.csv", n + 1)), &c.bs_ris)?;
        let g = CMatrix::from_columns(&c.ris_ue);
        write_matrix_csv(&dir.join(format!("g{}.csv", n + 1)), &g)?;
    }
    write_matrix_csv(&dir.join("Z21.csv"), &real.inter_ris)
}
