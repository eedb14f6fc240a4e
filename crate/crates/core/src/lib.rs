//! System-level simulation and phase-shift optimization for two-cluster
//! RIS-aided downlink MISO networks in indoor factory environments.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: scenario configuration, validation and RIS element grids.
//! - [`channel`]: InF-SH path loss, sinc spatial correlation and the
//!   correlated Rayleigh / inter-RIS / EMI samplers.
//! - [`sinr`]: cascade terms and per-user SINR for the EIF, EMI, IRR and
//!   EMI+IRR scenarios, plus a direct matrix-product evaluator.
//! - [`precoding`]: zero-forcing precoders over the RIS-cascaded channel.
//! - [`rcg`]: Riemannian conjugate gradient on the complex circle manifold.
//! - [`ao`]: alternating optimisation of precoders and phases.
//! - [`harness`]: seeded Monte Carlo sweeps and CSV output.
//! - [`cli`]: the `risim` command-line front end.

pub mod ao;
pub mod channel;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod harness;
mod linalg;
pub mod precoding;
pub mod rcg;
pub mod sinr;

pub use error::{Error, Result};

use nalgebra::{Complex, DMatrix, DVector};

/// Complex double.
pub type C64 = Complex<f64>;
/// Dense complex column vector.
pub type CVector = DVector<C64>;
/// Dense complex matrix.
pub type CMatrix = DMatrix<C64>;

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts a power in watts to dBm.
pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Real inner product `Re{x^H y}` on C^n viewed as R^2n.
pub(crate) fn real_inner(x: &CVector, y: &CVector) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a.conj() * b).re).sum()
}
