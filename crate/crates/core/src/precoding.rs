//! Zero-forcing precoding over the RIS-cascaded channel.

use nalgebra::SymmetricEigen;

use crate::rcg::PhaseVector;
use crate::{CMatrix, CVector, Error, Result};

/// Largest accepted condition number of `H_eff H_eff^H`.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Unit-norm precoders (columns of `vectors`, `T x K`) and the effective
/// channel they were computed from (`K x T`).
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub vectors: CMatrix,
    pub effective_channel: CMatrix,
}

impl PrecoderSet {
    pub fn num_users(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn column(&self, k: usize) -> CVector {
        self.vectors.column(k).into_owned()
    }
}

/// Effective channel with row `k` equal to `g_k^H Theta H`, where the
/// reflection matrix is `Theta = diag(conj(theta))`. With this convention
/// `[H_eff u]_k = theta^H diag(g_k^*) H u`, the cascade form used by
/// [`crate::sinr`].
pub fn effective_channel(g: &[CVector], theta: &PhaseVector, h: &CMatrix) -> Result<CMatrix> {
    let n = theta.len();
    if h.nrows() != n {
        return Err(Error::Dimension(format!(
            "H has {} rows but theta has {} entries",
            h.nrows(),
            n
        )));
    }
    let mut out = CMatrix::zeros(g.len(), h.ncols());
    for (k, gk) in g.iter().enumerate() {
        if gk.len() != n {
            return Err(Error::Dimension(format!(
                "g_{} has {} entries, expected {n}",
                k + 1,
                gk.len()
            )));
        }
        let x = gk.zip_map(theta.as_vector(), |a, t| (a * t).conj());
        out.set_row(k, &(x.transpose() * h));
    }
    Ok(out)
}

/// `H_eff^H (H_eff H_eff^H)^{-1}` with each column scaled to unit norm.
pub fn zf_precoder(h_eff: &CMatrix) -> Result<PrecoderSet> {
    let (k, t) = h_eff.shape();
    if k == 0 || k > t {
        return Err(Error::Dimension(format!(
            "ZF needs 1 <= K <= T, got K={k}, T={t}"
        )));
    }
    let gram = h_eff * h_eff.adjoint();
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(cond.is_finite() && cond <= MAX_GRAM_CONDITION) {
        return Err(Error::ZfDegenerate(cond));
    }
    let inv = gram.cholesky().ok_or(Error::ZfDegenerate(cond))?.inverse();
    let mut vectors = h_eff.adjoint() * inv;
    for mut col in vectors.column_iter_mut() {
        let norm = col.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::ZfDegenerate(cond));
        }
        col.unscale_mut(norm);
    }
    Ok(PrecoderSet {
        vectors,
        effective_channel: h_eff.clone(),
    })
}
