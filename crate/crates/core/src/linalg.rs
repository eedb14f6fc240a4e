//! Complex products routed through real GEMM.

use nalgebra::DMatrix;

use crate::{CMatrix, C64};

pub(crate) fn split(m: &CMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    (m.map(|z| z.re), m.map(|z| z.im))
}

fn join(re: DMatrix<f64>, im: &DMatrix<f64>) -> CMatrix {
    CMatrix::from_fn(re.nrows(), re.ncols(), |i, j| {
        C64::new(re[(i, j)], im[(i, j)])
    })
}

/// `a * b` for complex `a` and real `b`.
pub(crate) fn mul_complex_real(a: &CMatrix, b: &DMatrix<f64>) -> CMatrix {
    let (ar, ai) = split(a);
    join(ar * b, &(ai * b))
}

/// `a * b` for complex `a`, `b`.
pub(crate) fn mul_complex(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    join(re, &im)
}
