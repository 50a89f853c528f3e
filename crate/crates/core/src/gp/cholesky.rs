use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Diagonal inflations tried in order by [`cholesky_with_jitter`].
pub const JITTER_LADDER: [f64; 5] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4];

/// Cholesky factor of `a + jitter·I` for the smallest jitter in
/// [`JITTER_LADDER`] that factorizes.
pub fn cholesky_with_jitter(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if !a.is_square() {
        return Err(Error::InvalidArgument(format!(
            "cholesky of a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("cholesky input has non-finite entries".into()));
    }
    let m = a.nrows();
    for &jitter in &JITTER_LADDER {
        let mut shifted = a.clone();
        for i in 0..m {
            shifted[(i, i)] += jitter;
        }
        if let Some(chol) = nalgebra::Cholesky::new(shifted) {
            let l = chol.unpack();
            if (0..m).all(|i| l[(i, i)] > 0.0 && l[(i, i)].is_finite()) {
                return Ok((l, jitter));
            }
        }
    }
    Err(Error::Numerical(format!(
        "matrix of size {m} not positive definite: rejected every jitter from {:e} up to {:e}",
        JITTER_LADDER[0],
        JITTER_LADDER[JITTER_LADDER.len() - 1]
    )))
}

/// Forward-mode derivative of the Cholesky factor.
///
/// Given `L = chol(A)` and a symmetric direction `dA`, returns
/// `dL = L·Φ(L⁻¹ dA L⁻ᵀ)` where `Φ` keeps the strict lower triangle and
/// halves the diagonal.
pub fn cholesky_derivative(l: &DMatrix<f64>, da: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = l.nrows();
    if !l.is_square() || da.shape() != (m, m) {
        return Err(Error::InvalidArgument(format!(
            "cholesky_derivative shapes {:?} and {:?}",
            l.shape(),
            da.shape()
        )));
    }
    if (0..m).any(|i| !(l[(i, i)].abs() > 0.0)) {
        return Err(Error::Numerical("singular Cholesky factor".into()));
    }
    let left = l
        .solve_lower_triangular(da)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let mut phi = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    for i in 0..m {
        phi[(i, i)] *= 0.5;
        for j in (i + 1)..m {
            phi[(i, j)] = 0.0;
        }
    }
    Ok(l * phi)
}
