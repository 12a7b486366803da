//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Diagonal jitters tried, in order, when factoring a covariance matrix.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-9, 1e-6];

/// Entrywise tolerance for `L Lᵀ` to count as a reconstruction of the input.
pub const RECONSTRUCTION_TOL: f64 = 1e-6;

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// `xᵀ A x` for a square `A`.
pub fn quad_form(a: &DMatrix<f64>, x: &[f64]) -> f64 {
    let n = x.len();
    debug_assert_eq!(a.nrows(), n);
    let mut acc = 0.0;
    for j in 0..n {
        if x[j] == 0.0 {
            continue;
        }
        let col = a.column(j);
        let mut s = 0.0;
        for i in 0..n {
            s += x[i] * col[i];
        }
        acc += s * x[j];
    }
    acc
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Replaces every eigenvalue below `floor` by `floor`.
///
/// Returns the clipped matrix and whether anything changed.
pub fn psd_clip(a: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, bool) {
    let eig = SymmetricEigen::new(symmetrize(a));
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return (symmetrize(a), false);
    }
    let clipped = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    (symmetrize(&out), true)
}

/// Cholesky factorization that accepts zero pivots.
///
/// A pivot within `tol` of zero yields a zero column, so exactly singular PSD
/// inputs such as the zero matrix factor without perturbation. Returns `None`
/// on a negative pivot.
fn semidefinite_cholesky(a: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag < -tol {
            return None;
        }
        if diag <= tol {
            continue;
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Lower-triangular `L` with `L Lᵀ ≈ a`, escalating a diagonal jitter through
/// [`JITTER_LADDER`] until the reconstruction is within [`RECONSTRUCTION_TOL`].
pub fn cholesky_with_jitter(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let n = a.nrows();
    let sym = symmetrize(a);
    let scale = max_abs(&sym).max(1.0);
    for &jitter in &JITTER_LADDER {
        let shifted = &sym + DMatrix::<f64>::identity(n, n) * jitter;
        let Some(l) = semidefinite_cholesky(&shifted, 1e-14 * scale) else {
            continue;
        };
        let recon = &l * l.transpose();
        if max_abs(&(recon - &sym)) <= RECONSTRUCTION_TOL {
            return Ok((l, jitter));
        }
    }
    Err(Error::Cholesky {
        jitter: *JITTER_LADDER.last().unwrap(),
    })
}

/// Moore-Penrose inverse of a full-column-rank matrix via the normal equations.
pub fn left_pseudo_inverse(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = b.transpose() * b;
    let inv = gram
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("BᵀB is not positive definite".into()))?
        .inverse();
    Ok(inv * b.transpose())
}

/// Solves `a x = b` for symmetric positive-definite `a`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().cholesky().map(|c| c.solve(b))
}
