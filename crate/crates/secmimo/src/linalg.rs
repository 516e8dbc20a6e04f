//! Dense complex Hermitian kernels: eigendecomposition, principal square
//! root, numerical null-space extraction, and positive-definite solves.
//!
//! Backed by `faer`, pinned to sequential mode so every result is
//! bit-identical regardless of how many threads the caller runs.

use faer::linalg::solvers::Solve;
use faer::{c64, ColRef, Mat, MatRef, Par, Side};
use std::sync::Once;

use crate::error::{Error, Result};

/// Complex scalar used throughout the crate (`num_complex::Complex<f64>`).
pub type C64 = c64;

/// Per-entry Hermitian-deviation tolerance.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues above `-PSD_REL_TOL * lambda_max` count as nonnegative.
pub const PSD_REL_TOL: f64 = 1e-10;

static BACKEND_INIT: Once = Once::new();

/// Forces sequential execution inside the matrix backend. Reductions then
/// have a fixed association order, the precondition for reproducibility
/// across thread counts.
fn deterministic_backend() {
    BACKEND_INIT.call_once(|| faer::set_global_parallelism(Par::Seq));
}

/// A validated Hermitian matrix, optionally tagged PSD by its builder.
///
/// The tag is a promise made at construction (e.g. a nonnegative quadrature
/// mixture of rank-one terms); operations that need PSD-ness still verify
/// eigenvalues against [`PSD_REL_TOL`].
#[derive(Clone, Debug)]
pub struct HermitianMatrix {
    mat: Mat<c64>,
    psd: bool,
}

impl HermitianMatrix {
    /// Validates Hermitian symmetry entrywise within [`HERMITIAN_TOL`].
    pub fn from_mat(mat: Mat<c64>) -> Result<Self> {
        Self::validated(mat, false)
    }

    /// As [`from_mat`](Self::from_mat), additionally tagging the matrix PSD.
    pub fn from_mat_psd(mat: Mat<c64>) -> Result<Self> {
        Self::validated(mat, true)
    }

    fn validated(mat: Mat<c64>, psd: bool) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::Validation(format!(
                "Hermitian matrix must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        for j in 0..mat.ncols() {
            for i in 0..=j {
                let dev = (mat[(i, j)] - mat[(j, i)].conj()).norm();
                if dev > HERMITIAN_TOL {
                    return Err(Error::NotHermitian {
                        row: i,
                        col: j,
                        deviation: dev,
                        tol: HERMITIAN_TOL,
                    });
                }
            }
        }
        Ok(Self { mat, psd })
    }

    /// Projects `mat` onto its Hermitian part `(A + A^H)/2`; always valid.
    pub fn symmetrized(mat: Mat<c64>, psd: bool) -> Self {
        let n = mat.nrows();
        assert_eq!(n, mat.ncols(), "symmetrized input must be square");
        let sym = Mat::from_fn(n, n, |i, j| (mat[(i, j)] + mat[(j, i)].conj()) * 0.5);
        Self { mat: sym, psd }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            mat: Mat::zeros(dim, dim),
            psd: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: Mat::identity(dim, dim),
            psd: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_mat(&self) -> MatRef<'_, c64> {
        self.mat.as_ref()
    }

    pub fn is_psd_tagged(&self) -> bool {
        self.psd
    }

    /// Real trace; the imaginary part is zero by the type invariant.
    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).sum()
    }
}

/// Eigendecomposition with eigenvalues sorted descending.
///
/// Ties keep the deterministic order produced by the backend for a fixed
/// input; callers must only rely on basis-invariant quantities.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// Descending real eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Unitary matrix whose column `j` pairs with `eigenvalues[j]`.
    pub vectors: Mat<c64>,
}

/// Full eigendecomposition of a Hermitian matrix.
pub fn hermitian_eig(a: &HermitianMatrix) -> Result<EigenDecomposition> {
    deterministic_backend();
    let evd = a
        .as_mat()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::EigenFailed)?;
    let n = a.dim();
    let (s, u) = (evd.S(), evd.U());
    // faer sorts ascending; flip to the descending contract.
    let eigenvalues: Vec<f64> = (0..n).rev().map(|i| s[i].re).collect();
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    Ok(EigenDecomposition {
        eigenvalues,
        vectors,
    })
}

/// Principal (Hermitian PSD) square root.
///
/// Eigenvalues within `PSD_REL_TOL * lambda_max` of zero are numerically zero
/// and map to zero, in both directions: small negatives make the operation
/// total on quadrature-built inputs, and small positives would otherwise
/// inject sqrt(eps)-sized ghost components into exact null directions.
/// Anything below `-PSD_REL_TOL * lambda_max` is a genuine PSD violation.
pub fn hermitian_sqrt(a: &HermitianMatrix) -> Result<Mat<c64>> {
    let eig = hermitian_eig(a)?;
    let lambda_max = eig.eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let threshold = PSD_REL_TOL * lambda_max;
    let mut scaled = eig.vectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -threshold {
            return Err(Error::NotPsd {
                min_eig: lambda,
                threshold: -threshold,
            });
        }
        let root = if lambda <= threshold {
            0.0
        } else {
            lambda.sqrt()
        };
        for i in 0..a.dim() {
            scaled[(i, j)] *= root;
        }
    }
    Ok(&scaled * eig.vectors.adjoint())
}

/// Orthonormal basis of the numerical null space: eigenvectors whose
/// eigenvalues satisfy `lambda <= rel_tol * lambda_max`.
///
/// The zero matrix has no positive eigenvalue and yields the full identity
/// basis. Columns are ordered by descending eigenvalue (the tail of the
/// decomposition), deterministic for a fixed input.
pub fn null_space_basis(a: &HermitianMatrix, rel_tol: f64) -> Result<Mat<c64>> {
    if !(0.0..1.0).contains(&rel_tol) || rel_tol == 0.0 {
        return Err(Error::Validation(format!(
            "null-space rel_tol must be in (0, 1), got {rel_tol}"
        )));
    }
    let n = a.dim();
    let eig = hermitian_eig(a)?;
    let lambda_max = eig.eigenvalues.first().copied().unwrap_or(0.0);
    if lambda_max <= 0.0 {
        return Ok(Mat::identity(n, n));
    }
    let threshold = rel_tol * lambda_max;
    let keep: Vec<usize> = (0..n)
        .filter(|&j| eig.eigenvalues[j] <= threshold)
        .collect();
    Ok(Mat::from_fn(n, keep.len(), |i, j| {
        eig.vectors[(i, keep[j])]
    }))
}

/// Solves `A X = B` for Hermitian positive-definite `A` via Cholesky.
///
/// A factorization breakdown is reported as a conditioning error carrying the
/// eigenvalue-based condition estimate.
pub fn solve_hermitian(a: &HermitianMatrix, b: MatRef<'_, c64>) -> Result<Mat<c64>> {
    deterministic_backend();
    if b.nrows() != a.dim() {
        return Err(Error::Validation(format!(
            "solve dimension mismatch: A is {}x{}, B has {} rows",
            a.dim(),
            a.dim(),
            b.nrows()
        )));
    }
    match a.as_mat().llt(Side::Lower) {
        Ok(llt) => Ok(llt.solve(b)),
        Err(_) => {
            let cond = match hermitian_eig(a) {
                Ok(eig) => {
                    let max = eig.eigenvalues.first().copied().unwrap_or(0.0).abs();
                    let min = eig.eigenvalues.last().copied().unwrap_or(0.0).abs();
                    if min > 0.0 {
                        max / min
                    } else {
                        f64::INFINITY
                    }
                }
                Err(_) => f64::INFINITY,
            };
            Err(Error::Singular { cond })
        }
    }
}

/// `tr(A B)` as `sum_{i,j} A[i][j] * B[j][i]` without forming the product.
pub(crate) fn trace_product(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> c64 {
    let n = a.nrows();
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(b.ncols(), n);
    let mut acc = c64::new(0.0, 0.0);
    for j in 0..a.ncols() {
        for i in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// `tr(A B)` for Hermitian `A`, `B`: real, and computable over contiguous
/// columns as `sum_{i,j} A[i][j] * conj(B[i][j])`.
pub(crate) fn herm_trace_product(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    let n = a.nrows();
    debug_assert_eq!(n, b.nrows());
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            let x = a[(i, j)];
            let y = b[(i, j)];
            acc += x.re * y.re + x.im * y.im;
        }
    }
    acc
}

/// `a^H b` over two columns of equal length.
pub(crate) fn inner(a: ColRef<'_, c64>, b: ColRef<'_, c64>) -> c64 {
    debug_assert_eq!(a.nrows(), b.nrows());
    let mut acc = c64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        acc += a[i].conj() * b[i];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_square() {
        assert!(matches!(
            HermitianMatrix::from_mat(Mat::zeros(2, 3)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn rejects_asymmetry_naming_the_pair() {
        let mut m: Mat<c64> = Mat::identity(3, 3);
        m[(0, 2)] = c64::new(0.5, 0.0);
        match HermitianMatrix::from_mat(m) {
            Err(Error::NotHermitian { row, col, .. }) => assert_eq!((row, col), (0, 2)),
            other => panic!("expected NotHermitian, got {other:?}"),
        }
    }

    #[test]
    fn trace_product_matches_explicit_product() {
        let a = Mat::from_fn(3, 3, |i, j| c64::new((i + 2 * j) as f64, j as f64));
        let b = Mat::from_fn(3, 3, |i, j| c64::new(1.0 + i as f64, -(j as f64)));
        let prod = &a * &b;
        let direct: c64 = (0..3).map(|i| prod[(i, i)]).sum();
        let fast = trace_product(a.as_ref(), b.as_ref());
        assert!((direct - fast).norm() < 1e-12);
    }
}
