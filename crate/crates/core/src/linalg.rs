//! Dense symmetric linear algebra.
//!
//! Everything here derives from one primitive, the symmetric
//! eigendecomposition: PSD square roots, cone projections, spectral norms
//! and the eigenvalue diagnostics attached to SPD solves.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance below which a negative eigenvalue is treated as
/// floating-point noise in a PSD matrix.
pub const PSD_REL_TOL: f64 = 1e-10;

const EIG_SWEEPS_PER_DIM: usize = 100;

/// A square real matrix stored exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Wraps `a` after replacing it with `(a + aᵀ) / 2`.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        Ok(Self(symmetrize(&a)))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

impl AsRef<DMatrix<f64>> for SymmetricMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors
/// stored column-wise.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest absolute eigenvalue, i.e. the spectral norm of the matrix.
    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |acc, l| acc.max(l.abs()))
    }

    /// `V diag(f(λ)) Vᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (j, lambda) in self.eigenvalues.iter().enumerate() {
            let s = f(*lambda);
            scaled.column_mut(j).scale_mut(s);
        }
        symmetrize(&(scaled * self.eigenvectors.transpose()))
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map_spectrum(|l| l)
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sym_eig(a: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let m = a.as_matrix();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sym_eig input"));
    }
    let dim = m.nrows();
    if dim == 0 {
        return Ok(EigenDecomposition {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let max_iter = EIG_SWEEPS_PER_DIM * dim;
    let eig = nalgebra::SymmetricEigen::try_new(m.clone(), f64::EPSILON, max_iter).ok_or_else(
        || Error::EigenNotConverged {
            dim,
            max_iter,
            residual: off_diagonal_norm(m),
        },
    )?;

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = DVector::from_iterator(dim, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Smallest eigenvalue of a symmetric matrix (`+∞` for the empty matrix).
pub fn min_eigenvalue(a: &SymmetricMatrix) -> Result<f64> {
    Ok(sym_eig(a)?.min_eigenvalue())
}

/// Absolute PSD tolerance `PSD_REL_TOL · ‖K‖₂` used for Gram-like matrices.
pub fn psd_tolerance(eig: &EigenDecomposition) -> f64 {
    PSD_REL_TOL * eig.spectral_norm()
}

/// Symmetric PSD square root. Eigenvalues within the relative tolerance of
/// zero are clipped; anything more negative is rejected.
pub fn sqrt_psd(k: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let eig = sym_eig(k)?;
    sqrt_from_eig(&eig)
}

pub(crate) fn sqrt_from_eig(eig: &EigenDecomposition) -> Result<SymmetricMatrix> {
    let tol = psd_tolerance(eig);
    let lo = eig.min_eigenvalue();
    if lo < -tol {
        return Err(Error::NotPsd {
            min_eigenvalue: lo,
            tolerance: tol,
        });
    }
    Ok(SymmetricMatrix(eig.map_spectrum(|l| l.max(0.0).sqrt())))
}

/// Frobenius-nearest PSD matrix: `V diag(max(λ, 0)) Vᵀ`.
pub fn psd_project(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let eig = sym_eig(a)?;
    Ok(SymmetricMatrix(eig.map_spectrum(|l| l.max(0.0))))
}

/// Largest singular value, computed from the smaller of the two Gram
/// matrices `AᵀA` / `AAᵀ`.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let gram = if a.nrows() >= a.ncols() {
        a.transpose() * a
    } else {
        a * a.transpose()
    };
    match SymmetricMatrix::new(gram).and_then(|g| sym_eig(&g)) {
        Ok(eig) => eig.max_eigenvalue().max(0.0).sqrt(),
        Err(_) => f64::NAN,
    }
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky.
pub fn solve_spd(a: &SymmetricMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    if b.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            context: "solve_spd right-hand side",
            expected: a.dim(),
            found: b.len(),
        });
    }
    match a.as_matrix().clone().cholesky() {
        Some(chol) => Ok(chol.solve(b)),
        None => Err(Error::NotPositiveDefinite {
            min_eigenvalue: min_eigenvalue(a)?,
        }),
    }
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn skew_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a - a.transpose()) * 0.5
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if i != j {
                acc += a[(i, j)] * a[(i, j)];
            }
        }
    }
    acc.sqrt()
}

#[cfg(test)]
pub(crate) mod test_util {
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    pub fn random_symmetric(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
        super::symmetrize(&random_matrix(rng, dim, dim))
    }
}
