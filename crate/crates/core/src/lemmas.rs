//! Explicit finite feature maps and numerical checks of the structural
//! facts the kernel formulation rests on. Nothing in model evaluation
//! depends on this module.
//!
//! For the bilinear kernel `k(u, v) = uᵀv·I` the feature map
//! `φ(u)x = u ⊗ x` is exact, and the stacked map `Φ` has `i`-th block
//! column `uᵢ ⊗ I_m`, so `ΦᵀΦ = K`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{self, KernelSpec};
use crate::linalg::{self, SymmetricMatrix};
use crate::CoefficientVector;

#[derive(Debug, Clone)]
pub struct ExplicitFeatureMap {
    m: usize,
    feature_dim: usize,
}

impl ExplicitFeatureMap {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// `f(u) = u`.
    pub fn features(&self, u: &CoefficientVector) -> DVector<f64> {
        u.clone()
    }

    /// `φ(u) = f(u) ⊗ I_m`, a `dm × m` matrix.
    pub fn lift(&self, u: &CoefficientVector) -> DMatrix<f64> {
        self.features(u).kronecker(&DMatrix::identity(self.m, self.m))
    }

    /// `Φ = [φ(u₁) … φ(uₙ)]`, `dm × nm`.
    pub fn stack(&self, inputs: &[CoefficientVector]) -> DMatrix<f64> {
        let n = inputs.len();
        let mut phi = DMatrix::zeros(self.feature_dim * self.m, n * self.m);
        for (i, u) in inputs.iter().enumerate() {
            phi.columns_mut(i * self.m, self.m).copy_from(&self.lift(u));
        }
        phi
    }
}

/// The exact feature map of `spec` and the stacked `Φ` for `inputs`.
pub fn explicit_features(
    spec: &KernelSpec,
    inputs: &[CoefficientVector],
) -> Result<(ExplicitFeatureMap, DMatrix<f64>)> {
    if !matches!(spec, KernelSpec::Bilinear) {
        return Err(Error::UnsupportedKernel(spec.name()));
    }
    let m = inputs.first().map_or(0, |u| u.len());
    if m == 0 || inputs.iter().any(|u| u.len() != m) {
        return Err(Error::InvalidArgument("inputs must be nonempty with a common dimension".into()));
    }
    let map = ExplicitFeatureMap { m, feature_dim: m };
    let phi = map.stack(inputs);
    Ok((map, phi))
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    /// `|L(ΠQΠ) − L(Q)|`
    pub loss_change: f64,
    /// `‖ΠQΠ‖ − ‖Q‖`, nonpositive up to rounding.
    pub norm_excess: f64,
    /// `min eig(Q + Qᵀ)`
    pub min_sym_eigenvalue: f64,
    /// `min eig(ΠQΠ + (ΠQΠ)ᵀ)`
    pub min_sym_eigenvalue_projected: f64,
    /// `‖Π − ΦNΦᵀ‖_F` with `N = Φ⁺Π(Φ⁺)ᵀ`.
    pub projector_reconstruction: f64,
    /// `max |φ(u)ᵀΦMΦᵀφ(u)u − κ(u)ᵀMκ(u)u|` over the training inputs.
    pub kernel_form_error: f64,
    /// `|‖ΦMΦᵀ‖ − ‖K^{1/2}MK^{1/2}‖|`
    pub norm_lemma_error: f64,
}

/// `L(Q) = Σᵢ ‖φ(uᵢ)ᵀQφ(uᵢ)uᵢ − yᵢ‖²`.
pub fn feature_loss(map: &ExplicitFeatureMap, dataset: &Dataset, q: &DMatrix<f64>) -> f64 {
    dataset
        .inputs()
        .iter()
        .zip(dataset.outputs())
        .map(|(u, y)| {
            let lift = map.lift(u);
            (lift.tr_mul(&(q * (&lift * u))) - y).norm_squared()
        })
        .sum()
}

/// Orthogonal projector onto the range of `Φ`, from the eigenvectors of
/// `ΦΦᵀ` above `1e-10·‖ΦΦᵀ‖₂`.
pub fn range_projector(phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = linalg::sym_eig(&SymmetricMatrix::new(phi * phi.transpose())?)?;
    let cutoff = 1e-10 * eig.spectral_norm();
    Ok(eig.map_spectrum(|l| if l > cutoff { 1.0 } else { 0.0 }))
}

/// Checks the projection, nonnegativity, representer and norm identities
/// for the bilinear feature map on `dataset`, an operator `q` on the
/// feature space and a coefficient matrix `m_matrix`.
pub fn verify_lemmas(dataset: &Dataset, q: &DMatrix<f64>, m_matrix: &DMatrix<f64>) -> Result<LemmaReport> {
    let spec = KernelSpec::Bilinear;
    let (map, phi) = explicit_features(&spec, dataset.inputs())?;
    let wdim = phi.nrows();
    if q.nrows() != wdim || q.ncols() != wdim {
        return Err(Error::DimensionMismatch {
            context: "feature-space operator",
            expected: wdim,
            found: q.nrows(),
        });
    }
    let nm = phi.ncols();
    if m_matrix.nrows() != nm || m_matrix.ncols() != nm {
        return Err(Error::DimensionMismatch {
            context: "coefficient matrix",
            expected: nm,
            found: m_matrix.nrows(),
        });
    }

    let pi = range_projector(&phi)?;
    let pqp = &pi * q * &pi;
    let loss_change = (feature_loss(&map, dataset, &pqp) - feature_loss(&map, dataset, q)).abs();
    let norm_excess = linalg::operator_norm(&pqp) - linalg::operator_norm(q);
    let sym_min = |a: &DMatrix<f64>| -> Result<f64> { linalg::min_eigenvalue(&SymmetricMatrix::new(a + a.transpose())?) };

    let phi_pinv = phi
        .clone()
        .pseudo_inverse(1e-10 * linalg::operator_norm(&phi))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let n_matrix = &phi_pinv * &pi * phi_pinv.transpose();
    let projector_reconstruction = (&pi - &phi * n_matrix * phi.transpose()).norm();

    let q_hat = &phi * m_matrix * phi.transpose();
    let mut kernel_form_error: f64 = 0.0;
    for u in dataset.inputs() {
        let lift = map.lift(u);
        let via_features = lift.tr_mul(&(&q_hat * (&lift * u)));
        let stack = kernels::kappa(&spec, dataset.inputs(), u)?;
        let via_kernel = stack.as_matrix().tr_mul(&(m_matrix * stack.apply(u)));
        kernel_form_error = kernel_form_error.max((via_features - via_kernel).amax());
    }

    let gram = kernels::gram(&spec, dataset.inputs())?;
    let root = linalg::sqrt_psd(gram.matrix())?;
    let r = root.as_matrix();
    let norm_lemma_error = (linalg::operator_norm(&q_hat) - linalg::operator_norm(&(r * m_matrix * r))).abs();

    Ok(LemmaReport {
        loss_change,
        norm_excess,
        min_sym_eigenvalue: sym_min(q)?,
        min_sym_eigenvalue_projected: sym_min(&pqp)?,
        projector_reconstruction,
        kernel_form_error,
        norm_lemma_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::test_util::random_matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> CoefficientVector {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn feature_map_examples() {
        let (_, phi) = explicit_features(&KernelSpec::Bilinear, &[v(&[2.0])]).unwrap();
        assert_eq!(phi, DMatrix::from_element(1, 1, 2.0));
        assert_eq!(phi.tr_mul(&phi)[(0, 0)], 4.0);

        let (_, phi) = explicit_features(&KernelSpec::Bilinear, &[v(&[1.0, 0.0]), v(&[0.0, 1.0])]).unwrap();
        assert_eq!(phi.tr_mul(&phi), DMatrix::identity(4, 4));

        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = random_matrix(&mut rng, 3, 2);
        let inputs: Vec<_> = x.row_iter().map(|r| r.transpose()).collect();
        let (map, phi) = explicit_features(&KernelSpec::Bilinear, &inputs).unwrap();
        let gram = kernels::gram(&KernelSpec::Bilinear, &inputs).unwrap();
        assert!((phi.tr_mul(&phi) - gram.as_matrix()).norm() <= 1e-12);
        assert_eq!(map.features(&inputs[0]), inputs[0]);

        assert!(matches!(
            explicit_features(&KernelSpec::gaussian(1.0).unwrap(), &inputs),
            Err(Error::UnsupportedKernel(_))
        ));
    }

    fn random_fixture(rng: &mut ChaCha8Rng) -> Dataset {
        let n = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=3);
        let x = random_matrix(rng, n, m);
        let y = random_matrix(rng, n, m);
        Dataset::new(
            x.row_iter().map(|r| r.transpose()).collect(),
            y.row_iter().map(|r| r.transpose()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_and_identity_operators() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let d = random_fixture(&mut rng);
        let w = d.m() * d.m();
        let nm = d.n() * d.m();
        let r = verify_lemmas(&d, &DMatrix::zeros(w, w), &DMatrix::zeros(nm, nm)).unwrap();
        assert_eq!(r.loss_change, 0.0);
        assert_eq!(r.norm_excess, 0.0);
        assert_eq!(r.kernel_form_error, 0.0);
        assert_eq!(r.norm_lemma_error, 0.0);
        let r = verify_lemmas(&d, &DMatrix::identity(w, w), &DMatrix::zeros(nm, nm)).unwrap();
        assert!(r.loss_change <= 1e-10);
    }

    #[test]
    fn lemmas_on_random_fixtures() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..50 {
            let d = random_fixture(&mut rng);
            let w = d.m() * d.m();
            let nm = d.n() * d.m();
            let a = random_matrix(&mut rng, w, w);
            let s = random_matrix(&mut rng, w, w);
            let q = &a * a.transpose() + &s - s.transpose();
            let m_matrix = random_matrix(&mut rng, nm, nm);
            let r = verify_lemmas(&d, &q, &m_matrix).unwrap();
            let scale = 1.0 + q.norm();
            assert!(r.loss_change <= 1e-9 * scale.powi(2), "{r:?}");
            assert!(r.norm_excess <= 1e-10 * scale, "{r:?}");
            assert!(r.min_sym_eigenvalue >= -1e-10 * scale);
            assert!(r.min_sym_eigenvalue_projected >= -1e-10 * scale, "{r:?}");
            assert!(r.projector_reconstruction <= 1e-8, "{r:?}");
            assert!(r.kernel_form_error <= 1e-10 * (1.0 + m_matrix.norm()).powi(2), "{r:?}");
            assert!(r.norm_lemma_error <= 1e-10 * (1.0 + m_matrix.norm()) * 10.0, "{r:?}");
        }
    }
}
