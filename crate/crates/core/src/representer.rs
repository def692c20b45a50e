//! Unconstrained kernel regression baseline: `(K + γI)c = y`,
//! `Ĝu = Σᵢ k(u, uᵢ) cᵢ`. No nonnegativity is imposed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{self, KernelSpec};
use crate::linalg::{self, SymmetricMatrix};
use crate::serde_util;
use crate::CoefficientVector;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepresenterModel {
    pub kernel: KernelSpec,
    pub gamma: f64,
    #[serde(with = "serde_util::vectors")]
    pub inputs: Vec<CoefficientVector>,
    #[serde(with = "serde_util::vectors")]
    pub coefficients: Vec<CoefficientVector>,
}

pub fn fit_unconstrained(spec: &KernelSpec, dataset: &Dataset, gamma: f64) -> Result<RepresenterModel> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let gram = kernels::gram(spec, dataset.inputs())?;
    let dim = gram.n() * gram.m();
    let regularized = gram.as_matrix() + DMatrix::identity(dim, dim) * gamma;
    let system = SymmetricMatrix::new(regularized)?;
    let y = dataset.stacked_outputs();

    let c = linalg::solve_spd(&system, &y).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => ill_conditioned(&system, f64::NAN),
        other => other,
    })?;
    let residual = (system.as_matrix() * &c - &y).norm();
    if !(residual <= 1e-8 * (1.0 + y.norm())) {
        return Err(ill_conditioned(&system, residual));
    }

    let m = gram.m();
    let coefficients = (0..gram.n())
        .map(|i| c.rows(i * m, m).into_owned())
        .collect();
    Ok(RepresenterModel {
        kernel: *spec,
        gamma,
        inputs: dataset.inputs().to_vec(),
        coefficients,
    })
}

fn ill_conditioned(system: &SymmetricMatrix, residual: f64) -> Error {
    let condition_estimate = linalg::sym_eig(system)
        .map(|e| e.max_eigenvalue() / e.min_eigenvalue())
        .unwrap_or(f64::NAN);
    Error::IllConditioned {
        condition_estimate,
        residual,
    }
}

impl RepresenterModel {
    pub fn m(&self) -> usize {
        self.inputs.first().map_or(0, |u| u.len())
    }

    pub fn predict(&self, u: &CoefficientVector) -> Result<CoefficientVector> {
        let stack = kernels::kappa(&self.kernel, &self.inputs, u)?;
        let c = DVector::from_iterator(
            stack.as_matrix().nrows(),
            self.coefficients.iter().flat_map(|c| c.iter().copied()),
        );
        // Σᵢ k(u, uᵢ) cᵢ with k(u, uᵢ) = k(uᵢ, u)ᵀ.
        Ok(stack.as_matrix().transpose() * c)
    }

    /// `‖(K + γI)c − y‖₂`.
    pub fn residual(&self, dataset: &Dataset) -> Result<f64> {
        let gram = kernels::gram(&self.kernel, &self.inputs)?;
        let dim = gram.n() * gram.m();
        let c = DVector::from_iterator(dim, self.coefficients.iter().flat_map(|c| c.iter().copied()));
        let lhs = gram.as_matrix() * &c + &c * self.gamma;
        Ok((lhs - dataset.stacked_outputs()).norm())
    }

    pub fn misfit(&self, dataset: &Dataset) -> Result<f64> {
        let mut total = 0.0;
        for (u, y) in dataset.inputs().iter().zip(dataset.outputs()) {
            total += (self.predict(u)? - y).norm_squared();
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::test_util::random_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> CoefficientVector {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn zero_outputs_give_zero_coefficients() {
        let d = Dataset::new(vec![v(&[1.0, 2.0]), v(&[0.0, 1.0])], vec![v(&[0.0, 0.0]); 2]).unwrap();
        let model = fit_unconstrained(&KernelSpec::gaussian(1.0).unwrap(), &d, 0.1).unwrap();
        assert!(model.coefficients.iter().all(|c| c.iter().all(|x| *x == 0.0)));
        assert_eq!(model.predict(&v(&[3.0, 3.0])).unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn scalar_hand_solved() {
        let d = Dataset::new(vec![v(&[1.0])], vec![v(&[1.0])]).unwrap();
        let model = fit_unconstrained(&KernelSpec::Bilinear, &d, 1.0).unwrap();
        assert!((model.coefficients[0][0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_gamma() {
        let d = Dataset::new(vec![v(&[1.0])], vec![v(&[1.0])]).unwrap();
        assert!(fit_unconstrained(&KernelSpec::Bilinear, &d, 0.0).is_err());
        assert!(fit_unconstrained(&KernelSpec::Bilinear, &d, -1.0).is_err());
    }

    #[test]
    fn predictions_at_training_inputs_match_gram_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 4, 3);
        let y = random_matrix(&mut rng, 4, 3);
        let inputs: Vec<_> = x.row_iter().map(|r| r.transpose()).collect();
        let outputs: Vec<_> = y.row_iter().map(|r| r.transpose()).collect();
        let d = Dataset::new(inputs.clone(), outputs).unwrap();
        let spec = KernelSpec::laplacian(1.5).unwrap();
        let model = fit_unconstrained(&spec, &d, 1e-2).unwrap();
        let g = kernels::gram(&spec, &inputs).unwrap();
        let c = DVector::from_iterator(12, model.coefficients.iter().flat_map(|c| c.iter().copied()));
        let kc = g.as_matrix() * c;
        for (j, u) in inputs.iter().enumerate() {
            let p = model.predict(u).unwrap();
            assert!((p - kc.rows(3 * j, 3)).norm() < 1e-12);
        }
        // Orthogonal probe under the bilinear kernel predicts zero.
        let d = Dataset::new(vec![v(&[1.0, 0.0])], vec![v(&[2.0, 1.0])]).unwrap();
        let model = fit_unconstrained(&KernelSpec::Bilinear, &d, 0.5).unwrap();
        assert_eq!(model.predict(&v(&[0.0, 4.0])).unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn misfit_monotone_in_gamma_and_interpolates_as_gamma_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let x = random_matrix(&mut rng, 5, 2);
            let y = random_matrix(&mut rng, 5, 2);
            let inputs: Vec<_> = x.row_iter().map(|r| r.transpose()).collect();
            let outputs: Vec<_> = y.row_iter().map(|r| r.transpose()).collect();
            let d = Dataset::new(inputs, outputs).unwrap();
            let spec = KernelSpec::gaussian(0.7).unwrap();
            let mut last = -1.0;
            for gamma in [1e-6, 1e-4, 1e-2, 1.0] {
                let l = fit_unconstrained(&spec, &d, gamma).unwrap().misfit(&d).unwrap();
                assert!(l >= last - 1e-14, "misfit decreased: {last} -> {l}");
                last = l;
            }
            let model = fit_unconstrained(&spec, &d, 1e-10).unwrap();
            let ynorm = d.stacked_outputs().norm();
            for (u, y) in d.inputs().iter().zip(d.outputs()) {
                assert!((model.predict(u).unwrap() - y).norm() <= 1e-6 * ynorm);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let d = Dataset::new(vec![v(&[1.0, 0.5])], vec![v(&[0.2, 0.1])]).unwrap();
        let model = fit_unconstrained(&KernelSpec::Bilinear, &d, 0.3).unwrap();
        let text = serde_json::to_string(&model).unwrap();
        let back: RepresenterModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back.coefficients, model.coefficients);
        assert_eq!(back.kernel, model.kernel);
    }
}
