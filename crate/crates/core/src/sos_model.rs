//! The identified operator `G(u) = κ(u)ᵀ M κ(u) u` with `M + Mᵀ ⪰ 0`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{self, GramMatrix, KernelSpec};
use crate::legendre::SampledSignal;
use crate::linalg::{self, SymmetricMatrix};
use crate::rtac::cumulative_inner_product;
use crate::sdp::{self, KktResiduals, SolveStatus, SolverOptions};
use crate::serde_util;
use crate::CoefficientVector;

/// Relative tolerance of the certified nonnegativity check.
pub const NONNEGATIVITY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub misfit: f64,
    pub norm_term: f64,
    pub objective: f64,
    pub solver_status: SolveStatus,
    pub iterations: usize,
    pub kkt: KktResiduals,
    /// Smallest eigenvalue of `M + Mᵀ`.
    pub min_sym_eigenvalue: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct SosModel {
    kernel: KernelSpec,
    gamma: f64,
    inputs: Vec<CoefficientVector>,
    m_matrix: DMatrix<f64>,
    diagnostics: Diagnostics,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    kernel: KernelSpec,
    gamma: f64,
    #[serde(with = "serde_util::vectors")]
    inputs: Vec<CoefficientVector>,
    #[serde(rename = "M", with = "serde_util::square_row_major")]
    m_matrix: DMatrix<f64>,
    n: usize,
    m: usize,
    diagnostics: Diagnostics,
}

impl TryFrom<RawModel> for SosModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        let n = raw.inputs.len();
        let m = raw.inputs.first().map_or(0, |u| u.len());
        if n != raw.n || m != raw.m {
            return Err(Error::DimensionMismatch {
                context: "model header vs stored inputs",
                expected: raw.n * raw.m,
                found: n * m,
            });
        }
        Self::from_parts(raw.kernel, raw.gamma, raw.inputs, raw.m_matrix, raw.diagnostics)
    }
}

impl From<SosModel> for RawModel {
    fn from(model: SosModel) -> Self {
        Self {
            n: model.n(),
            m: model.m(),
            kernel: model.kernel,
            gamma: model.gamma,
            inputs: model.inputs,
            m_matrix: model.m_matrix,
            diagnostics: model.diagnostics,
        }
    }
}

/// `(min eig(M + Mᵀ), ‖M‖₂)`.
pub fn nonnegativity_certificate(m_matrix: &DMatrix<f64>) -> Result<(f64, f64)> {
    let sym = SymmetricMatrix::new(m_matrix + m_matrix.transpose())?;
    Ok((linalg::min_eigenvalue(&sym)?, linalg::operator_norm(m_matrix)))
}

fn check_nonnegative(m_matrix: &DMatrix<f64>) -> Result<f64> {
    let (min_eig, norm) = nonnegativity_certificate(m_matrix)?;
    if !(min_eig >= -NONNEGATIVITY_TOL * (1.0 + norm)) {
        return Err(Error::InvariantViolation(format!(
            "min eig(M + Mᵀ) = {min_eig:e} is below −{NONNEGATIVITY_TOL:e}·(1 + ‖M‖₂)"
        )));
    }
    Ok(min_eig)
}

/// Fits `M` by solving the semidefinite program. A non-optimal solver
/// status is recorded in the diagnostics; numerical breakdown is an error.
pub fn fit_nonnegative(
    spec: &KernelSpec,
    dataset: &Dataset,
    gamma: f64,
    options: &SolverOptions,
) -> Result<SosModel> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let gram = kernels::gram(spec, dataset.inputs())?;
    let problem = sdp::build_problem(&gram, dataset, gamma)?;
    let solution = sdp::solve(&problem, options)?;
    if solution.status == SolveStatus::InfeasibleNumerics {
        return Err(Error::SolverBreakdown(format!(
            "solver lost finiteness after {} iterations",
            solution.iterations
        )));
    }
    let m_matrix = solution.point.m_matrix;
    let min_sym_eigenvalue = check_nonnegative(&m_matrix)?;
    let misfit = problem.misfit(&m_matrix);
    let norm_term = sdp::kernel_norm(&gram, &m_matrix)?;
    Ok(SosModel {
        kernel: *spec,
        gamma,
        inputs: dataset.inputs().to_vec(),
        diagnostics: Diagnostics {
            misfit,
            norm_term,
            objective: misfit + gamma * norm_term,
            solver_status: solution.status,
            iterations: solution.iterations,
            kkt: solution.kkt,
            min_sym_eigenvalue,
        },
        m_matrix,
    })
}

impl SosModel {
    /// Wraps an explicit `M`, verifying nonnegativity. Diagnostics are
    /// taken as given.
    pub fn from_parts(
        kernel: KernelSpec,
        gamma: f64,
        inputs: Vec<CoefficientVector>,
        m_matrix: DMatrix<f64>,
        diagnostics: Diagnostics,
    ) -> Result<Self> {
        kernel.validate()?;
        let n = inputs.len();
        let m = inputs.first().map_or(0, |u| u.len());
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument("model needs at least one nonempty input".into()));
        }
        if inputs.iter().any(|u| u.len() != m) {
            return Err(Error::InvalidArgument("training inputs differ in dimension".into()));
        }
        if m_matrix.nrows() != n * m || m_matrix.ncols() != n * m {
            return Err(Error::DimensionMismatch {
                context: "M vs nm",
                expected: n * m,
                found: m_matrix.nrows(),
            });
        }
        if m_matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("M"));
        }
        check_nonnegative(&m_matrix)?;
        Ok(Self {
            kernel,
            gamma,
            inputs,
            m_matrix,
            diagnostics,
        })
    }

    /// A model with explicit `M` whose diagnostics are recomputed against
    /// `dataset`.
    pub fn with_matrix(kernel: KernelSpec, gamma: f64, dataset: &Dataset, m_matrix: DMatrix<f64>) -> Result<Self> {
        let gram = kernels::gram(&kernel, dataset.inputs())?;
        let placeholder = Diagnostics {
            misfit: f64::NAN,
            norm_term: f64::NAN,
            objective: f64::NAN,
            solver_status: SolveStatus::Optimal,
            iterations: 0,
            kkt: KktResiduals {
                primal: 0.0,
                dual: 0.0,
                gap: 0.0,
            },
            min_sym_eigenvalue: f64::NAN,
        };
        let mut model = Self::from_parts(kernel, gamma, dataset.inputs().to_vec(), m_matrix, placeholder)?;
        let misfit = model.misfit(dataset)?;
        let norm_term = model.norm_term_with(&gram)?;
        model.diagnostics.misfit = misfit;
        model.diagnostics.norm_term = norm_term;
        model.diagnostics.objective = misfit + gamma * norm_term;
        model.diagnostics.min_sym_eigenvalue = nonnegativity_certificate(&model.m_matrix)?.0;
        Ok(model)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn inputs(&self) -> &[CoefficientVector] {
        &self.inputs
    }

    pub fn m_matrix(&self) -> &DMatrix<f64> {
        &self.m_matrix
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn n(&self) -> usize {
        self.inputs.len()
    }

    pub fn m(&self) -> usize {
        self.inputs[0].len()
    }

    /// `κ(u) u`, the feature-space image the quadratic form acts on.
    fn lifted(&self, u: &CoefficientVector) -> Result<CoefficientVector> {
        Ok(kernels::kappa(&self.kernel, &self.inputs, u)?.apply(u))
    }

    pub fn predict(&self, u: &CoefficientVector) -> Result<CoefficientVector> {
        let stack = kernels::kappa(&self.kernel, &self.inputs, u)?;
        let ku = stack.apply(u);
        Ok(stack.as_matrix().tr_mul(&(&self.m_matrix * ku)))
    }

    /// `⟨G(u), u⟩ = (κ(u)u)ᵀ M (κ(u)u)`.
    pub fn quadratic_form(&self, u: &CoefficientVector) -> Result<f64> {
        let ku = self.lifted(u)?;
        Ok(ku.dot(&(&self.m_matrix * &ku)))
    }

    /// Lower bound on `⟨G(u), u⟩` implied by `min eig(M + Mᵀ)`.
    pub fn certified_lower_bound(&self, u: &CoefficientVector) -> Result<f64> {
        let ku = self.lifted(u)?;
        Ok(0.5 * self.diagnostics.min_sym_eigenvalue.min(0.0) * ku.norm_squared())
    }

    /// `Σᵢ ‖G(uᵢ) − yᵢ‖²`.
    pub fn misfit(&self, dataset: &Dataset) -> Result<f64> {
        let mut total = 0.0;
        for (u, y) in dataset.inputs().iter().zip(dataset.outputs()) {
            total += (self.predict(u)? - y).norm_squared();
        }
        Ok(total)
    }

    /// `‖K^{1/2} M K^{1/2}‖₂` for the model's own training Gram matrix.
    pub fn norm_term(&self) -> Result<f64> {
        let gram = kernels::gram(&self.kernel, &self.inputs)?;
        self.norm_term_with(&gram)
    }

    fn norm_term_with(&self, gram: &GramMatrix) -> Result<f64> {
        sdp::kernel_norm(gram, &self.m_matrix)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let raw: RawModel = serde_json::from_str(&text)?;
        Self::try_from(raw)
    }
}

/// `min_τ ∫₀^τ u y dt` over the grid points, trapezoidal, including `τ = 0`.
pub fn passivity_profile(u: &SampledSignal, y: &SampledSignal) -> Result<f64> {
    if !u.same_grid(y) {
        return Err(Error::GridMismatch);
    }
    Ok(cumulative_inner_product(u.times(), u.values(), y.values())
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::test_util::random_matrix;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> CoefficientVector {
        DVector::from_column_slice(xs)
    }

    fn random_dataset(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Dataset {
        let x = random_matrix(rng, n, m);
        let y = random_matrix(rng, n, m);
        Dataset::new(
            x.row_iter().map(|r| r.transpose()).collect(),
            y.row_iter().map(|r| r.transpose()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_outputs_give_zero_model() {
        let d = Dataset::new(vec![v(&[1.0, 0.2]), v(&[-0.3, 0.9])], vec![v(&[0.0, 0.0]); 2]).unwrap();
        let model = fit_nonnegative(&KernelSpec::gaussian(1.0).unwrap(), &d, 1e-2, &SolverOptions::default()).unwrap();
        assert!(model.m_matrix().norm() <= 1e-5);
        assert!(model.diagnostics().misfit <= 1e-8);
    }

    #[test]
    fn scalar_instance() {
        let d = Dataset::new(vec![v(&[1.0])], vec![v(&[1.0])]).unwrap();
        let model = fit_nonnegative(&KernelSpec::Bilinear, &d, 0.1, &SolverOptions::default()).unwrap();
        assert!((model.predict(&v(&[1.0])).unwrap()[0] - 0.95).abs() < 1e-4);
        assert!(fit_nonnegative(&KernelSpec::Bilinear, &d, 0.0, &SolverOptions::default()).is_err());
    }

    #[test]
    fn predict_matches_triple_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = random_dataset(&mut rng, 3, 2);
        let spec = KernelSpec::laplacian(1.3).unwrap();
        let a = random_matrix(&mut rng, 6, 6);
        let b = random_matrix(&mut rng, 6, 6);
        let m_matrix = &a * a.transpose() + &b - b.transpose();
        let model = SosModel::with_matrix(spec, 0.1, &d, m_matrix.clone()).unwrap();
        for _ in 0..20 {
            let u = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            // Assemble κ(u) block by block and associate the product the other way.
            let mut kap = DMatrix::zeros(6, 2);
            for (i, ui) in d.inputs().iter().enumerate() {
                let s = kernels::eval_scalar(&spec, ui, &u).unwrap();
                kap.view_mut((2 * i, 0), (2, 2)).fill_with_identity();
                kap.view_mut((2 * i, 0), (2, 2)).scale_mut(s);
            }
            let oracle = (kap.transpose() * &m_matrix) * (&kap * &u);
            let p = model.predict(&u).unwrap();
            assert!((p - &oracle).amax() <= 1e-12 * (1.0 + oracle.amax()));
            let q = model.quadratic_form(&u).unwrap();
            let ku = &kap * &u;
            assert!((q - ku.dot(&(&m_matrix * &ku))).abs() <= 1e-12 * (1.0 + q.abs()));
        }
        assert_eq!(model.predict(&v(&[0.0, 0.0])).unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn zero_and_identity_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = random_dataset(&mut rng, 2, 3);
        let spec = KernelSpec::gaussian(2.0).unwrap();
        let zero = SosModel::with_matrix(spec, 0.1, &d, DMatrix::zeros(6, 6)).unwrap();
        let u = v(&[0.3, -1.0, 2.0]);
        assert_eq!(zero.predict(&u).unwrap(), DVector::zeros(3));
        assert_eq!(zero.norm_term().unwrap(), 0.0);
        let total: f64 = d.outputs().iter().map(|y| y.norm_squared()).sum();
        assert!((zero.misfit(&d).unwrap() - total).abs() < 1e-14);

        let ident = SosModel::with_matrix(spec, 0.1, &d, DMatrix::identity(6, 6)).unwrap();
        let ku = kernels::kappa(&spec, d.inputs(), &u).unwrap().apply(&u);
        assert!((ident.quadratic_form(&u).unwrap() - ku.norm_squared()).abs() < 1e-14);

        // K = I for a single input under the Gaussian kernel.
        let single = Dataset::new(vec![v(&[1.0, 2.0])], vec![v(&[0.0, 0.0])]).unwrap();
        let model = SosModel::with_matrix(spec, 0.1, &single, DMatrix::identity(2, 2)).unwrap();
        assert!((model.norm_term().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let d = Dataset::new(vec![v(&[1.0])], vec![v(&[1.0])]).unwrap();
        let err = SosModel::with_matrix(KernelSpec::Bilinear, 0.1, &d, DMatrix::from_element(1, 1, -1e-3));
        assert!(matches!(err, Err(Error::InvariantViolation(_))));
        // Skew parts do not affect nonnegativity.
        let d2 = Dataset::new(vec![v(&[1.0]), v(&[2.0])], vec![v(&[1.0]); 2]).unwrap();
        let skew = DMatrix::from_row_slice(2, 2, &[0.0, 5.0, -5.0, 0.0]);
        assert!(SosModel::with_matrix(KernelSpec::Bilinear, 0.1, &d2, skew).is_ok());
    }

    #[test]
    fn fitted_model_consistency_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = random_dataset(&mut rng, 3, 2);
        let spec = KernelSpec::gaussian(1.5).unwrap();
        let model = fit_nonnegative(&spec, &d, 1e-2, &SolverOptions::default()).unwrap();
        assert!((model.misfit(&d).unwrap() - model.diagnostics().misfit).abs() <= 1e-9);
        for _ in 0..200 {
            let u = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let q = model.quadratic_form(&u).unwrap();
            assert!(q >= model.certified_lower_bound(&u).unwrap() - 1e-14);
            assert!(q >= -1e-8);
        }

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        for key in ["kernel", "gamma", "inputs", "M", "n", "m", "diagnostics"] {
            assert!(value.get(key).is_some(), "missing {key}");
        }
        assert_eq!(value["M"].as_array().unwrap().len(), 36);
        let back = SosModel::load(&path).unwrap();
        assert_eq!(back.m_matrix(), model.m_matrix());

        let mut tampered = value.clone();
        tampered["M"][0] = serde_json::json!(-1e3);
        assert!(serde_json::from_value::<SosModel>(tampered).is_err());
    }

    #[test]
    fn passivity_profile_examples() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.05).collect();
        let u = SampledSignal::from_fn(times.clone(), |t| (2.0 * t).sin()).unwrap();
        assert_eq!(passivity_profile(&u, &u).unwrap(), 0.0);
        let neg = SampledSignal::from_fn(times.clone(), |t| -(2.0 * t).sin()).unwrap();
        assert!(passivity_profile(&u, &neg).unwrap() < 0.0);
        let other = SampledSignal::from_fn(times[..50].to_vec(), |t| t).unwrap();
        assert!(matches!(passivity_profile(&u, &other), Err(Error::GridMismatch)));
    }
}
