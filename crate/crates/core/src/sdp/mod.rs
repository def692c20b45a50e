//! The semidefinite program behind the sum-of-squares operator fit:
//!
//! ```text
//! minimize    Σᵢ pᵢ + γ p₀
//! subject to  M + Mᵀ ⪰ 0
//!             [ I_m              KᵢᵀMKᵢuᵢ − yᵢ ]
//!             [ (KᵢᵀMKᵢuᵢ − yᵢ)ᵀ  pᵢ           ] ⪰ 0      i = 1..n
//!             [ p₀K    KMK  ]
//!             [ KMᵀK   p₀K  ] ⪰ 0
//! ```
//!
//! The residual blocks bound `‖KᵢᵀMKᵢuᵢ − yᵢ‖² ≤ pᵢ` and the last block
//! bounds `‖K^{1/2}MK^{1/2}‖ ≤ p₀`, both by Schur complements.

mod admm;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::GramMatrix;
use crate::linalg::{self, EigenDecomposition, SymmetricMatrix};
use crate::serde_util;
use crate::CoefficientVector;

pub use admm::AdmmSolver;

/// One affine PSD constraint of the program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintBlock {
    /// `M + Mᵀ ⪰ 0`, size `nm`.
    SymmetricPart,
    /// Schur block bounding the squared residual of training pair `index`,
    /// size `m + 1`.
    Residual { index: usize },
    /// K-weighted block bounding the regularizer, size `2nm`.
    NormBound,
}

impl ConstraintBlock {
    pub fn label(&self) -> String {
        match self {
            ConstraintBlock::SymmetricPart => "sym(M)".to_string(),
            ConstraintBlock::Residual { index } => format!("residual[{index}]"),
            ConstraintBlock::NormBound => "norm".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    gram: GramMatrix,
    gram_eig: EigenDecomposition,
    inputs: Vec<CoefficientVector>,
    targets: Vec<CoefficientVector>,
    gamma: f64,
    blocks: Vec<ConstraintBlock>,
}

/// Assembles the program for a Gram operator and matching dataset.
///
/// `gamma = 0` is accepted here (the pure data-fit program); model fitting
/// requires a positive weight.
pub fn build_problem(gram: &GramMatrix, dataset: &Dataset, gamma: f64) -> Result<SdpProblem> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "regularization weight must be nonnegative, got {gamma}"
        )));
    }
    if dataset.n() != gram.n() {
        return Err(Error::DimensionMismatch {
            context: "dataset size vs Gram operator",
            expected: gram.n(),
            found: dataset.n(),
        });
    }
    if dataset.m() != gram.m() {
        return Err(Error::DimensionMismatch {
            context: "coefficient dimension vs Gram operator",
            expected: gram.m(),
            found: dataset.m(),
        });
    }
    let gram_eig = linalg::sym_eig(gram.matrix())?;
    let tol = linalg::psd_tolerance(&gram_eig);
    if gram_eig.min_eigenvalue() < -tol {
        return Err(Error::NotPsd {
            min_eigenvalue: gram_eig.min_eigenvalue(),
            tolerance: tol,
        });
    }

    let mut blocks = vec![ConstraintBlock::SymmetricPart];
    blocks.extend((0..gram.n()).map(|index| ConstraintBlock::Residual { index }));
    blocks.push(ConstraintBlock::NormBound);

    Ok(SdpProblem {
        gram: gram.clone(),
        gram_eig,
        inputs: dataset.inputs().to_vec(),
        targets: dataset.outputs().to_vec(),
        gamma,
        blocks,
    })
}

impl SdpProblem {
    pub fn n(&self) -> usize {
        self.gram.n()
    }

    pub fn m(&self) -> usize {
        self.gram.m()
    }

    /// Side length `nm` of `M`.
    pub fn dim(&self) -> usize {
        self.n() * self.m()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    pub fn gram_eigen(&self) -> &EigenDecomposition {
        &self.gram_eig
    }

    pub fn inputs(&self) -> &[CoefficientVector] {
        &self.inputs
    }

    pub fn targets(&self) -> &[CoefficientVector] {
        &self.targets
    }

    pub fn blocks(&self) -> &[ConstraintBlock] {
        &self.blocks
    }

    pub fn block_size(&self, block: ConstraintBlock) -> usize {
        match block {
            ConstraintBlock::SymmetricPart => self.dim(),
            ConstraintBlock::Residual { .. } => self.m() + 1,
            ConstraintBlock::NormBound => 2 * self.dim(),
        }
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| self.block_size(*b)).collect()
    }

    /// `KᵢᵀMKᵢuᵢ − yᵢ`.
    pub fn residual(&self, i: usize, m_matrix: &DMatrix<f64>) -> DVector<f64> {
        let ki = self.gram.block_column(i);
        let g = &ki * &self.inputs[i];
        ki.transpose() * (m_matrix * g) - &self.targets[i]
    }

    /// `Σᵢ ‖KᵢᵀMKᵢuᵢ − yᵢ‖²`.
    pub fn misfit(&self, m_matrix: &DMatrix<f64>) -> f64 {
        (0..self.n()).map(|i| self.residual(i, m_matrix).norm_squared()).sum()
    }

    pub fn objective(&self, point: &SdpPoint) -> f64 {
        point.p.iter().sum::<f64>() + self.gamma * point.p0
    }

    /// `M = 0`, `pᵢ = ‖yᵢ‖²`, `p₀ = 0`, which satisfies every block.
    pub fn trivial_feasible_point(&self) -> SdpPoint {
        SdpPoint {
            m_matrix: DMatrix::zeros(self.dim(), self.dim()),
            p0: 0.0,
            p: self.targets.iter().map(|y| y.norm_squared()).collect(),
        }
    }

    /// The concrete matrix of `block` at `point`.
    pub fn block_matrix(&self, block: ConstraintBlock, point: &SdpPoint) -> DMatrix<f64> {
        let mm = &point.m_matrix;
        match block {
            ConstraintBlock::SymmetricPart => mm + mm.transpose(),
            ConstraintBlock::Residual { index } => {
                let m = self.m();
                let r = self.residual(index, mm);
                let mut b = DMatrix::zeros(m + 1, m + 1);
                b.view_mut((0, 0), (m, m)).fill_with_identity();
                b.view_mut((0, m), (m, 1)).copy_from(&r);
                b.view_mut((m, 0), (1, m)).copy_from(&r.transpose());
                b[(m, m)] = point.p[index];
                b
            }
            ConstraintBlock::NormBound => {
                let d = self.dim();
                let k = self.gram.as_matrix();
                let kmk = k * mm * k;
                let mut b = DMatrix::zeros(2 * d, 2 * d);
                b.view_mut((0, 0), (d, d)).copy_from(&(k * point.p0));
                b.view_mut((d, d), (d, d)).copy_from(&(k * point.p0));
                b.view_mut((0, d), (d, d)).copy_from(&kmk);
                b.view_mut((d, 0), (d, d)).copy_from(&kmk.transpose());
                b
            }
        }
    }

    pub fn dump(&self) -> ProblemDump {
        ProblemDump {
            n: self.n(),
            m: self.m(),
            gamma: self.gamma,
            gram: self.gram.as_matrix().clone(),
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
        }
    }
}

/// Standalone description of a program instance for cross-checking with an
/// external solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemDump {
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    #[serde(rename = "K", with = "serde_util::square_row_major")]
    pub gram: DMatrix<f64>,
    #[serde(with = "serde_util::vectors")]
    pub inputs: Vec<CoefficientVector>,
    #[serde(with = "serde_util::vectors")]
    pub targets: Vec<CoefficientVector>,
}

/// A candidate `(M, p₀, p₁..pₙ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpPoint {
    pub m_matrix: DMatrix<f64>,
    pub p0: f64,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    InfeasibleNumerics,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::InfeasibleNumerics => "infeasible_numerics",
        }
    }
}

/// Convergence measures of the splitting iteration, relative to the
/// scale of the quantities they compare.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub point: SdpPoint,
    pub objective: f64,
    pub status: SolveStatus,
    pub kkt: KktResiduals,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Primal/dual residual tolerance (relative, see [`KktResiduals`]).
    pub tol_feas: f64,
    /// Relative duality-gap tolerance.
    pub tol_gap: f64,
    pub max_iter: usize,
    /// Restrict `M` to symmetric matrices.
    pub symmetric_m: bool,
    /// Project `sym(M)` onto the PSD cone after the last iterate so the
    /// returned `M` is exactly nonnegative.
    pub polish: bool,
    /// Initial ADMM penalty.
    pub rho: f64,
    /// Over-relaxation factor in `(0, 2)`.
    pub alpha: f64,
    /// Proximal regularization of the `x`-update.
    pub sigma: f64,
    /// Eigenvalues of `K` below `rank_tol · ‖K‖₂` are treated as zero.
    pub rank_tol: f64,
    /// Iterations between convergence checks and penalty updates.
    pub check_every: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_feas: 1e-7,
            tol_gap: 1e-6,
            max_iter: 200_000,
            symmetric_m: false,
            polish: true,
            rho: 0.1,
            alpha: 1.6,
            sigma: 1e-6,
            rank_tol: 1e-13,
            check_every: 25,
        }
    }
}

/// Solver backend interface. [`AdmmSolver`] is the built-in implementation.
pub trait SdpSolver {
    fn solve(&self, problem: &SdpProblem, options: &SolverOptions) -> Result<SdpSolution>;
}

/// Solves with the built-in splitting solver.
pub fn solve(problem: &SdpProblem, options: &SolverOptions) -> Result<SdpSolution> {
    AdmmSolver.solve(problem, options)
}

/// `‖K^{1/2} M K^{1/2}‖₂`.
pub fn kernel_norm(gram: &GramMatrix, m_matrix: &DMatrix<f64>) -> Result<f64> {
    let root = linalg::sqrt_psd(gram.matrix())?;
    let r = root.as_matrix();
    Ok(linalg::operator_norm(&(r * m_matrix * r)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockReport {
    pub label: String,
    pub size: usize,
    pub min_eigenvalue: f64,
    /// `1 + ‖block‖₂`, the scale the tolerance is applied against.
    pub scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub blocks: Vec<BlockReport>,
    pub misfit_terms: Vec<f64>,
    pub misfit: f64,
    pub norm_term: f64,
    /// `pᵢ − ‖KᵢᵀMKᵢuᵢ − yᵢ‖²`
    pub slack_p: Vec<f64>,
    /// `p₀ − ‖K^{1/2}MK^{1/2}‖`
    pub slack_p0: f64,
    pub feasible: bool,
}

impl FeasibilityReport {
    pub fn min_block_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn block(&self, label: &str) -> Option<&BlockReport> {
        self.blocks.iter().find(|b| b.label == label)
    }
}

/// Recomputes every constraint block, the exact misfit and the exact
/// regularizer norm at `solution`. A block passes when its minimum
/// eigenvalue is at least `-tol · (1 + ‖block‖₂)`.
pub fn check_solution(problem: &SdpProblem, point: &SdpPoint, tol: f64) -> FeasibilityReport {
    let mut feasible = true;
    let blocks = problem
        .blocks()
        .iter()
        .map(|&block| {
            let mat = problem.block_matrix(block, point);
            let (min_eigenvalue, scale) = match SymmetricMatrix::new(mat).and_then(|s| linalg::sym_eig(&s)) {
                Ok(eig) => (eig.min_eigenvalue(), 1.0 + eig.spectral_norm()),
                Err(_) => (f64::NAN, f64::NAN),
            };
            if !(min_eigenvalue >= -tol * scale) {
                feasible = false;
            }
            BlockReport {
                label: block.label(),
                size: problem.block_size(block),
                min_eigenvalue,
                scale,
            }
        })
        .collect();

    let misfit_terms: Vec<f64> = (0..problem.n())
        .map(|i| problem.residual(i, &point.m_matrix).norm_squared())
        .collect();
    let misfit = misfit_terms.iter().sum();
    let norm_term = linalg::sqrt_from_eig(problem.gram_eigen())
        .map(|root| {
            let r = root.as_matrix();
            linalg::operator_norm(&(r * &point.m_matrix * r))
        })
        .unwrap_or(f64::NAN);
    let slack_p: Vec<f64> = point
        .p
        .iter()
        .zip(&misfit_terms)
        .map(|(p, l)| p - l)
        .collect();
    let slack_p0 = point.p0 - norm_term;
    for (s, l) in slack_p.iter().zip(&misfit_terms) {
        if !(*s >= -tol * (1.0 + l)) {
            feasible = false;
        }
    }
    if !(slack_p0 >= -tol * (1.0 + norm_term)) {
        feasible = false;
    }

    FeasibilityReport {
        blocks,
        misfit_terms,
        misfit,
        norm_term,
        slack_p,
        slack_p0,
        feasible,
    }
}
