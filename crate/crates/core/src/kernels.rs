//! Scalar kernels lifted to matrix-valued kernels `k(u, v) = κ(u, v)·I`,
//! Gram assembly and the stacked kernel columns used by the operator model.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::CoefficientVector;

/// Bandwidth used for the Gaussian and Laplacian kernels unless configured.
pub const DEFAULT_BANDWIDTH: f64 = 100.0;

/// Scalar kernel choice. Serializes as
/// `{"variant": "gaussian", "bandwidth": 100.0}` or `{"variant": "bilinear"}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `exp(-‖u − v‖² / σ²)`
    Gaussian { bandwidth: f64 },
    /// `exp(-‖u − v‖ / σ)`
    Laplacian { bandwidth: f64 },
    /// `uᵀv`
    Bilinear,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        let spec = KernelSpec::Gaussian { bandwidth };
        spec.validate()?;
        Ok(spec)
    }

    pub fn laplacian(bandwidth: f64) -> Result<Self> {
        let spec = KernelSpec::Laplacian { bandwidth };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { bandwidth } | KernelSpec::Laplacian { bandwidth } => {
                if bandwidth.is_finite() && bandwidth > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!(
                        "kernel bandwidth must be positive, got {bandwidth}"
                    )))
                }
            }
            KernelSpec::Bilinear => Ok(()),
        }
    }

    /// Lowercase variant name, used to label output artifacts.
    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Gaussian { .. } => "gaussian",
            KernelSpec::Laplacian { .. } => "laplacian",
            KernelSpec::Bilinear => "bilinear",
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Gaussian { bandwidth } => write!(f, "gaussian(σ={bandwidth})"),
            KernelSpec::Laplacian { bandwidth } => write!(f, "laplacian(σ={bandwidth})"),
            KernelSpec::Bilinear => f.write_str("bilinear"),
        }
    }
}

fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

/// Scalar kernel value `κ(u, v)`.
pub fn eval_scalar(spec: &KernelSpec, u: &CoefficientVector, v: &CoefficientVector) -> Result<f64> {
    spec.validate()?;
    check_dim("kernel arguments", u.len(), v.len())?;
    Ok(scalar_unchecked(spec, u, v))
}

fn scalar_unchecked(spec: &KernelSpec, u: &CoefficientVector, v: &CoefficientVector) -> f64 {
    match *spec {
        KernelSpec::Gaussian { bandwidth } => {
            let d2 = (u - v).norm_squared();
            (-d2 / (bandwidth * bandwidth)).exp()
        }
        KernelSpec::Laplacian { bandwidth } => (-(u - v).norm() / bandwidth).exp(),
        KernelSpec::Bilinear => u.dot(v),
    }
}

fn check_inputs(inputs: &[CoefficientVector]) -> Result<usize> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::InvalidArgument("at least one input is required".into()))?;
    let m = first.len();
    if m == 0 {
        return Err(Error::InvalidArgument("inputs must have positive dimension".into()));
    }
    for u in inputs {
        check_dim("kernel inputs", m, u.len())?;
    }
    Ok(m)
}

/// Block Gram operator `K = [k(uᵢ, uⱼ)]` of size `nm × nm`.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    n: usize,
    m: usize,
    matrix: SymmetricMatrix,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.matrix
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.matrix.as_matrix()
    }

    /// The `m × m` block `k(uᵢ, uⱼ)`.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.as_matrix()
            .view((i * self.m, j * self.m), (self.m, self.m))
            .into_owned()
    }

    /// `Kᵢ`, the `i`-th block column (`nm × m`).
    pub fn block_column(&self, i: usize) -> DMatrix<f64> {
        self.as_matrix()
            .columns(i * self.m, self.m)
            .into_owned()
    }
}

/// Assembles the Gram operator. Each block is computed independently and the
/// result is symmetrized by averaging.
pub fn gram(spec: &KernelSpec, inputs: &[CoefficientVector]) -> Result<GramMatrix> {
    spec.validate()?;
    let m = check_inputs(inputs)?;
    let n = inputs.len();
    let values: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|idx| scalar_unchecked(spec, &inputs[idx / n], &inputs[idx % n]))
        .collect();
    let scalar = DMatrix::from_row_slice(n, n, &values);
    let mut full = DMatrix::zeros(n * m, n * m);
    for i in 0..n {
        for j in 0..n {
            let kij = scalar[(i, j)];
            for d in 0..m {
                full[(i * m + d, j * m + d)] = kij;
            }
        }
    }
    Ok(GramMatrix {
        n,
        m,
        matrix: SymmetricMatrix::new(full)?,
    })
}

/// `κ(u) = [k(u₁, u); …; k(uₙ, u)]`, an `nm × m` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaStack(pub DMatrix<f64>);

impl KappaStack {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// `κ(u)·x` for `x ∈ ℝᵐ`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.0 * x
    }
}

pub fn kappa(
    spec: &KernelSpec,
    inputs: &[CoefficientVector],
    u: &CoefficientVector,
) -> Result<KappaStack> {
    spec.validate()?;
    let m = check_inputs(inputs)?;
    check_dim("kappa argument", m, u.len())?;
    let n = inputs.len();
    let mut stack = DMatrix::zeros(n * m, m);
    for (i, ui) in inputs.iter().enumerate() {
        let kval = scalar_unchecked(spec, ui, u);
        for d in 0..m {
            stack[(i * m + d, d)] = kval;
        }
    }
    Ok(KappaStack(stack))
}
