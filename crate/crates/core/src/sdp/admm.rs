//! Operator-splitting solver.
//!
//! The program is solved in the eigenbasis of `K = V Λ Vᵀ`. With
//! `F = Λ_r^{1/2} V_rᵀ` (rank `r`) the variable `W = F M Fᵀ` satisfies
//!
//! * `KᵢᵀMKᵢuᵢ = Φᵢᵀ W Φᵢ uᵢ` where `Φᵢ` is the `i`-th block column of `F`,
//! * `‖K^{1/2}MK^{1/2}‖ = ‖W‖`, so the norm block is the spectral-norm
//!   cone `‖W‖₂ ≤ p₀`,
//! * `M + Mᵀ ⪰ 0` can be met iff `W + Wᵀ ⪰ 0`, with `M = F⁺ W F⁺ᵀ`.
//!
//! The residual blocks only ever bind at `pᵢ = ‖Φᵢᵀ W Φᵢ uᵢ − yᵢ‖²`, so they
//! enter the iteration as the exact quadratic `Σᵢ ‖·‖²`, handled inside
//! the linear solve. The two remaining cones are handled by projection:
//!
//! ```text
//! minimize ½ xᵀPx + qᵀx   s.t.  A x ∈ S₊(r) × {‖W‖₂ ≤ t},   x = (W, p₀)
//! ```
//!
//! with over-relaxed ADMM and residual-balanced penalty updates. The
//! `x`-update matrix is `P + σI + ρAᵀA = D + 2BBᵀ` where `D` acts as a
//! scalar on the symmetric and skew parts of `W` and `B` has rank at most
//! `nm`, so each solve is a Woodbury correction with an `nm × nm`
//! Cholesky factor.

use std::cell::Cell;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{KktResiduals, SdpPoint, SdpProblem, SdpSolution, SdpSolver, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::linalg::{self, skew_part, symmetrize, SymmetricMatrix};

/// First-order splitting solver with alternating PSD-cone projections.
#[derive(Debug, Clone, Copy, Default)]
pub struct AdmmSolver;

impl SdpSolver for AdmmSolver {
    fn solve(&self, problem: &SdpProblem, options: &SolverOptions) -> Result<SdpSolution> {
        validate(options)?;
        let reduced = Reduced::new(problem, options);
        if reduced.r == 0 {
            let point = problem.trivial_feasible_point();
            return Ok(SdpSolution {
                objective: problem.objective(&point),
                point,
                status: SolveStatus::Optimal,
                kkt: KktResiduals {
                    primal: 0.0,
                    dual: 0.0,
                    gap: 0.0,
                },
                iterations: 0,
            });
        }
        let outcome = iterate(&reduced, problem.gamma(), options)?;
        Ok(finish(problem, &reduced, outcome, options))
    }
}

fn validate(options: &SolverOptions) -> Result<()> {
    let ok = options.tol_feas > 0.0
        && options.tol_gap > 0.0
        && options.rho > 0.0
        && options.sigma > 0.0
        && options.alpha > 0.0
        && options.alpha < 2.0
        && options.check_every > 0
        && options.rank_tol >= 0.0;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("invalid solver options: {options:?}")))
    }
}

/// Problem data in the reduced coordinates.
/// Weight of `W` in the norm-cone rows.
const NORM_WEIGHT: f64 = std::f64::consts::SQRT_2;
/// Weight of `p₀` in the norm-cone rows is `√(2r)` at first and
/// `BOUND_WEIGHT_LATE·√(2r)` from iteration `BOUND_WEIGHT_SWITCH` on.
const BOUND_WEIGHT_SWITCH: usize = 5000;
const BOUND_WEIGHT_LATE: f64 = 6.0;
/// `ρ` is rescaled when `√(primal/dual)` leaves this band.
const BALANCE_BAND: (f64, f64) = (0.2, 5.0);

struct Reduced {
    r: usize,
    m: usize,
    symmetric: bool,
    /// `F⁺ = V_r Λ_r^{-1/2}`, maps `W` back to `M = F⁺ W F⁺ᵀ`.
    lift: DMatrix<f64>,
    /// `Φᵢ`, each `r × m`.
    phis: Vec<DMatrix<f64>>,
    /// `Φᵢ uᵢ`.
    a: Vec<DVector<f64>>,
    y: Vec<DVector<f64>>,
    /// Weights `a`, `b` of `W` and `p₀` in the norm-cone rows.
    norm_weight: f64,
    bound_weight: Cell<f64>,
}

impl Reduced {
    fn new(problem: &SdpProblem, options: &SolverOptions) -> Self {
        let eig = problem.gram_eigen();
        let cutoff = options.rank_tol * eig.spectral_norm();
        let kept: Vec<usize> = (0..eig.dim())
            .filter(|&j| eig.eigenvalues[j] > cutoff && eig.eigenvalues[j] > 0.0)
            .collect();
        let r = kept.len();
        let big = problem.dim();
        let m = problem.m();

        let mut f = DMatrix::zeros(r, big);
        let mut lift = DMatrix::zeros(big, r);
        for (row, &j) in kept.iter().enumerate() {
            let lambda = eig.eigenvalues[j];
            let v = eig.eigenvectors.column(j);
            f.row_mut(row).copy_from(&(v.transpose() * lambda.sqrt()));
            lift.column_mut(row).copy_from(&(v / lambda.sqrt()));
        }
        let phis: Vec<DMatrix<f64>> = (0..problem.n())
            .map(|i| f.columns(i * m, m).into_owned())
            .collect();
        let a = phis
            .iter()
            .zip(problem.inputs())
            .map(|(phi, u)| phi * u)
            .collect();
        Self {
            r,
            m,
            symmetric: options.symmetric_m,
            lift,
            phis,
            a,
            y: problem.targets().to_vec(),
            norm_weight: NORM_WEIGHT,
            bound_weight: Cell::new((2.0 * r as f64).sqrt()),
        }
    }

    fn n(&self) -> usize {
        self.phis.len()
    }

    fn restrict(&self, x: DMatrix<f64>) -> DMatrix<f64> {
        if self.symmetric {
            symmetrize(&x)
        } else {
            x
        }
    }

    /// `(Φᵢᵀ W Φᵢ uᵢ)ᵢ`
    fn forward(&self, w: &DMatrix<f64>) -> Vec<DVector<f64>> {
        self.phis
            .iter()
            .zip(&self.a)
            .map(|(phi, a)| phi.tr_mul(&(w * a)))
            .collect()
    }

    /// Adjoint of [`Self::forward`]: `Σᵢ Φᵢ zᵢ aᵢᵀ`.
    fn adjoint(&self, z: &[DVector<f64>]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.r, self.r);
        for ((phi, a), zi) in self.phis.iter().zip(&self.a).zip(z) {
            let left = phi * zi;
            out.ger(1.0, &left, a, 1.0);
        }
        self.restrict(out)
    }

    fn misfit(&self, w: &DMatrix<f64>) -> f64 {
        self.forward(w)
            .iter()
            .zip(&self.y)
            .map(|(g, y)| (g - y).norm_squared())
            .sum()
    }

    fn flatten(&self, z: &[DVector<f64>]) -> DVector<f64> {
        DVector::from_iterator(self.n() * self.m, z.iter().flat_map(|v| v.iter().copied()))
    }

    fn unflatten(&self, v: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..self.n()).map(|i| v.rows(i * self.m, self.m).into_owned()).collect()
    }

    /// `A(W, p₀) = (W + Wᵀ, (aW, bp₀))`.
    fn constraint_map(&self, w: &DMatrix<f64>, p0: f64) -> (DMatrix<f64>, NormPoint) {
        (
            w + w.transpose(),
            NormPoint {
                w: w * self.norm_weight,
                t: p0 * self.bound_weight.get(),
            },
        )
    }

    /// `Aᵀ(T₁, (T₂, t))`.
    fn constraint_adjoint(&self, t1: &DMatrix<f64>, t2: &NormPoint) -> (DMatrix<f64>, f64) {
        (
            self.restrict(t1 + t1.transpose() + &t2.w * self.norm_weight),
            t2.t * self.bound_weight.get(),
        )
    }

    /// Slope `κ = a/b` of the cone `‖X‖₂ ≤ κ s` holding `(aW, bp₀)`.
    fn cone_slope(&self) -> f64 {
        self.norm_weight / self.bound_weight.get()
    }
}

/// Factorization of `P + σI + ρAᵀA` on the `W` block.
struct Factor {
    rho: f64,
    /// Eigenvalue of `σI + ρAᵀA` on symmetric matrices.
    sym_scale: f64,
    /// ... and on skew-symmetric matrices.
    skew_scale: f64,
    p0_scale: f64,
    capacitance: Cholesky<f64, Dyn>,
}

impl Factor {
    fn new(red: &Reduced, rho: f64, sigma: f64) -> Result<Self> {
        let a2 = red.norm_weight * red.norm_weight;
        let sym_scale = sigma + (4.0 + a2) * rho;
        let skew_scale = sigma + a2 * rho;
        let p0_scale = sigma + red.bound_weight.get().powi(2) * rho;
        let k = red.n() * red.m;
        let mut cap = DMatrix::identity(k, k) * 0.5;
        let partial = Self {
            rho,
            sym_scale,
            skew_scale,
            p0_scale,
            capacitance: Cholesky::new(DMatrix::identity(1, 1)).expect("1x1 identity"),
        };
        let mut unit = DVector::zeros(k);
        for col in 0..k {
            unit.fill(0.0);
            unit[col] = 1.0;
            let b = red.adjoint(&red.unflatten(&unit));
            let column = red.flatten(&red.forward(&partial.apply_diag_inverse(&b)));
            let mut dst = cap.column_mut(col);
            dst += column;
        }
        let capacitance = Cholesky::new(symmetrize(&cap)).ok_or_else(|| {
            Error::SolverBreakdown("Woodbury capacitance matrix lost positive definiteness".into())
        })?;
        Ok(Self {
            capacitance,
            ..partial
        })
    }

    fn apply_diag_inverse(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(x) / self.sym_scale + skew_part(x) / self.skew_scale
    }

    fn solve(&self, red: &Reduced, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let t = self.apply_diag_inverse(rhs);
        let s = red.flatten(&red.forward(&t));
        let w = self.capacitance.solve(&s);
        t - self.apply_diag_inverse(&red.adjoint(&red.unflatten(&w)))
    }
}

struct Outcome {
    w: DMatrix<f64>,
    status: SolveStatus,
    kkt: KktResiduals,
    iterations: usize,
}

/// A point `(W, t)` of the space holding the spectral-norm cone
/// `{‖W‖₂ ≤ t}`.
#[derive(Debug, Clone)]
struct NormPoint {
    w: DMatrix<f64>,
    t: f64,
}

impl NormPoint {
    fn zeros(r: usize) -> Self {
        Self {
            w: DMatrix::zeros(r, r),
            t: 0.0,
        }
    }

    fn norm_squared(&self) -> f64 {
        self.w.norm_squared() + self.t * self.t
    }

    /// `a·self + b·other`
    fn combine(&self, a: f64, other: &NormPoint, b: f64) -> NormPoint {
        NormPoint {
            w: &self.w * a + &other.w * b,
            t: a * self.t + b * other.t,
        }
    }
}

fn project_psd(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(linalg::psd_project(&SymmetricMatrix::new(v.clone())?)?.into_inner())
}

/// Euclidean projection onto `{(X, s) : ‖X‖₂ ≤ κs}`: the singular values
/// of `X` are clipped at the level given by [`norm_cone_level`].
fn project_norm_cone(v: &NormPoint, slope: f64) -> Result<NormPoint> {
    let svd = v.w.clone().try_svd(true, true, f64::EPSILON, 0).ok_or_else(|| {
        Error::SolverBreakdown("singular value decomposition did not converge".into())
    })?;
    let s = &svd.singular_values;
    let tau = norm_cone_level(s.as_slice(), v.t, slope);
    if tau <= 0.0 {
        return Ok(NormPoint::zeros(v.w.nrows()));
    }
    if s.iter().all(|&x| x <= tau) {
        return Ok(v.clone());
    }
    let clipped = s.map(|x| x.min(tau));
    let u = svd.u.as_ref().expect("requested");
    let vt = svd.v_t.as_ref().expect("requested");
    Ok(NormPoint {
        w: u * DMatrix::from_diagonal(&clipped) * vt,
        t: tau / slope,
    })
}

/// Clipping level `τ = κs'` of the projection of `(σ, s)`, `σ ≥ 0`, onto
/// `{maxⱼ σⱼ ≤ κs}`: the root of `Σⱼ (τ − σⱼ)₋ + (τ/κ − s)/κ = 0`,
/// or 0 when the projection is the origin.
fn norm_cone_level(sv: &[f64], s: f64, slope: f64) -> f64 {
    let mut sorted: Vec<f64> = sv.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted.first().map_or(true, |&top| top <= slope * s) {
        return (slope * s).max(0.0);
    }
    let inv2 = 1.0 / (slope * slope);
    let mut sum = 0.0;
    for (k, &sk) in sorted.iter().enumerate() {
        sum += sk;
        let tau = (sum + s / slope) / (k as f64 + 1.0 + inv2);
        let next = sorted.get(k + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if tau >= next {
            return tau.max(0.0);
        }
    }
    0.0
}

/// Full iterate of the splitting method.
#[derive(Debug, Clone)]
struct State {
    w: DMatrix<f64>,
    p0: f64,
    z1: DMatrix<f64>,
    z2: NormPoint,
    y1: DMatrix<f64>,
    y2: NormPoint,
}

impl State {
    fn zeros(r: usize) -> Self {
        Self {
            w: DMatrix::zeros(r, r),
            p0: 0.0,
            z1: DMatrix::zeros(r, r),
            z2: NormPoint::zeros(r),
            y1: DMatrix::zeros(r, r),
            y2: NormPoint::zeros(r),
        }
    }

    fn is_finite(&self) -> bool {
        self.p0.is_finite() && self.w.iter().all(|x| x.is_finite())
    }
}

/// Problem data shared by every step.
struct Stepper<'a> {
    red: &'a Reduced,
    q_w: DMatrix<f64>,
    gamma: f64,
    alpha: f64,
    sigma: f64,
}

impl Stepper<'_> {
    /// One over-relaxed ADMM step.
    fn step(&self, factor: &Factor, s: &State) -> Result<State> {
        let red = self.red;
        let (alpha, sigma, rho) = (self.alpha, self.sigma, factor.rho);
        let (at_w, at_p) = red.constraint_adjoint(&(&s.z1 * rho - &s.y1), &s.z2.combine(rho, &s.y2, -1.0));
        let rhs_w = &s.w * sigma - &self.q_w + at_w;
        let rhs_p = sigma * s.p0 - self.gamma + at_p;
        let w_tilde = factor.solve(red, &rhs_w);
        let p_tilde = rhs_p / factor.p0_scale;
        let (z1_tilde, z2_tilde) = red.constraint_map(&w_tilde, p_tilde);

        let w = &w_tilde * alpha + &s.w * (1.0 - alpha);
        let p0 = alpha * p_tilde + (1.0 - alpha) * s.p0;
        let v1 = symmetrize(&(&z1_tilde * alpha + &s.z1 * (1.0 - alpha) + &s.y1 / rho));
        let v2 = z2_tilde.combine(alpha, &s.z2, 1.0 - alpha).combine(1.0, &s.y2, 1.0 / rho);
        let z1 = project_psd(&v1)?;
        let z2 = project_norm_cone(&v2, red.cone_slope())?;
        let y1 = (&v1 - &z1) * rho;
        let y2 = v2.combine(rho, &z2, -rho);
        Ok(State { w, p0, z1, z2, y1, y2 })
    }

    fn kkt(&self, s: &State) -> (KktResiduals, f64, f64, f64, f64) {
        let red = self.red;
        let gamma = self.gamma;
        let (ax1, ax2) = red.constraint_map(&s.w, s.p0);
        let prim = ((&ax1 - &s.z1).norm_squared() + ax2.combine(1.0, &s.z2, -1.0).norm_squared()).sqrt();
        let prim_scale = (ax1.norm_squared() + ax2.norm_squared())
            .sqrt()
            .max((s.z1.norm_squared() + s.z2.norm_squared()).sqrt());
        let pw = red.adjoint(&red.forward(&s.w)) * 2.0;
        let (aty_w, aty_p) = red.constraint_adjoint(&s.y1, &s.y2);
        let dual = ((&pw + &self.q_w + &aty_w).norm_squared() + (gamma + aty_p).powi(2)).sqrt();
        let q_norm = (self.q_w.norm_squared() + gamma * gamma).sqrt();
        let dual_scale = pw
            .norm()
            .max((aty_w.norm_squared() + aty_p * aty_p).sqrt())
            .max(q_norm);
        let gap = (s.w.dot(&pw) + self.q_w.dot(&s.w) + gamma * s.p0).abs();
        let objective = red.misfit(&s.w) + gamma * s.p0;
        let kkt = KktResiduals {
            primal: prim / (1.0 + prim_scale),
            dual: dual / (1.0 + dual_scale),
            gap: gap / (1.0 + objective.abs()),
        };
        (kkt, prim, prim_scale, dual, dual_scale)
    }
}

/// Changes the weight of `p₀` in the norm-cone rows, carrying the cone
/// iterates over so the fixed point is unchanged.
fn set_bound_weight(red: &Reduced, state: &mut State, factor: &mut Factor, nb: f64, sigma: f64) {
    let b = red.bound_weight.get();
    state.z2.t *= nb / b;
    state.y2.t *= b / nb;
    red.bound_weight.set(nb);
    factor.p0_scale = sigma + nb * nb * factor.rho;
}

fn iterate(red: &Reduced, gamma: f64, options: &SolverOptions) -> Result<Outcome> {
    let r = red.r;
    let neg_twice_y: Vec<DVector<f64>> = red.y.iter().map(|y| y * -2.0).collect();
    let stepper = Stepper {
        red,
        q_w: red.adjoint(&neg_twice_y),
        gamma,
        alpha: options.alpha,
        sigma: options.sigma,
    };
    let mut factor = Factor::new(red, options.rho, options.sigma)?;
    let mut state = State::zeros(r);
    let mut kkt = KktResiduals {
        primal: f64::INFINITY,
        dual: f64::INFINITY,
        gap: f64::INFINITY,
    };

    for iter in 1..=options.max_iter {
        state = stepper.step(&factor, &state)?;
        if !state.is_finite() {
            return Ok(Outcome {
                w: DMatrix::zeros(r, r),
                status: SolveStatus::InfeasibleNumerics,
                kkt,
                iterations: iter,
            });
        }
        if iter == BOUND_WEIGHT_SWITCH {
            let nb = BOUND_WEIGHT_LATE * (2.0 * r as f64).sqrt();
            set_bound_weight(red, &mut state, &mut factor, nb, options.sigma);
        }
        if iter % options.check_every != 0 && iter != options.max_iter {
            continue;
        }
        let (k, prim, prim_scale, dual, dual_scale) = stepper.kkt(&state);
        kkt = k;
        if kkt.primal <= options.tol_feas && kkt.dual <= options.tol_feas && kkt.gap <= options.tol_gap {
            return Ok(Outcome {
                w: state.w,
                status: SolveStatus::Optimal,
                kkt,
                iterations: iter,
            });
        }
        let rel_p = prim / prim_scale.max(1e-300);
        let rel_d = dual / dual_scale.max(1e-300);
        if rel_p > 0.0 && rel_d > 0.0 {
            let ratio = (rel_p / rel_d).sqrt();
            if !(BALANCE_BAND.0..=BALANCE_BAND.1).contains(&ratio) {
                let new_rho = (factor.rho * ratio).clamp(1e-6, 1e6);
                if new_rho != factor.rho {
                    factor = Factor::new(red, new_rho, options.sigma)?;
                }
            }
        }
    }

    Ok(Outcome {
        w: state.w,
        status: SolveStatus::MaxIter,
        kkt,
        iterations: options.max_iter,
    })
}

fn finish(problem: &SdpProblem, red: &Reduced, outcome: Outcome, options: &SolverOptions) -> SdpSolution {
    let mut w = outcome.w;
    if options.polish && outcome.status != SolveStatus::InfeasibleNumerics {
        if let Ok(sym) = project_psd(&(&w + w.transpose())) {
            w = skew_part(&w) + sym * 0.5;
            if red.symmetric {
                w = symmetrize(&w);
            }
        }
    }
    let m_matrix = &red.lift * &w * red.lift.transpose();
    let p: Vec<f64> = (0..problem.n())
        .map(|i| problem.residual(i, &m_matrix).norm_squared())
        .collect();
    let point = SdpPoint {
        m_matrix,
        p0: linalg::operator_norm(&w),
        p,
    };
    let objective = problem.objective(&point);

    let trivial = problem.trivial_feasible_point();
    let trivial_objective = problem.objective(&trivial);
    if !(objective <= trivial_objective) {
        return SdpSolution {
            point: trivial,
            objective: trivial_objective,
            status: outcome.status,
            kkt: outcome.kkt,
            iterations: outcome.iterations,
        };
    }
    SdpSolution {
        point,
        objective,
        status: outcome.status,
        kkt: outcome.kkt,
        iterations: outcome.iterations,
    }
}
