//! Orthonormal shifted Legendre basis on `[0, T]` and the sampled signals
//! it projects.
//!
//! Basis function `i` (1-based) is `L̃ᵢ(t) = √((2i−1)/T)·P_{i−1}(2t/T − 1)`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::CoefficientVector;

/// Gauss–Legendre nodes and weights on `[−1, 1]`, computed by Newton
/// iteration on `P_order` from Chebyshev initial guesses.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for k in 0..order.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(order, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(order, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[order - 1 - k] = x;
        weights[k] = w;
        weights[order - 1 - k] = w;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }
    (nodes, weights)
}

/// `P_k(x)` by the Bonnet recurrence.
pub fn legendre_p(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0) * x * cur - jf * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

fn legendre_with_derivative(k: usize, x: f64) -> (f64, f64) {
    let p = legendre_p(k, x);
    let q = if k == 0 { 0.0 } else { legendre_p(k - 1, x) };
    let kf = k as f64;
    (p, kf * (x * p - q) / (x * x - 1.0))
}

/// `L̃ᵢ(t)` on `[0, T]` without range checks.
pub fn shifted_legendre(i: usize, horizon: f64, t: f64) -> f64 {
    ((2 * i - 1) as f64 / horizon).sqrt() * legendre_p(i - 1, 2.0 * t / horizon - 1.0)
}

#[derive(Debug, Clone)]
pub struct LegendreBasis {
    horizon: f64,
    m: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `values[(k, i)] = L̃ᵢ₊₁(nodes[k])`.
    values: DMatrix<f64>,
}

pub fn basis(horizon: f64, m: usize) -> Result<LegendreBasis> {
    LegendreBasis::new(horizon, m)
}

impl LegendreBasis {
    pub fn new(horizon: f64, m: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if m == 0 {
            return Err(Error::InvalidArgument("basis size must be at least 1".into()));
        }
        let (x, w) = gauss_legendre(2 * m + 16);
        let nodes: Vec<f64> = x.iter().map(|x| 0.5 * horizon * (x + 1.0)).collect();
        let weights: Vec<f64> = w.iter().map(|w| 0.5 * horizon * w).collect();
        let values = DMatrix::from_fn(nodes.len(), m, |k, i| shifted_legendre(i + 1, horizon, nodes[k]));
        Ok(Self {
            horizon,
            m,
            nodes,
            weights,
            values,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                what: "t",
                value: t,
                lo: 0.0,
                hi: self.horizon,
            })
        }
    }

    pub fn evaluate(&self, i: usize, t: f64) -> Result<f64> {
        if i == 0 || i > self.m {
            return Err(Error::OutOfRange {
                what: "basis index",
                value: i as f64,
                lo: 1.0,
                hi: self.m as f64,
            });
        }
        self.check_t(t)?;
        Ok(shifted_legendre(i, self.horizon, t))
    }

    /// `(L̃₁(t), …, L̃ₘ(t))`, one recurrence pass.
    pub fn evaluate_all(&self, t: f64) -> Result<DVector<f64>> {
        self.check_t(t)?;
        Ok(self.evaluate_all_unchecked(t))
    }

    fn evaluate_all_unchecked(&self, t: f64) -> DVector<f64> {
        let x = 2.0 * t / self.horizon - 1.0;
        let mut out = DVector::zeros(self.m);
        let (mut prev, mut cur) = (0.0, 1.0);
        for k in 0..self.m {
            out[k] = ((2 * k + 1) as f64 / self.horizon).sqrt() * cur;
            let kf = k as f64;
            let next = ((2.0 * kf + 1.0) * x * cur - kf * prev) / (kf + 1.0);
            prev = cur;
            cur = next;
        }
        out
    }

    /// Quadrature Gram matrix of the basis, `∫ L̃ᵢ L̃ⱼ`.
    pub fn quadrature_gram(&self) -> DMatrix<f64> {
        let weighted = DMatrix::from_fn(self.nodes.len(), self.m, |k, i| self.weights[k] * self.values[(k, i)]);
        self.values.transpose() * weighted
    }

    fn project_node_values(&self, f: &[f64]) -> CoefficientVector {
        let weighted = DVector::from_iterator(f.len(), f.iter().zip(&self.weights).map(|(f, w)| f * w));
        self.values.tr_mul(&weighted)
    }

    /// `cᵢ = ∫₀ᵀ f L̃ᵢ`.
    pub fn project_fn(&self, f: impl Fn(f64) -> f64) -> CoefficientVector {
        let vals: Vec<f64> = self.nodes.iter().map(|&t| f(t)).collect();
        self.project_node_values(&vals)
    }

    /// Projects a sampled signal after linear interpolation onto the nodes.
    pub fn project_signal(&self, signal: &SampledSignal) -> Result<CoefficientVector> {
        self.check_coverage(signal)?;
        let vals: Vec<f64> = self.nodes.iter().map(|&t| signal.interpolate(t)).collect();
        Ok(self.project_node_values(&vals))
    }

    fn check_coverage(&self, signal: &SampledSignal) -> Result<()> {
        let end = signal.end();
        if end < self.horizon * (1.0 - 1e-12) {
            return Err(Error::InsufficientCoverage {
                start: signal.times[0],
                end,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    pub fn reconstruct(&self, c: &CoefficientVector, t: f64) -> Result<f64> {
        self.check_dim(c)?;
        self.check_t(t)?;
        Ok(self.evaluate_all_unchecked(t).dot(c))
    }

    fn check_dim(&self, c: &CoefficientVector) -> Result<()> {
        if c.len() != self.m {
            return Err(Error::DimensionMismatch {
                context: "coefficient vector",
                expected: self.m,
                found: c.len(),
            });
        }
        Ok(())
    }

    /// Quadrature `‖f‖₂` on `[0, T]`.
    pub fn l2_norm(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, w)| w * f(t).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `‖f − Σ cᵢL̃ᵢ‖ / ‖f‖` under the quadrature rule.
    pub fn relative_l2_error(&self, f: impl Fn(f64) -> f64, c: &CoefficientVector) -> Result<f64> {
        self.check_dim(c)?;
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, (&t, w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let ft = f(t);
            let rt = self.values.row(k).transpose().dot(c);
            num += w * (ft - rt).powi(2);
            den += w * ft * ft;
        }
        if den == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok((num / den).sqrt())
    }

    pub fn relative_l2_error_signal(&self, signal: &SampledSignal, c: &CoefficientVector) -> Result<f64> {
        self.check_coverage(signal)?;
        self.relative_l2_error(|t| signal.interpolate(t), c)
    }
}

/// A real signal on a strictly increasing time grid starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSignal", into = "RawSignal")]
pub struct SampledSignal {
    times: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawSignal {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawSignal> for SampledSignal {
    type Error = Error;

    fn try_from(raw: RawSignal) -> Result<Self> {
        Self::new(raw.times, raw.values)
    }
}

impl From<SampledSignal> for RawSignal {
    fn from(s: SampledSignal) -> Self {
        Self {
            times: s.times,
            values: s.values,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    t: f64,
    value: f64,
}

impl SampledSignal {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                context: "signal samples",
                expected: times.len(),
                found: values.len(),
            });
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidArgument(format!("signal must start at t = 0, got {}", times[0])));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("signal times must be strictly increasing".into()));
        }
        if times.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("signal"));
        }
        Ok(Self { times, values })
    }

    pub fn from_fn(times: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("nonempty by construction")
    }

    /// Piecewise-linear interpolation, clamped to the end values.
    pub fn interpolate(&self, t: f64) -> f64 {
        let ts = &self.times;
        if t <= ts[0] {
            return self.values[0];
        }
        if t >= self.end() {
            return *self.values.last().expect("nonempty");
        }
        let hi = ts.partition_point(|&x| x <= t);
        let lo = hi - 1;
        let s = (t - ts[lo]) / (ts[hi] - ts[lo]);
        self.values[lo] * (1.0 - s) + self.values[hi] * s
    }

    pub fn same_grid(&self, other: &SampledSignal) -> bool {
        self.times == other.times
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (&t, &value) in self.times.iter().zip(&self.values) {
            w.serialize(CsvRow { t, value })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for row in r.deserialize() {
            let row: CsvRow = row?;
            times.push(row.t);
            values.push(row.value);
        }
        Self::new(times, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quadrature_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(7);
        for deg in 0..14 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {deg}: {q} vs {exact}");
        }
    }

    #[test]
    fn gram_is_identity() {
        for (t, m) in [(1.0, 5), (20.0, 10), (100.0, 15)] {
            let b = basis(t, m).unwrap();
            let err = (b.quadrature_gram() - DMatrix::identity(m, m)).amax();
            assert!(err <= 1e-10, "T={t} m={m}: {err}");
        }
    }

    #[test]
    fn basis_examples() {
        let b = basis(20.0, 10).unwrap();
        for t in [0.0, 3.3, 20.0] {
            assert!((b.evaluate(1, t).unwrap() - 1.0 / 20f64.sqrt()).abs() < 1e-15);
        }
        for i in 1..=10 {
            let end = ((2 * i - 1) as f64 / 20.0).sqrt();
            assert!((b.evaluate(i, 20.0).unwrap() - end).abs() < 1e-13);
        }
        assert!(b.evaluate(0, 1.0).is_err());
        assert!(b.evaluate(11, 1.0).is_err());
        assert!(b.evaluate(1, 20.5).is_err());

        let b2 = basis(2.0, 3).unwrap();
        for t in [0.0, 0.4, 1.0, 1.7, 2.0] {
            let expect = 1.5f64.sqrt() * (t - 1.0);
            assert!((b2.evaluate(2, t).unwrap() - expect).abs() < 1e-14);
        }
        let norm = b2.l2_norm(|t| b2.evaluate(2, t).unwrap());
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn third_function_matches_expansion() {
        // P₂(x) = (3x² − 1)/2 with x = 2t/T − 1.
        let horizon = 7.0;
        let b = basis(horizon, 4).unwrap();
        for &t in b.nodes() {
            let x = 2.0 * t / horizon - 1.0;
            let expect = (5.0 / horizon).sqrt() * (3.0 * x * x - 1.0) / 2.0;
            assert!((b.evaluate(3, t).unwrap() - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn projection_examples() {
        let horizon = 20.0;
        let b = basis(horizon, 10).unwrap();
        let c = b.project_fn(|t| shifted_legendre(3, horizon, t));
        let mut e3 = DVector::zeros(10);
        e3[2] = 1.0;
        assert!((&c - &e3).amax() < 1e-10);

        let c = b.project_fn(|_| 1.0);
        assert!((c[0] - horizon.sqrt()).abs() < 1e-10);
        assert!(c.rows(1, 9).amax() < 1e-10);

        let c = b.project_fn(|t| shifted_legendre(1, horizon, t) + shifted_legendre(2, horizon, t));
        assert!((c[0] - 1.0).abs() < 1e-10 && (c[1] - 1.0).abs() < 1e-10);
        assert!(c.rows(2, 8).amax() < 1e-10);
    }

    #[test]
    fn reconstruction_roundtrip() {
        let horizon = 20.0;
        let b = basis(horizon, 10).unwrap();
        assert_eq!(b.reconstruct(&DVector::zeros(10), 4.0).unwrap(), 0.0);
        let c = b.project_fn(|t| shifted_legendre(2, horizon, t));
        for k in 0..100 {
            let t = horizon * k as f64 / 99.0;
            assert!((b.reconstruct(&c, t).unwrap() - shifted_legendre(2, horizon, t)).abs() < 1e-9);
        }
        let poly = |t: f64| 0.3 - 0.2 * t + 0.01 * t.powi(4) - 1e-9 * t.powi(9);
        let c = b.project_fn(poly);
        for k in 0..100 {
            let t = horizon * k as f64 / 99.0;
            assert!((b.reconstruct(&c, t).unwrap() - poly(t)).abs() < 1e-9);
        }
    }

    #[test]
    fn relative_error_examples() {
        let horizon = 20.0;
        let b = basis(horizon, 10).unwrap();
        let mut e1 = DVector::zeros(10);
        e1[0] = 1.0;
        assert!(b.relative_l2_error(|t| shifted_legendre(1, horizon, t), &e1).unwrap() < 1e-12);
        let beyond = |t| shifted_legendre(11, horizon, t);
        let c = b.project_fn(beyond);
        assert!((b.relative_l2_error(beyond, &c).unwrap() - 1.0).abs() < 1e-10);
        assert!(matches!(b.relative_l2_error(|_| 0.0, &e1), Err(Error::ZeroNorm)));
    }

    #[test]
    fn sampled_signal_projection_and_coverage() {
        let horizon = 20.0;
        let b = basis(horizon, 10).unwrap();
        let times: Vec<f64> = (0..=20000).map(|k| k as f64 * horizon / 20000.0).collect();
        let s = SampledSignal::from_fn(times.clone(), |t| shifted_legendre(2, horizon, t)).unwrap();
        let c = b.project_signal(&s).unwrap();
        assert!((c[1] - 1.0).abs() < 1e-6);
        let short = SampledSignal::from_fn(times[..100].to_vec(), |t| t).unwrap();
        assert!(matches!(b.project_signal(&short), Err(Error::InsufficientCoverage { .. })));
    }

    #[test]
    fn signal_validation_and_csv() {
        assert!(SampledSignal::new(vec![0.1, 0.2], vec![1.0, 2.0]).is_err());
        assert!(SampledSignal::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(SampledSignal::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let s = SampledSignal::new(vec![0.0, 0.5, 1.25], vec![1.0, -2.0, 0.125]).unwrap();
        assert_eq!(s.interpolate(0.25), -0.5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        s.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,value\n"));
        assert_eq!(SampledSignal::read_csv(&path).unwrap(), s);
    }

    proptest! {
        #[test]
        fn projection_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, w1 in 0.0f64..2.0, w2 in 0.0f64..2.0) {
            let horizon = 20.0;
            let basis = basis(horizon, 10).unwrap();
            let f = |t: f64| (w1 * t).sin();
            let g = |t: f64| (-w2 * t).exp();
            let lhs = basis.project_fn(|t| a * f(t) + b * g(t));
            let rhs = basis.project_fn(f) * a + basis.project_fn(g) * b;
            prop_assert!((lhs - rhs).amax() <= 1e-10);
        }

        #[test]
        fn parseval_on_span(c in proptest::collection::vec(-2.0f64..2.0, 10)) {
            let basis = basis(20.0, 10).unwrap();
            let c = DVector::from_vec(c);
            let norm = basis.l2_norm(|t| basis.reconstruct(&c, t).unwrap());
            prop_assert!((norm - c.norm()).abs() <= 1e-9);
        }
    }
}
