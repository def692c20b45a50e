//! Rotational/translational proof-mass actuator with unit parameters:
//!
//! ```text
//! 2q̈ + θ̈ cos θ − θ̇² sin θ + q = 0
//! q̈ cos θ + 2θ̈ = u,        y = θ̇
//! ```
//!
//! simulated from rest with fixed-step RK4.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::legendre::SampledSignal;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RtacState {
    pub q: f64,
    pub q_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl RtacState {
    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.q_dot.is_finite() && self.theta.is_finite() && self.theta_dot.is_finite()
    }

    fn axpy(&self, h: f64, d: &RtacState) -> RtacState {
        RtacState {
            q: self.q + h * d.q,
            q_dot: self.q_dot + h * d.q_dot,
            theta: self.theta + h * d.theta,
            theta_dot: self.theta_dot + h * d.theta_dot,
        }
    }

    /// Storage function `H = q̇² + θ̇² + q̇θ̇ cos θ + q²/2`.
    pub fn energy(&self) -> f64 {
        self.q_dot.powi(2)
            + self.theta_dot.powi(2)
            + self.q_dot * self.theta_dot * self.theta.cos()
            + 0.5 * self.q.powi(2)
    }
}

/// Time derivative of the state; the `q`/`theta` fields of the result hold
/// velocities and the `_dot` fields accelerations.
pub fn dynamics(x: &RtacState, u: f64) -> RtacState {
    let c = x.theta.cos();
    let f1 = x.theta_dot.powi(2) * x.theta.sin() - x.q;
    let det = 4.0 - c * c;
    RtacState {
        q: x.q_dot,
        q_dot: (2.0 * f1 - c * u) / det,
        theta: x.theta_dot,
        theta_dot: (2.0 * u - c * f1) / det,
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub times: Vec<f64>,
    pub states: Vec<RtacState>,
    pub inputs: Vec<f64>,
}

impl Simulation {
    pub fn output(&self) -> SampledSignal {
        SampledSignal::new(self.times.clone(), self.states.iter().map(|s| s.theta_dot).collect())
            .expect("simulation grid is valid")
    }

    pub fn input(&self) -> SampledSignal {
        SampledSignal::new(self.times.clone(), self.inputs.clone()).expect("simulation grid is valid")
    }

    pub fn final_state(&self) -> RtacState {
        *self.states.last().expect("at least the initial state")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            t: f64,
            q: f64,
            q_dot: f64,
            theta: f64,
            theta_dot: f64,
            u: f64,
            y: f64,
        }
        let mut w = csv::Writer::from_path(path)?;
        for ((&t, s), &u) in self.times.iter().zip(&self.states).zip(&self.inputs) {
            w.serialize(Row {
                t,
                q: s.q,
                q_dot: s.q_dot,
                theta: s.theta,
                theta_dot: s.theta_dot,
                u,
                y: s.theta_dot,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Integrates from rest over `[0, T]` with `round(T/dt)` equal RK4 steps.
pub fn simulate(input: impl Fn(f64) -> f64, horizon: f64, dt: f64) -> Result<Simulation> {
    if !(horizon.is_finite() && horizon > 0.0 && dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need positive horizon and step, got T = {horizon}, dt = {dt}"
        )));
    }
    let steps = ((horizon / dt).round() as usize).max(1);
    let h = horizon / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps + 1);
    let mut x = RtacState::default();
    times.push(0.0);
    states.push(x);
    inputs.push(input(0.0));
    for k in 0..steps {
        let t = k as f64 * h;
        let u_mid = input(t + 0.5 * h);
        let t_next = (k + 1) as f64 * h;
        let u_end = input(t_next);
        let k1 = dynamics(&x, inputs[k]);
        let k2 = dynamics(&x.axpy(0.5 * h, &k1), u_mid);
        let k3 = dynamics(&x.axpy(0.5 * h, &k2), u_mid);
        let k4 = dynamics(&x.axpy(h, &k3), u_end);
        x = RtacState {
            q: x.q + h / 6.0 * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q),
            q_dot: x.q_dot + h / 6.0 * (k1.q_dot + 2.0 * k2.q_dot + 2.0 * k3.q_dot + k4.q_dot),
            theta: x.theta + h / 6.0 * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta),
            theta_dot: x.theta_dot
                + h / 6.0 * (k1.theta_dot + 2.0 * k2.theta_dot + 2.0 * k3.theta_dot + k4.theta_dot),
        };
        if !x.is_finite() || !u_end.is_finite() {
            return Err(Error::SimulationBlowUp { time: t_next });
        }
        times.push(t_next);
        states.push(x);
        inputs.push(u_end);
    }
    Ok(Simulation { times, states, inputs })
}

/// Cumulative trapezoidal integrals `∫₀^{tₖ} a b dt`.
pub fn cumulative_inner_product(times: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..times.len() {
        let h = times[k] - times[k - 1];
        acc += 0.5 * h * (a[k] * b[k] + a[k - 1] * b[k - 1]);
        out.push(acc);
    }
    out
}

/// `maxₖ |H(tₖ) − ∫₀^{tₖ} u θ̇ dt|`.
pub fn energy_balance_residual(sim: &Simulation) -> f64 {
    let y: Vec<f64> = sim.states.iter().map(|s| s.theta_dot).collect();
    let supplied = cumulative_inner_product(&sim.times, &sim.inputs, &y);
    sim.states
        .iter()
        .zip(&supplied)
        .map(|(s, w)| (s.energy() - w).abs())
        .fold(0.0, f64::max)
}

pub fn max_energy(sim: &Simulation) -> f64 {
    sim.states.iter().map(RtacState::energy).fold(0.0, f64::max)
}
