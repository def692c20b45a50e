//! Identification of nonnegative input–output operators from trajectory
//! data with sum-of-squares kernel models.
//!
//! The identified operator has the form `G(u) = κ(u)ᵀ M κ(u) u` where
//! `κ(u)` stacks kernel evaluations against the training inputs and
//! `M + Mᵀ ⪰ 0`, so `⟨G(u), u⟩ ≥ 0` for every input. `M` is found by a
//! semidefinite program ([`sdp`]) that trades data misfit against the
//! operator norm of the induced feature-space operator.
//!
//! Supporting modules provide the orthonormal Legendre basis used to move
//! between signals on `[0, T]` and coefficient vectors ([`legendre`]), a
//! simulator for the benchmark proof-mass actuator ([`rtac`]), and the
//! experiment driver behind the `sosid` CLI ([`experiment`]).

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod kernels;
pub mod lemmas;
pub mod legendre;
pub mod linalg;
pub mod representer;
pub mod rtac;
pub mod sdp;
pub mod sos_model;
pub(crate) mod serde_util;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use kernels::KernelSpec;

/// An element of the finite-dimensional input space `ℝᵐ`.
pub type CoefficientVector = nalgebra::DVector<f64>;
