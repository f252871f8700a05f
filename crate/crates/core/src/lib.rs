//! Multilevel Metropolis sampling of discretized stochastic paths.
//!
//! Paths `λ(0), …, λ(M)` with `M = 2^m` are weighted by `exp(-S)` where `S`
//! is a discretized non-equilibrium path action built from a drift `Θ`, a
//! metric `g` and a non-negative potential `Ψ`. Sampling proceeds by
//!
//! 1. integrating a mean trajectory and building a quadratic (Gaussian)
//!    approximation of the action on the finest level, either by linearizing
//!    the drift ([`action::init_level_m_linearized`]) or by a second-order
//!    Taylor expansion of the exact action ([`action::init_level_m_taylor`]);
//! 2. marginalizing that Gaussian level by level down to the floating
//!    endpoint ([`recursion::build_ladder`]);
//! 3. drawing whole paths coarse-to-fine from the resulting heat-bath
//!    conditionals and correcting with a single Metropolis test against the
//!    exact action ([`sampler::run_chain`]);
//! 4. optionally reweighting pinned-endpoint runs towards the endpoint
//!    consistency distribution ([`reweight`]).

pub mod action;
pub mod error;
pub mod linalg;
pub mod linearization;
pub mod model;
pub mod recursion;
pub mod reweight;
pub mod sampler;

pub use error::{Error, Result};
pub use model::{Model, Path, StateVector, TimeGrid};
