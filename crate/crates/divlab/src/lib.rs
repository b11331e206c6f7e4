//! Optimal-dividend value functions for the scaled Cramér–Lundberg model and
//! its diffusion approximation.
//!
//! The workspace revolves around one worked setup: claims Y with a light tail
//! (finite MGF near 0), arrivals at rate λ, loading θ, discount δ.  Scaling by
//! n (λ_n = nλ, claims Y/√n, premium c_n = (√n+θ)λE Y) leaves the diffusion
//! approximation fixed, and the value function V_n of the scaled dividend
//! problem converges to the diffusion value V_D at rate O(n^{-1/2}).  The
//! crate computes both sides in closed form, certifies the bound constants on
//! grids, and cross-validates every analytic payoff against an event-driven
//! Monte Carlo simulator.
//!
//! Modules
//! - [`model`]: claim laws, parameters, diffusion scaling.
//! - [`diffusion`]: γ₁, γ₂, the barrier b_D, and V_D.
//! - [`ide`]: the operators G_n and F_n, characteristic roots, exponential-sum
//!   solvers.
//! - [`strategy`]: band construction, barrier payoffs, the exponential-claim
//!   optimal barrier.
//! - [`analysis`]: bound constants (A, q, p, C′, C″), sub/supersolution grid
//!   certification, convergence tables.
//! - [`sim`]: the Monte Carlo oracle.
//! - [`cli`]: batch front-end.

// Validation uses `!(v > 0.0)` so NaN inputs are rejected along with
// non-positive ones; `v <= 0.0` would accept NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod diffusion;
mod error;
pub mod ide;
pub mod model;
pub mod piecewise;
pub mod quad;
pub mod sim;
pub mod strategy;

pub use error::{Error, Result};
