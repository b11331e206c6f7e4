//! Closed-form solution of the diffusion-approximation dividend problem.
//!
//! The uncontrolled approximation is a Brownian motion with drift θλE Y and
//! variance λE(Y²); its optimal-dividend value function V_D is
//!
//!   V_D(x) = (e^{γ₁x} - e^{-γ₂x}) / C          on [0, b_D],
//!   V_D(x) = θλE Y/δ + (x - b_D)               above b_D,
//!
//! with 0 < γ₁ < γ₂ the roots of ½λE(Y²)γ² + θλE Y·γ - δ = 0,
//! b_D = 2 ln(γ₂/γ₁)/(γ₁+γ₂) and C = (γ₁+γ₂)(γ₂/γ₁)^{(γ₁-γ₂)/(γ₁+γ₂)}.
//! For x < 0 the oscillatory branch is kept; the operator analysis needs
//! that extension.

use crate::error::Result;
use crate::model::CLParameters;

/// Solved free-boundary data for the diffusion problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionSolution {
    pub gamma1: f64,
    pub gamma2: f64,
    pub b_d: f64,
    /// Normalizing constant C (equals γ₁e^{γ₁b_D} + γ₂e^{-γ₂b_D}).
    pub c_norm: f64,
    pub params: CLParameters,
}

/// Solve for (γ₁, γ₂, b_D, C).  The larger-magnitude root comes from the
/// quadratic formula without cancellation; the other from the product
/// identity γ₁γ₂ = 2δ/(λE(Y²)).
pub fn solve_diffusion(params: &CLParameters) -> Result<DiffusionSolution> {
    let drift = params.theta * params.lambda * params.claim.mean();
    let var = params.lambda * params.claim.moment(2);
    let disc = (drift * drift + 2.0 * params.delta * var).sqrt();
    let gamma2 = (drift + disc) / var;
    let gamma1 = 2.0 * params.delta / (var * gamma2);
    let b_d = 2.0 / (gamma1 + gamma2) * (gamma2 / gamma1).ln();
    let c_norm =
        (gamma1 + gamma2) * (gamma2 / gamma1).powf((gamma1 - gamma2) / (gamma1 + gamma2));
    Ok(DiffusionSolution { gamma1, gamma2, b_d, c_norm, params: *params })
}

impl DiffusionSolution {
    /// V_D(b_D) = θλE Y/δ, the perpetuity of the premium loading.
    pub fn value_at_barrier(&self) -> f64 {
        self.params.theta * self.params.lambda * self.params.claim.mean() / self.params.delta
    }

    /// V_D(x).  Below b_D (including x < 0) the oscillatory branch applies.
    pub fn vd(&self, x: f64) -> f64 {
        if x < self.b_d {
            ((self.gamma1 * x).exp() - (-self.gamma2 * x).exp()) / self.c_norm
        } else {
            self.value_at_barrier() + (x - self.b_d)
        }
    }

    /// (V_D'(x), V_D''(x)) of the active branch; (1, 0) from b_D up.
    pub fn vd_derivatives(&self, x: f64) -> (f64, f64) {
        if x < self.b_d {
            let e1 = (self.gamma1 * x).exp();
            let e2 = (-self.gamma2 * x).exp();
            (
                (self.gamma1 * e1 + self.gamma2 * e2) / self.c_norm,
                (self.gamma1 * self.gamma1 * e1 - self.gamma2 * self.gamma2 * e2) / self.c_norm,
            )
        } else {
            (1.0, 0.0)
        }
    }

    pub fn vd_prime(&self, x: f64) -> f64 {
        self.vd_derivatives(x).0
    }
}

pub fn vd_eval(sol: &DiffusionSolution, x: f64) -> f64 {
    sol.vd(x)
}

pub fn vd_derivatives(sol: &DiffusionSolution, x: f64) -> (f64, f64) {
    sol.vd_derivatives(x)
}
