//! Numerical laboratory for quadratic-cone certificates of squeezing in
//! periodically forced evolution systems.
//!
//! The pipeline runs in four stages, each usable on its own:
//!
//! 1. [`model`] builds finite-dimensional truncations `(A, B, C, M)` of two
//!    model problems: a scalar equation with distributed delay and a 1-D
//!    reaction-diffusion equation with nonlinear boundary control.
//! 2. [`frequency`] evaluates transfer functions `W(p) = C (A - pI)^{-1} B`
//!    and certifies the frequency-domain condition
//!    `Re W(i w - nu) + 1/mu0 > 0` for all real `w`.
//! 3. [`kyp`] solves the associated Riccati equation for a self-adjoint `P`
//!    with `2 Re (A_nu u + B xi, P u) + F(u, xi) <= -delta (|u|^2 + |xi|^2)`,
//!    and [`operator`] audits its inertia against the dichotomy of `A + nu I`.
//! 4. [`cocycle`] integrates the nonlinear systems and [`reduction`] verifies
//!    the consequences: exponential squeezing of the quadratic form
//!    `V(u) = (P u, u)` along trajectory pairs, one-dimensional fibres of the
//!    amenable set, convergence to periodic orbits, and attraction rates.
//!
//! Everything downstream of the certificate is a *check*, not a proof: the
//! point of the crate is to make the hypotheses of the reduction principle
//! falsifiable at desk scale, so every green verdict is required to turn red
//! under a sign flip of `P` or of `nu` (see the tests in [`reduction`]).

pub mod cocycle;
pub mod config;
pub mod frequency;
pub mod kyp;
pub mod model;
pub mod operator;
pub mod pipeline;
pub mod reduction;
pub mod report;
pub mod tables;
