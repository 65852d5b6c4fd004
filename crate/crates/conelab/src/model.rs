//! Finite-dimensional truncations of the two model problems.
//!
//! Both models are stored in one coordinate convention: dynamics
//! `u' = A u + B f(t, C u) + g(t)` where `A = M^{-1} A_weak` and
//! `B = M^{-1} B_weak` are the operators in coordinates, `C` is the
//! observation functional applied directly to coordinates, and `M` is the
//! Gram matrix of the state inner product. The transfer function used by the
//! frequency module is then the literal composition `W(p) = C (A - pI)^{-1} B`
//! for every model.
//!
//! Delay problem: `x'(t) = -lambda x(t) + b f(t, v(t)) + g(t)` with
//! `v(t) = int_{-tau}^0 rho(s) x(t+s) ds`. The state is `(x, phi)` with
//! `phi(s) = x(t+s)` on the uniform grid `s_i = -tau + i Delta`,
//! `Delta = tau / n_grid`, and the shift semigroup is discretized by
//! second-order one-sided differences toward `s = 0` (centered at the last
//! interior node). The node `s_n = 0` duplicates the head `x`: its row copies
//! the head's linear field plus a `1/Delta` penalty onto `phi(0) = x`, so in
//! the resolvent the penalty pole cancels and the node tracks `x` exactly,
//! which keeps the truncation error of the transfer function at
//! `O(Delta^2)`.
//!
//! Parabolic problem: `u_t = alpha u_xx - beta u` on `(0, 1)` with Neumann
//! control through the `x = 1` boundary and observation
//! `v = int_0^1 rho(x) u(t, x) dx`, truncated on the Neumann cosine basis
//! `cos(k pi x)`, in which the diffusion operator is exactly diagonal with
//! eigenvalues `-alpha pi^2 k^2 - beta`. The boundary term enters the weak
//! form as `+alpha xi v(1)`; the sign is fixed by the closed-form transfer
//! function `W(p) = -alpha / (p + beta)` of the constant-kernel problem (see
//! `frequency::parabolic_transfer`), so in coordinates `B_0 = alpha` and
//! `B_k = 2 alpha (-1)^k` for `k >= 1` after dividing by the cosine masses.

use crate::operator::MassMatrix;
use crate::tables::KernelTable;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model parameters: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub struct DelayParams {
    pub lambda: f64,
    pub b: f64,
    pub tau: f64,
    /// Kernel on `[-tau, 0]`.
    pub rho: KernelTable,
    pub n_grid: usize,
}

impl DelayParams {
    pub fn grid_spacing(&self) -> f64 {
        self.tau / self.n_grid as f64
    }

    /// History nodes `s_i = -tau + i Delta`, `i = 1..n_grid` (so `s_n = 0`).
    pub fn grid_nodes(&self) -> Vec<f64> {
        let delta = self.grid_spacing();
        (1..=self.n_grid).map(|i| -self.tau + i as f64 * delta).collect()
    }

    /// Trapezoid weights over `[-tau, 0]` on the history nodes. The cell
    /// `[-tau, -tau + Delta)` has no left node; its mass goes to the first
    /// node, so constants integrate exactly.
    pub fn quad_weights(&self) -> Vec<f64> {
        let delta = self.grid_spacing();
        let n = self.n_grid;
        (1..=n)
            .map(|i| {
                if i == 1 {
                    1.5 * delta
                } else if i == n {
                    0.5 * delta
                } else {
                    delta
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ParabolicParams {
    pub alpha: f64,
    pub beta: f64,
    /// Kernel on `[0, 1]`.
    pub rho: KernelTable,
    pub n_modes: usize,
}

impl ParabolicParams {
    /// Mode eigenvalues `lambda_k = -alpha pi^2 k^2 - beta`.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let pi = std::f64::consts::PI;
        -self.alpha * pi * pi * (k * k) as f64 - self.beta
    }
}

#[derive(Debug, Clone)]
pub enum ModelSpec {
    Delay(DelayParams),
    Parabolic(ParabolicParams),
    /// One-dimensional diagnostic model `x' = -a x + xi`, `v = x`.
    Scalar { a: f64 },
}

/// Truncated control system `(A, B, C, M)`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub spec: ModelSpec,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub mass: MassMatrix,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn kind_name(&self) -> &'static str {
        match self.spec {
            ModelSpec::Delay(_) => "delay",
            ModelSpec::Parabolic(_) => "parabolic",
            ModelSpec::Scalar { .. } => "scalar",
        }
    }

    /// Observation `v = C u`.
    pub fn observe(&self, u: &DVector<f64>) -> f64 {
        self.c.dot(u)
    }

    pub fn scalar(a: f64) -> Self {
        Self {
            spec: ModelSpec::Scalar { a },
            a: DMatrix::from_element(1, 1, -a),
            b: DVector::from_element(1, 1.0),
            c: DVector::from_element(1, 1.0),
            mass: MassMatrix::identity(1),
        }
    }
}

pub fn build_delay_model(params: DelayParams) -> Result<LinearModel, ModelError> {
    if !(params.tau > 0.0) || !params.tau.is_finite() {
        return Err(ModelError::Invalid("tau must be positive".into()));
    }
    if !(params.lambda > 0.0) || !params.lambda.is_finite() {
        return Err(ModelError::Invalid("lambda must be positive".into()));
    }
    if params.b == 0.0 || !params.b.is_finite() {
        return Err(ModelError::Invalid("b must be nonzero".into()));
    }
    if params.n_grid < 4 {
        return Err(ModelError::Invalid(
            "n_grid must be at least 4 for the upwind truncation".into(),
        ));
    }
    let (lo, hi) = params.rho.support();
    if lo > -params.tau + 1e-12 || hi < -1e-12 {
        return Err(ModelError::Invalid(format!(
            "kernel support [{lo}, {hi}] does not cover [-tau, 0] = [{}, 0]",
            -params.tau
        )));
    }

    let n = params.n_grid;
    let dim = n + 1;
    let delta = params.grid_spacing();
    let inv = 1.0 / delta;
    let mut a = DMatrix::zeros(dim, dim);
    a[(0, 0)] = -params.lambda;
    for i in 1..=n - 2 {
        a[(i, i)] = -1.5 * inv;
        a[(i, i + 1)] = 2.0 * inv;
        a[(i, i + 2)] = -0.5 * inv;
    }
    // Centered difference at the last interior node, reaching the boundary
    // node on its right.
    a[(n - 1, n - 2)] = -0.5 * inv;
    a[(n - 1, n)] = 0.5 * inv;
    // The s = 0 node duplicates the head: copy the head's linear field and
    // add a penalty onto phi(0) = x. The penalty pole cancels in the
    // resolvent, so the node tracks x without a lag.
    a[(n, 0)] = -params.lambda + inv;
    a[(n, n)] = -inv;
    let mut b = DVector::zeros(dim);
    b[0] = params.b;
    b[n] = params.b;

    let nodes = params.grid_nodes();
    let weights = params.quad_weights();
    let mut c = DVector::zeros(dim);
    for i in 1..=n {
        c[i] = weights[i - 1] * params.rho.eval(nodes[i - 1]);
    }

    let mut mw = Vec::with_capacity(dim);
    mw.push(1.0);
    mw.extend_from_slice(&weights);
    let mass = MassMatrix::diagonal(&mw).map_err(|e| ModelError::Invalid(e.to_string()))?;

    Ok(LinearModel {
        spec: ModelSpec::Delay(params),
        a,
        b,
        c,
        mass,
    })
}

/// Composite Simpson nodes and weights on `[0, 1]`; interval count scales
/// with the mode count so the highest cosine is resolved to ~1e-11.
pub(crate) fn simpson_rule(n_modes: usize) -> (Vec<f64>, Vec<f64>) {
    let m = (256 * n_modes.max(4)).next_power_of_two();
    let h = 1.0 / (2 * m) as f64;
    let mut nodes = Vec::with_capacity(2 * m + 1);
    let mut weights = Vec::with_capacity(2 * m + 1);
    for j in 0..=(2 * m) {
        nodes.push(j as f64 * h);
        let w = if j == 0 || j == 2 * m {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        weights.push(w * h / 3.0);
    }
    (nodes, weights)
}

pub fn build_parabolic_model(params: ParabolicParams) -> Result<LinearModel, ModelError> {
    if !(params.alpha > 0.0) || !params.alpha.is_finite() {
        return Err(ModelError::Invalid("alpha must be positive".into()));
    }
    if !params.beta.is_finite() {
        return Err(ModelError::Invalid("beta must be finite".into()));
    }
    if params.n_modes < 2 {
        return Err(ModelError::Invalid("n_modes must be at least 2".into()));
    }
    let (lo, hi) = params.rho.support();
    if lo > 1e-12 || hi < 1.0 - 1e-12 {
        return Err(ModelError::Invalid(format!(
            "kernel support [{lo}, {hi}] does not cover [0, 1]"
        )));
    }

    let n = params.n_modes;
    let pi = std::f64::consts::PI;
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    let mut mw = Vec::with_capacity(n);
    for k in 0..n {
        a[(k, k)] = params.eigenvalue(k);
        let mk = if k == 0 { 1.0 } else { 0.5 };
        mw.push(mk);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        b[k] = params.alpha * sign / mk;
    }

    let (nodes, weights) = simpson_rule(n);
    let mut c = DVector::zeros(n);
    for k in 0..n {
        let mut ck = 0.0;
        for (x, w) in nodes.iter().zip(weights.iter()) {
            ck += w * params.rho.eval(*x) * (k as f64 * pi * x).cos();
        }
        c[k] = ck;
    }

    let mass = MassMatrix::diagonal(&mw).map_err(|e| ModelError::Invalid(e.to_string()))?;

    Ok(LinearModel {
        spec: ModelSpec::Parabolic(params),
        a,
        b,
        c,
        mass,
    })
}
