//! Transfer functions and the frequency-domain condition.
//!
//! Throughout, `W(p) = C (A - pI)^{-1} B`. The condition certified here is
//!
//! ```text
//! Re W(i w - nu) + 1/mu0 > 0   for all real w,
//! ```
//!
//! which by the frequency theorem is equivalent (under L2-controllability of
//! the shifted pair) to solvability of the quadratic inequality handled in
//! [`crate::kyp`]. The sweep covers a symmetric log-spaced grid of
//! frequencies; the unbounded tail is closed with an explicit decay bound
//! `|W(i w - nu)| <= K / |w|`, with `K` estimated on the outer decade of the
//! grid and doubled for safety.

use crate::model::{DelayParams, LinearModel, ParabolicParams};
use crate::tables::KernelTable;
use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

pub type C64 = Complex<f64>;

#[derive(Debug, Error)]
pub enum FrequencyError {
    #[error("transfer function has a pole at p = {re}{im:+}i")]
    PoleAt { re: f64, im: f64 },
    #[error("resolvent solve near-singular at p = {re}{im:+}i (residual {residual:.3e})")]
    NearSingular { re: f64, im: f64, residual: f64 },
    #[error("invalid frequency range: {0}")]
    BadRange(String),
}

/// Laplace transform `int rho(s) e^{p s} ds` of a piecewise-linear kernel,
/// evaluated exactly per segment (series branch for small `|p| * length`).
pub fn kernel_laplace(rho: &KernelTable, p: C64) -> C64 {
    let mut total = C64::new(0.0, 0.0);
    for ((x0, v0), (x1, v1)) in rho.segments() {
        let len = x1 - x0;
        let slope = (v1 - v0) / len;
        let z = p * len;
        // i0 = int_0^len e^{p s} ds, i1 = int_0^len s e^{p s} ds
        let (i0, i1) = if z.norm() < 1e-4 {
            let i0 = len * (C64::new(1.0, 0.0) + z / 2.0 + z * z / 6.0 + z * z * z / 24.0);
            let i1 = len * len
                * (C64::new(0.5, 0.0) + z / 3.0 + z * z / 8.0 + z * z * z / 30.0);
            (i0, i1)
        } else {
            let e = z.exp();
            let i0 = (e - 1.0) / p;
            let i1 = len * e / p - (e - 1.0) / (p * p);
            (i0, i1)
        };
        total += (p * x0).exp() * (i0 * v0 + i1 * slope);
    }
    total
}

/// Transfer function of the delay problem,
/// `W(p) = -(b / (lambda + p)) int_{-tau}^0 rho(s) e^{p s} ds`.
pub fn delay_transfer(params: &DelayParams, p: C64) -> Result<C64, FrequencyError> {
    let denom = p + params.lambda;
    if denom.norm() < 1e-12 {
        return Err(FrequencyError::PoleAt { re: p.re, im: p.im });
    }
    Ok(-(params.b / denom) * kernel_laplace(&params.rho, p))
}

/// Transfer function of the parabolic problem,
/// `W(p) = -int_0^1 rho(x) u~(x, p) dx` where `u~` solves the stationary
/// boundary value problem `alpha u_xx = (p + beta) u`, `u_x(0) = 0`,
/// `u_x(1) = 1`; explicitly `u~ = cosh(kappa x) / (kappa sinh kappa)` with
/// `kappa^2 = (p + beta) / alpha`. Evaluated by composite Simpson on the same
/// nodes the model builder uses for its observation row. The value is a
/// function of `kappa^2` (both `cosh(kappa x)/sinh(kappa)` factors are even
/// up to the shared `kappa`), so the branch of the square root is irrelevant.
pub fn parabolic_transfer(params: &ParabolicParams, p: C64) -> Result<C64, FrequencyError> {
    let kappa2 = (p + params.beta) / params.alpha;
    if kappa2.norm() < 1e-12 {
        return Err(FrequencyError::PoleAt { re: p.re, im: p.im });
    }
    let kappa = kappa2.sqrt();
    // Scaled form: cosh(kappa x) / (kappa sinh kappa)
    //   = (e^{kappa(x-1)} + e^{-kappa(x+1)}) / (kappa (1 - e^{-2 kappa})),
    // stable for Re kappa >= 0 (principal square root).
    let em2 = (-kappa * 2.0).exp();
    let denom = kappa * (C64::new(1.0, 0.0) - em2);
    if denom.norm() < 1e-10 * kappa.norm().max(1.0) {
        return Err(FrequencyError::PoleAt { re: p.re, im: p.im });
    }
    let (nodes, weights) = crate::model::simpson_rule(params.n_modes);
    let mut integral = C64::new(0.0, 0.0);
    for (x, w) in nodes.iter().zip(weights.iter()) {
        let utilde = ((kappa * (x - 1.0)).exp() + (-kappa * (x + 1.0)).exp()) / denom;
        integral += utilde * (params.rho.eval(*x) * w);
    }
    Ok(-integral)
}

/// Transfer function of an explicit truncation: solves `(A - pI) y = B` in
/// complex arithmetic and returns `C y`. Rejects the solve when the residual
/// exceeds `1e-9 |B|`.
pub fn generic_transfer(model: &LinearModel, p: C64) -> Result<C64, FrequencyError> {
    let n = model.dim();
    let mut a = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = C64::new(model.a[(i, j)], 0.0);
        }
        a[(i, i)] -= p;
    }
    let b = DVector::<C64>::from_iterator(n, model.b.iter().map(|x| C64::new(*x, 0.0)));
    let lu = a.clone().lu();
    let y = lu
        .solve(&b)
        .ok_or(FrequencyError::NearSingular {
            re: p.re,
            im: p.im,
            residual: f64::INFINITY,
        })?;
    let residual = (&a * &y - &b).norm();
    if residual > 1e-9 * b.norm() {
        return Err(FrequencyError::NearSingular {
            re: p.re,
            im: p.im,
            residual,
        });
    }
    // Plain bilinear product: C is real, so no conjugation is wanted.
    Ok(model
        .c
        .iter()
        .zip(y.iter())
        .map(|(c, y)| y * *c)
        .sum())
}

/// Result of the frequency-condition sweep.
#[derive(Debug, Clone)]
pub struct FrequencyReport {
    pub satisfied: bool,
    pub min_margin: f64,
    pub argmin_omega: f64,
    pub tail_bound: f64,
    /// `(omega, margin)` pairs over the sweep grid (nonnegative half; the
    /// margin is even in omega by conjugate symmetry).
    pub grid: Vec<(f64, f64)>,
    pub nu: f64,
    pub mu0: f64,
}

/// Sweep the margin `1/mu0 + Re W(i w - nu)` over a log-spaced grid
/// `|w| in [omega_max * 1e-6, omega_max]` plus `w = 0`, and close the tail
/// with the decay estimate described in the module docs.
///
/// `satisfied` requires both the grid minimum and the tail bound strictly
/// positive. Conjugate symmetry `W(conj p) = conj W(p)` makes the margin even
/// in `w`; this is asserted on a few grid points rather than doubling the
/// sweep.
pub fn certify_condition<F>(
    transfer: F,
    nu: f64,
    mu0: f64,
    omega_max: f64,
    n_omega: usize,
) -> Result<FrequencyReport, FrequencyError>
where
    F: Fn(C64) -> Result<C64, FrequencyError>,
{
    if !(mu0 > 0.0) || !mu0.is_finite() {
        return Err(FrequencyError::BadRange("mu0 must be positive".into()));
    }
    if !(omega_max > 0.0) || n_omega < 16 {
        return Err(FrequencyError::BadRange(
            "need omega_max > 0 and at least 16 sweep points".into(),
        ));
    }
    let omega_min = omega_max * 1e-6;
    let mut omegas = vec![0.0];
    let ratio = (omega_max / omega_min).ln() / (n_omega - 1) as f64;
    for k in 0..n_omega {
        omegas.push(omega_min * (ratio * k as f64).exp());
    }

    let margin_at = |omega: f64| -> Result<f64, FrequencyError> {
        let w = transfer(C64::new(-nu, omega))?;
        Ok(1.0 / mu0 + w.re)
    };

    let mut grid = Vec::with_capacity(omegas.len());
    let mut min_margin = f64::INFINITY;
    let mut argmin = 0.0;
    for &omega in &omegas {
        let m = margin_at(omega)?;
        if m < min_margin {
            min_margin = m;
            argmin = omega;
        }
        grid.push((omega, m));
    }

    // Evenness check (conjugate symmetry) on a few points.
    for idx in [1, omegas.len() / 2, omegas.len() - 1] {
        let omega = omegas[idx];
        let plus = transfer(C64::new(-nu, omega))?;
        let minus = transfer(C64::new(-nu, -omega))?;
        let scale = plus.norm().max(1.0);
        if (plus - minus.conj()).norm() > 1e-9 * scale {
            return Err(FrequencyError::BadRange(format!(
                "transfer function violates conjugate symmetry at omega = {omega}"
            )));
        }
    }

    // Tail: |W(i w - nu)| <= K / w for w >= omega_max, with K sampled on the
    // outer decade and doubled.
    let mut k_est: f64 = 0.0;
    for &(omega, _) in grid.iter().filter(|(o, _)| *o >= omega_max / 10.0) {
        let w = transfer(C64::new(-nu, omega))?;
        k_est = k_est.max(omega * w.norm());
    }
    let tail_bound = 1.0 / mu0 - 2.0 * k_est / omega_max;

    Ok(FrequencyReport {
        satisfied: min_margin > 0.0 && tail_bound > 0.0,
        min_margin,
        argmin_omega: argmin,
        tail_bound,
        grid,
        nu,
        mu0,
    })
}
