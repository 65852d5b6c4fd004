//! Synthesis of the quadratic certificate by solving the constrained
//! inequality
//!
//! ```text
//! 2 ((A + nu I) u + B xi, P u)_M + F(u, xi) <= -delta (|u|_M^2 + xi^2)
//! ```
//!
//! for a self-adjoint `P`. In the hat variable `Ph = M P` this is a linear
//! matrix inequality in `Ph`; the extremal solution comes from the algebraic
//! Riccati equation obtained by maximizing over `xi`, and that equation is
//! solved through the stable invariant subspace of its Hamiltonian matrix.
//!
//! The subspace is extracted with the matrix sign function rather than from
//! eigenvectors. The delay discretization carries a transport block whose
//! spectrum is a single tight cluster (numerically a Jordan block of size
//! `n_grid`), so individual eigenvectors inside the cluster are meaningless
//! while the stable/antistable splitting itself is well conditioned. The sign
//! iteration only needs that splitting.
//!
//! The margin `delta` is not chosen a priori: the solver seeds it from the
//! drift scale and halves until the Riccati step succeeds, then re-certifies
//! the resulting `Ph` directly on the constraint block with `delta' = 0`. The
//! certified margin reported on the certificate comes from that a posteriori
//! eigenvalue check, never from the seed.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::LinearModel;
use crate::operator::{
    generalized_eigen, inertia_of_eigenvalues, Inertia, OperatorError, QuadraticCertificate,
};

/// Smallest dissipation margin tried before declaring the problem infeasible.
pub const DELTA_FLOOR: f64 = 1e-12;

const SIGN_MAX_ITER: usize = 100;
const SIGN_REL_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum KypError {
    #[error("invalid sector bound: {0}")]
    BadSector(String),
    #[error(
        "Hamiltonian matrix keeps eigenvalues on the imaginary axis down to \
         delta = {delta_floor:.3e}; the frequency condition fails"
    )]
    HamiltonianImaginaryAxis { delta_floor: f64 },
    #[error("no feasible certificate: best constraint-block margin {best_margin:.6e} >= 0")]
    Infeasible { best_margin: f64 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("numerical failure in KYP synthesis: {0}")]
    Numerical(String),
}

/// Sector constraint on the scalar nonlinearity, expressed through the
/// quadratic form `F(u, xi)` it induces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SectorBound {
    /// Slope in `[0, mu0]`: `F(u, xi) = xi (mu0 C u - xi)`.
    SlopeCap { mu0: f64 },
    /// Slope in `[mu1, mu2]`: `F(u, xi) = -(xi - mu1 C u)(xi - mu2 C u)`.
    Band { mu1: f64, mu2: f64 },
}

impl SectorBound {
    fn validate(&self) -> Result<(), KypError> {
        match *self {
            SectorBound::SlopeCap { mu0 } => {
                if !(mu0 > 0.0) || !mu0.is_finite() {
                    return Err(KypError::BadSector(format!("mu0 = {mu0} must be positive")));
                }
            }
            SectorBound::Band { mu1, mu2 } => {
                if !mu1.is_finite() || !mu2.is_finite() || !(mu1 < mu2) {
                    return Err(KypError::BadSector(format!(
                        "need finite mu1 < mu2, got [{mu1}, {mu2}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Slope cap recorded on the certificate: `mu0` for [`SectorBound::SlopeCap`],
    /// the upper edge `mu2` for [`SectorBound::Band`].
    pub fn slope_cap(&self) -> f64 {
        match *self {
            SectorBound::SlopeCap { mu0 } => mu0,
            SectorBound::Band { mu2, .. } => mu2,
        }
    }
}

/// Coefficient blocks of `F(u, xi) = u^T F1 u + 2 xi f2^T u + f3 xi^2`.
struct FormBlocks {
    f1: DMatrix<f64>,
    f2: DVector<f64>,
    f3: f64,
}

fn form_blocks(model: &LinearModel, sector: &SectorBound) -> FormBlocks {
    let n = model.dim();
    match *sector {
        SectorBound::SlopeCap { mu0 } => FormBlocks {
            f1: DMatrix::zeros(n, n),
            f2: &model.c * (mu0 / 2.0),
            f3: -1.0,
        },
        SectorBound::Band { mu1, mu2 } => FormBlocks {
            f1: &model.c * model.c.transpose() * (-mu1 * mu2),
            f2: &model.c * ((mu1 + mu2) / 2.0),
            f3: -1.0,
        },
    }
}

fn shifted_drift(model: &LinearModel, nu: f64) -> DMatrix<f64> {
    let mut a_nu = model.a.clone();
    for i in 0..model.dim() {
        a_nu[(i, i)] += nu;
    }
    a_nu
}

/// Most positive eigenvalue of the symmetric constraint block
///
/// ```text
/// [ A_nu^T Ph + Ph A_nu + F1 + delta' M    Ph B + f2 ]
/// [ (Ph B + f2)^T                          f3 + delta' ]
/// ```
///
/// The inequality holds with margin `delta` exactly when this value is
/// `<= -delta * min(lambda_min(M), 1)` at `delta' = 0`; feasibility is the
/// strict sign `< 0`.
pub fn kyp_margin(
    model: &LinearModel,
    nu: f64,
    sector: &SectorBound,
    p_hat: &DMatrix<f64>,
    delta_prime: f64,
) -> Result<f64, KypError> {
    sector.validate()?;
    let n = model.dim();
    if p_hat.nrows() != n || p_hat.ncols() != n {
        return Err(KypError::Numerical(format!(
            "p_hat is {}x{}, model dimension is {n}",
            p_hat.nrows(),
            p_hat.ncols()
        )));
    }
    let blocks = form_blocks(model, sector);
    let a_nu = shifted_drift(model, nu);

    let mut top = a_nu.transpose() * p_hat + p_hat * &a_nu + &blocks.f1;
    top += model.mass.entries() * delta_prime;
    let edge = p_hat * &model.b + &blocks.f2;

    let mut block = DMatrix::zeros(n + 1, n + 1);
    block.view_mut((0, 0), (n, n)).copy_from(&top);
    for i in 0..n {
        block[(i, n)] = edge[i];
        block[(n, i)] = edge[i];
    }
    block[(n, n)] = blocks.f3 + delta_prime;
    let block = (&block + block.transpose()) * 0.5;

    let eig = block.symmetric_eigen();
    Ok(eig.eigenvalues.max())
}

/// Matrix sign function by the scaled Newton iteration
/// `Z <- (Z / c + c Z^{-1}) / 2`. The determinantal scale
/// `c = |det Z|^{1/dim}` is computed in the log domain off the LU factors,
/// which keeps it finite for the 100+ dimensional Hamiltonians of the delay
/// problem. Failure to converge is the numerical signature of eigenvalues on
/// the imaginary axis.
fn matrix_sign(h: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize), KypError> {
    let dim = h.nrows();
    let mut z = h.clone();
    for iter in 0..SIGN_MAX_ITER {
        let lu = z.clone().lu();
        let mut log_det = 0.0f64;
        let u = lu.u();
        for i in 0..dim {
            let d: f64 = u[(i, i)].abs();
            if d == 0.0 || !d.is_finite() {
                return Err(KypError::Numerical(
                    "singular iterate in matrix sign function".into(),
                ));
            }
            log_det += d.ln();
        }
        let z_inv = lu.try_inverse().ok_or_else(|| {
            KypError::Numerical("singular iterate in matrix sign function".into())
        })?;
        let c = (log_det / dim as f64).exp();
        let c = if c.is_finite() && (1e-6..=1e6).contains(&c) {
            c
        } else {
            1.0
        };
        let next = (&z / c + z_inv * c) * 0.5;
        let rel = (&next - &z).norm() / z.norm().max(f64::MIN_POSITIVE);
        z = next;
        if rel <= SIGN_REL_TOL {
            // One unscaled step to let quadratic convergence finish the job.
            let z_inv = z.clone().lu().try_inverse().ok_or_else(|| {
                KypError::Numerical("singular iterate in matrix sign function".into())
            })?;
            z = (&z + z_inv) * 0.5;
            // Scaled by |Z|^2 because the residual of the final product is
            // itself O(eps |Z|^2); an iterate that stalled short of a true
            // sign matrix misses this gate by many orders of magnitude.
            let involution = (&z * &z - DMatrix::<f64>::identity(dim, dim)).norm();
            if involution > 1e-6 * (1.0 + z.norm_squared()) {
                return Err(KypError::Numerical(format!(
                    "sign iterate is not an involution (residual {involution:.3e})"
                )));
            }
            return Ok((z, iter + 1));
        }
    }
    Err(KypError::Numerical(
        "matrix sign iteration did not converge".into(),
    ))
}

/// Stabilizing Riccati solution `Ph` at a fixed margin `delta`, via the
/// stable invariant subspace of the Hamiltonian
/// `H = [[At, S], [-Q, -At^T]]` with
/// `At = A_nu + B f2^T / r`, `S = B B^T / r`, `Q = delta M + F1 + f2 f2^T / r`,
/// `r = -(f3 + delta)`.
///
/// As `delta -> 0` this converges to the extremal solution on the boundary
/// of the feasible set; [`solve_kyp`] deliberately stays at the largest
/// workable `delta` instead, which places `Ph` in the interior.
pub fn riccati_stabilizing(
    model: &LinearModel,
    nu: f64,
    sector: &SectorBound,
    delta: f64,
) -> Result<(DMatrix<f64>, usize), KypError> {
    let n = model.dim();
    let blocks = form_blocks(model, sector);
    let r = -(blocks.f3 + delta);
    if !(r > 0.0) {
        return Err(KypError::Numerical(format!(
            "instrument weight r = {r} is not positive at delta = {delta}"
        )));
    }
    let a_nu = shifted_drift(model, nu);
    let at = &a_nu + &model.b * blocks.f2.transpose() / r;
    let s = &model.b * model.b.transpose() / r;
    let q = model.mass.entries() * delta + &blocks.f1 + &blocks.f2 * blocks.f2.transpose() / r;

    // Symplectic balancing diag(I, theta I): large sector gains push |Q| and
    // |S| many orders of magnitude apart, and the similarity keeps the sign
    // iteration working on blocks of comparable size. It rescales the
    // subspace as [X; Y/theta], so Ph picks up a factor theta at the end.
    let theta = {
        let qn = q.norm();
        let sn = s.norm();
        if qn > 0.0 && sn > 0.0 {
            (qn / sn).sqrt()
        } else {
            1.0
        }
    };

    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&at);
    h.view_mut((0, n), (n, n)).copy_from(&(&s * theta));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&q / theta));
    h.view_mut((n, n), (n, n)).copy_from(&(-at.transpose()));

    let (sign, iterations) = matrix_sign(&h)?;
    let projector = (DMatrix::<f64>::identity(2 * n, 2 * n) - sign) * 0.5;
    let rank_proxy = projector.trace();
    if (rank_proxy - n as f64).abs() > 0.1 {
        return Err(KypError::Numerical(format!(
            "stable subspace has dimension {rank_proxy:.2}, expected {n}"
        )));
    }

    // Rank-revealing basis of the projector range; the pivoted factorization
    // keeps the basis well conditioned even though the projector itself is
    // rank deficient by construction.
    let qr = projector.col_piv_qr();
    let q_full = qr.q();
    let basis = q_full.columns(0, n).into_owned();
    let x = basis.rows(0, n).into_owned();
    let y = basis.rows(n, n).into_owned();

    let p_hat_t = x
        .transpose()
        .lu()
        .solve(&y.transpose())
        .ok_or_else(|| KypError::Numerical("stable subspace has singular top block".into()))?;
    let p_hat = p_hat_t.transpose() * theta;

    let scale = p_hat.amax().max(f64::MIN_POSITIVE);
    let asym = (&p_hat - p_hat.transpose()).amax() / scale;
    if asym > 1e-4 {
        return Err(KypError::Numerical(format!(
            "stable subspace is not Lagrangian (relative asymmetry {asym:.3e})"
        )));
    }
    Ok(((&p_hat + p_hat.transpose()) * 0.5, iterations))
}

/// Output of [`solve_kyp`]: the certificate plus the raw synthesis data that
/// the reports print.
#[derive(Debug, Clone)]
pub struct KypSolution {
    pub certificate: QuadraticCertificate,
    /// `Ph = M P`, the symmetric matrix the Riccati equation is written in.
    pub p_hat: DMatrix<f64>,
    /// Margin the Riccati step was solved at (after bisection).
    pub delta_solve: f64,
    /// Most positive eigenvalue of the constraint block at `delta' = 0`;
    /// strictly negative for a feasible certificate.
    pub margin: f64,
    pub sign_iterations: usize,
}

/// Solve the constrained inequality for the stabilizing `P`.
///
/// The margin is seeded at `1e-2 * |A_nu|` and halved until the Hamiltonian
/// splits and the a posteriori constraint-block margin is strictly negative;
/// below [`DELTA_FLOOR`] the problem is declared infeasible. The certificate
/// carries `delta = -margin / max(lambda_max(M), 1)`, which is the margin in
/// the `-delta (|u|_M^2 + xi^2)` normalization that the block eigenvalue
/// bound actually proves.
pub fn solve_kyp(
    model: &LinearModel,
    nu: f64,
    sector: SectorBound,
) -> Result<KypSolution, KypError> {
    solve_kyp_seeded(model, nu, sector, None)
}

/// [`solve_kyp`] with an explicit starting margin for the bisection, for
/// callers that know the scale of their problem better than `|A_nu|` does.
pub fn solve_kyp_seeded(
    model: &LinearModel,
    nu: f64,
    sector: SectorBound,
    delta_seed: Option<f64>,
) -> Result<KypSolution, KypError> {
    sector.validate()?;
    if !nu.is_finite() {
        return Err(KypError::Numerical(format!("nu = {nu} is not finite")));
    }
    let a_nu = shifted_drift(model, nu);
    let seed = match delta_seed {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => {
            return Err(KypError::Numerical(format!(
                "delta seed {s} must be positive and finite"
            )))
        }
        None => 1e-2 * a_nu.norm(),
    };
    if !(seed > 0.0) {
        return Err(KypError::Numerical("drift matrix has zero norm".into()));
    }

    let mut delta = seed;
    let mut best_margin = f64::INFINITY;
    let mut any_split = false;
    while delta >= DELTA_FLOOR {
        match riccati_stabilizing(model, nu, &sector, delta) {
            Ok((p_hat, sign_iterations)) => {
                any_split = true;
                let margin = kyp_margin(model, nu, &sector, &p_hat, 0.0)?;
                if margin < 0.0 {
                    return finish_solution(model, nu, &sector, p_hat, delta, margin, sign_iterations);
                }
                best_margin = best_margin.min(margin);
            }
            Err(KypError::Numerical(_)) => {}
            Err(other) => return Err(other),
        }
        delta *= 0.5;
    }
    if any_split {
        Err(KypError::Infeasible { best_margin })
    } else {
        Err(KypError::HamiltonianImaginaryAxis {
            delta_floor: DELTA_FLOOR,
        })
    }
}

fn finish_solution(
    model: &LinearModel,
    nu: f64,
    sector: &SectorBound,
    p_hat: DMatrix<f64>,
    delta_solve: f64,
    margin: f64,
    sign_iterations: usize,
) -> Result<KypSolution, KypError> {
    let p = model
        .mass
        .solve(&p_hat)
        .ok_or_else(|| KypError::Numerical("mass matrix solve failed".into()))?;
    // P = M^{-1} Ph is self-adjoint in the M inner product because Ph is
    // symmetric; the eigensolver symmetrizes M P internally, shedding the
    // solve rounding.
    let eig = generalized_eigen(&p, &model.mass)?;
    let inertia = inertia_of_eigenvalues(&eig.eigenvalues, None);
    let neg_basis = eig.eigenvectors.columns(0, inertia.n_neg).into_owned();

    let certified_delta = -margin / model.mass.max_eigenvalue().max(1.0);
    Ok(KypSolution {
        certificate: QuadraticCertificate {
            p,
            nu,
            delta: certified_delta,
            mu0: sector.slope_cap(),
            inertia,
            neg_basis,
        },
        p_hat,
        delta_solve,
        margin,
        sign_iterations,
    })
}

/// Spectral audit of a certificate against its model: `P` must be
/// nondegenerate and its negative dimension must equal the number of
/// eigenvalues of `A + nu I` in the open right half plane (the shifted
/// dichotomy dimension).
#[derive(Debug, Clone, Copy)]
pub struct InertiaAudit {
    pub inertia: Inertia,
    pub unstable_dim: usize,
}

impl InertiaAudit {
    pub fn consistent(&self) -> bool {
        self.inertia.n_zero == 0 && self.inertia.n_neg == self.unstable_dim
    }
}

pub fn audit_inertia(
    model: &LinearModel,
    cert: &QuadraticCertificate,
) -> Result<InertiaAudit, KypError> {
    if cert.dim() != model.dim() {
        return Err(KypError::Numerical(format!(
            "certificate dim {} does not match model dim {}",
            cert.dim(),
            model.dim()
        )));
    }
    let a_nu = shifted_drift(model, cert.nu);
    let spectrum = a_nu.complex_eigenvalues();
    let unstable_dim = spectrum.iter().filter(|z| z.re > 0.0).count();
    let inertia = crate::operator::inertia_of(&cert.p, &model.mass, None)?;
    Ok(InertiaAudit {
        inertia,
        unstable_dim,
    })
}

/// Left side of the constrained inequality at a concrete pair `(u, xi)`:
/// `2 (A_nu u + B xi, P u)_M + F(u, xi)`. Used by the substitution tests and
/// by the falsification checks in the reduction reports.
pub fn constraint_value(
    model: &LinearModel,
    cert: &QuadraticCertificate,
    sector: &SectorBound,
    u: &DVector<f64>,
    xi: f64,
) -> f64 {
    let a_nu = shifted_drift(model, cert.nu);
    let flow = &a_nu * u + &model.b * xi;
    let pu = &cert.p * u;
    let blocks = form_blocks(model, sector);
    let f = u.dot(&(&blocks.f1 * u)) + 2.0 * xi * blocks.f2.dot(u) + blocks.f3 * xi * xi;
    2.0 * model.mass.inner(&flow, &pu) + f
}
