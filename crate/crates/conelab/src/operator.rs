//! Self-adjoint operator calculus in a weighted inner product.
//!
//! All state spaces in this crate carry a Gram matrix `M` (mass matrix), and
//! "self-adjoint" always means `M P` symmetric. The generalized eigenproblem
//! `S v = lambda v` is reduced to a standard symmetric one through the
//! Cholesky factor `M = L L^T`: with `w = L^T v` the problem becomes
//! `L^{-1} (M S) L^{-T} w = lambda w`, and eigenvectors recovered as
//! `v = L^{-T} w` come out M-orthonormal.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("operator is not self-adjoint in the M inner product (asymmetry {0:.3e})")]
    NonSymmetric(f64),
    #[error("mass matrix is not symmetric positive definite")]
    SingularMass,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("certificate has no negative subspace to project onto")]
    NoNegativeSpace,
}

/// Symmetric positive definite Gram matrix with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct MassMatrix {
    entries: DMatrix<f64>,
    /// Lower triangular factor, `M = L L^T`.
    l: DMatrix<f64>,
}

impl MassMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self, OperatorError> {
        if !entries.is_square() {
            return Err(OperatorError::DimensionMismatch(format!(
                "mass matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let scale = entries.amax();
        if !scale.is_finite() || scale == 0.0 {
            return Err(OperatorError::SingularMass);
        }
        let asym = (&entries - entries.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(OperatorError::SingularMass);
        }
        let chol = nalgebra::Cholesky::new(entries.clone()).ok_or(OperatorError::SingularMass)?;
        Ok(Self {
            entries,
            l: chol.l(),
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: DMatrix::identity(n, n),
            l: DMatrix::identity(n, n),
        }
    }

    pub fn diagonal(weights: &[f64]) -> Result<Self, OperatorError> {
        if weights.iter().any(|w| *w <= 0.0 || !w.is_finite()) {
            return Err(OperatorError::SingularMass);
        }
        let n = weights.len();
        let mut m = DMatrix::zeros(n, n);
        let mut l = DMatrix::zeros(n, n);
        for (i, w) in weights.iter().enumerate() {
            m[(i, i)] = *w;
            l[(i, i)] = w.sqrt();
        }
        Ok(Self { entries: m, l })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// M inner product `(u, v)_M = u^T M v`.
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (self.entries.clone() * v).dot(u)
    }

    pub fn norm(&self, u: &DVector<f64>) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    fn solve_l(&self, x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        self.l.clone().solve_lower_triangular(x)
    }

    fn solve_lt(&self, x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        self.l.transpose().solve_upper_triangular(x)
    }

    /// `M^{-1} X` through the Cholesky factors.
    pub fn solve(&self, x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        self.solve_l(x).and_then(|y| self.solve_lt(&y))
    }

    /// Largest eigenvalue of M (norm-equivalence constant between the
    /// Euclidean and the M norm), used to convert margins between norms.
    pub fn max_eigenvalue(&self) -> f64 {
        let sym = nalgebra::SymmetricEigen::new(self.entries.clone());
        sym.eigenvalues.amax()
    }
}

/// Signature of a self-adjoint operator: counts of negative, null and
/// positive eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub n_neg: usize,
    pub n_zero: usize,
    pub n_pos: usize,
}

/// Eigendecomposition of an M-self-adjoint operator, eigenvalues ascending,
/// eigenvectors M-orthonormal (columns).
#[derive(Debug, Clone)]
pub struct GeneralizedEigen {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

/// Relative asymmetry of `M S`; the solver requires this below 1e-12.
fn ms_asymmetry(ms: &DMatrix<f64>) -> f64 {
    let scale = ms.amax().max(f64::MIN_POSITIVE);
    (ms - ms.transpose()).amax() / scale
}

/// Solve the generalized symmetric eigenproblem `S v = lambda v` with `S`
/// self-adjoint in the M inner product.
pub fn generalized_eigen(
    s: &DMatrix<f64>,
    m: &MassMatrix,
) -> Result<GeneralizedEigen, OperatorError> {
    let n = m.dim();
    if s.nrows() != n || s.ncols() != n {
        return Err(OperatorError::DimensionMismatch(format!(
            "operator is {}x{}, mass matrix is {n}x{n}",
            s.nrows(),
            s.ncols()
        )));
    }
    let ms = m.entries() * s;
    let asym = ms_asymmetry(&ms);
    if asym > 1e-12 {
        return Err(OperatorError::NonSymmetric(asym));
    }
    // Symmetrize exactly before the reduction so rounding in M*S cannot leak.
    let ms = (&ms + ms.transpose()) * 0.5;
    // T = L^{-1} (M S) L^{-T}; the second factor is applied as a lower solve
    // on the transpose.
    let x = m.solve_l(&ms).ok_or(OperatorError::SingularMass)?;
    let t = m
        .solve_l(&x.transpose())
        .ok_or(OperatorError::SingularMass)?
        .transpose();
    let t = (&t + t.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut eigenvalues = DVector::zeros(n);
    let mut w = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues[dst] = eig.eigenvalues[src];
        w.set_column(dst, &eig.eigenvectors.column(src));
    }
    let mut eigenvectors = m.solve_lt(&w).ok_or(OperatorError::SingularMass)?;
    orient_columns(&mut eigenvectors);
    Ok(GeneralizedEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// Deterministic sign convention: in every column the entry of largest
/// magnitude (first such index on ties) is made positive.
fn orient_columns(v: &mut DMatrix<f64>) {
    for j in 0..v.ncols() {
        let col = v.column(j);
        let mut idx = 0;
        let mut best = -1.0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > best {
                best = x.abs();
                idx = i;
            }
        }
        if col[idx] < 0.0 {
            let negated = -v.column(j);
            v.set_column(j, &negated);
        }
    }
}

/// Inertia of an M-self-adjoint operator. `zero_tol = None` uses the default
/// `1e-8 * max |lambda|`.
pub fn inertia_of(
    s: &DMatrix<f64>,
    m: &MassMatrix,
    zero_tol: Option<f64>,
) -> Result<Inertia, OperatorError> {
    let eig = generalized_eigen(s, m)?;
    Ok(inertia_of_eigenvalues(&eig.eigenvalues, zero_tol))
}

pub fn inertia_of_eigenvalues(eigenvalues: &DVector<f64>, zero_tol: Option<f64>) -> Inertia {
    let tol = zero_tol.unwrap_or_else(|| 1e-8 * eigenvalues.amax());
    let mut inertia = Inertia {
        n_neg: 0,
        n_zero: 0,
        n_pos: 0,
    };
    for lambda in eigenvalues.iter() {
        if *lambda < -tol {
            inertia.n_neg += 1;
        } else if *lambda > tol {
            inertia.n_pos += 1;
        } else {
            inertia.n_zero += 1;
        }
    }
    inertia
}

/// Value of the quadratic form `V(u) = (P u, u)_M = u^T M P u`, evaluated
/// through the symmetrized matrix `(M P + (M P)^T) / 2` so that rounding in
/// the product cannot produce an asymmetric form.
pub fn quadratic_form(p: &DMatrix<f64>, m: &MassMatrix, u: &DVector<f64>) -> f64 {
    let mp = m.entries() * p;
    let sym = (&mp + mp.transpose()) * 0.5;
    (sym * u).dot(u)
}

/// Quadratic form certificate produced by the Riccati solve: the operator
/// `P`, its inertia, and an M-orthonormal oriented basis of its negative
/// subspace. `delta` is the certified dissipation margin and `nu` the
/// exponential weight it was certified at.
#[derive(Debug, Clone)]
pub struct QuadraticCertificate {
    pub p: DMatrix<f64>,
    pub nu: f64,
    pub delta: f64,
    pub mu0: f64,
    pub inertia: Inertia,
    /// Columns span the negative subspace of `P`, M-orthonormal, with the
    /// sign convention of [`generalized_eigen`].
    pub neg_basis: DMatrix<f64>,
}

impl QuadraticCertificate {
    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// Number of negative directions (the reduction dimension `j`).
    pub fn j(&self) -> usize {
        self.neg_basis.ncols()
    }

    pub fn form(&self, m: &MassMatrix, u: &DVector<f64>) -> f64 {
        quadratic_form(&self.p, m, u)
    }

    /// Flip the sign of the certificate. Only used by falsification tests:
    /// every check that passes with `P` must fail with `-P`.
    pub fn negated(&self) -> Self {
        Self {
            p: -&self.p,
            nu: self.nu,
            delta: self.delta,
            mu0: self.mu0,
            inertia: Inertia {
                n_neg: self.inertia.n_pos,
                n_zero: self.inertia.n_zero,
                n_pos: self.inertia.n_neg,
            },
            neg_basis: self.neg_basis.clone(),
        }
    }
}

/// Coordinates of `u` against the negative basis in the M inner product.
/// For the model problems the negative subspace is one-dimensional and this
/// is the scalar reduction coordinate.
pub fn project_negative(
    cert: &QuadraticCertificate,
    m: &MassMatrix,
    u: &DVector<f64>,
) -> Result<DVector<f64>, OperatorError> {
    if cert.neg_basis.ncols() == 0 {
        return Err(OperatorError::NoNegativeSpace);
    }
    if u.len() != cert.dim() || m.dim() != cert.dim() {
        return Err(OperatorError::DimensionMismatch(format!(
            "certificate dim {}, state dim {}, mass dim {}",
            cert.dim(),
            u.len(),
            m.dim()
        )));
    }
    let mu = m.entries() * u;
    Ok(cert.neg_basis.transpose() * mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;

    /// Hand oracle: S = [[0,1],[1,0]] has eigenpairs (-1, (1,-1)/sqrt(2))
    /// and (+1, (1,1)/sqrt(2)).
    #[test]
    fn eigen_2x2_hand_computed() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let m = MassMatrix::identity(2);
        let eig = generalized_eigen(&s, &m).unwrap();
        assert_abs_diff_eq!(eig.eigenvalues[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.eigenvalues[1], 1.0, epsilon = 1e-12);
        let r = 0.5_f64.sqrt();
        // Orientation: largest-magnitude entry positive; -1 eigenvector is
        // (r, -r) (first entry ties, first index wins).
        assert_abs_diff_eq!(eig.eigenvectors[(0, 0)], r, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.eigenvectors[(1, 0)], -r, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.eigenvectors[(0, 1)], r, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.eigenvectors[(1, 1)], r, epsilon = 1e-12);
    }

    #[test]
    fn eigen_rejects_nonsymmetric() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        let m = MassMatrix::identity(2);
        match generalized_eigen(&s, &m) {
            Err(OperatorError::NonSymmetric(_)) => {}
            other => panic!("expected NonSymmetric, got {other:?}"),
        }
    }

    #[test]
    fn mass_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            MassMatrix::new(m),
            Err(OperatorError::SingularMass)
        ));
    }

    #[test]
    fn quadratic_form_example() {
        let p = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let m = MassMatrix::identity(2);
        let u = DVector::from_row_slice(&[1.0, 1.0]);
        assert_abs_diff_eq!(quadratic_form(&p, &m, &u), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn project_negative_example() {
        let p = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let m = MassMatrix::identity(2);
        let eig = generalized_eigen(&p, &m).unwrap();
        let cert = QuadraticCertificate {
            p: p.clone(),
            nu: 0.0,
            delta: 1.0,
            mu0: 1.0,
            inertia: inertia_of(&p, &m, None).unwrap(),
            neg_basis: eig.eigenvectors.columns(0, 1).into_owned(),
        };
        let u = DVector::from_row_slice(&[3.0, 7.0]);
        let z = project_negative(&cert, &m, &u).unwrap();
        assert_eq!(z.len(), 1);
        assert_abs_diff_eq!(z[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn project_negative_needs_negative_space() {
        let p = DMatrix::identity(2, 2);
        let m = MassMatrix::identity(2);
        let cert = QuadraticCertificate {
            p: p.clone(),
            nu: 0.0,
            delta: 1.0,
            mu0: 1.0,
            inertia: inertia_of(&p, &m, None).unwrap(),
            neg_basis: DMatrix::zeros(2, 0),
        };
        let u = DVector::from_row_slice(&[1.0, 2.0]);
        assert!(matches!(
            project_negative(&cert, &m, &u),
            Err(OperatorError::NoNegativeSpace)
        ));
    }

    fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let mut m = &a * a.transpose();
        for i in 0..n {
            m[(i, i)] += 0.5 + n as f64 * 0.25;
        }
        m
    }

    /// Random M-self-adjoint operator: S = M^{-1} Q with Q symmetric.
    fn random_self_adjoint(n: usize, m: &MassMatrix, rng: &mut impl Rng) -> DMatrix<f64> {
        let q = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = (&q + q.transpose()) * 0.5;
        m.entries()
            .clone()
            .lu()
            .solve(&q)
            .expect("mass matrix invertible")
    }

    #[test]
    fn residuals_and_m_orthonormality() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for &n in &[3usize, 8, 25] {
            let m = MassMatrix::new(random_spd(n, &mut rng)).unwrap();
            let s = random_self_adjoint(n, &m, &mut rng);
            let eig = generalized_eigen(&s, &m).unwrap();
            for k in 0..n {
                let v = eig.eigenvectors.column(k).into_owned();
                let lambda = eig.eigenvalues[k];
                let resid = &s * &v - &v * lambda;
                assert!(
                    m.norm(&resid) <= 1e-9 * (1.0 + lambda.abs()) * m.norm(&v),
                    "residual too large at n={n}, k={k}"
                );
                for k2 in 0..n {
                    let v2 = eig.eigenvectors.column(k2).into_owned();
                    let expected = if k == k2 { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(m.inner(&v, &v2), expected, epsilon = 1e-8);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Spectral reconstruction: V(u) = sum lambda_i c_i^2 with c the
        /// M-orthonormal eigenbasis coordinates of u.
        #[test]
        fn quadratic_form_reconstructs(seed in 0u64..5000, n in 2usize..12) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = MassMatrix::new(random_spd(n, &mut rng)).unwrap();
            let s = random_self_adjoint(n, &m, &mut rng);
            let eig = generalized_eigen(&s, &m).unwrap();
            let u = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let mut recon = 0.0;
            for k in 0..n {
                let c = m.inner(&eig.eigenvectors.column(k).into_owned(), &u);
                recon += eig.eigenvalues[k] * c * c;
            }
            let direct = quadratic_form(&s, &m, &u);
            let scale = 1.0 + direct.abs().max(recon.abs());
            prop_assert!((direct - recon).abs() <= 1e-8 * scale);
        }

        /// Projection is linear.
        #[test]
        fn projection_linear(seed in 0u64..5000, n in 2usize..10) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = MassMatrix::new(random_spd(n, &mut rng)).unwrap();
            let s = random_self_adjoint(n, &m, &mut rng);
            let eig = generalized_eigen(&s, &m).unwrap();
            let j = eig.eigenvalues.iter().filter(|l| **l < 0.0).count();
            prop_assume!(j > 0);
            let cert = QuadraticCertificate {
                p: s.clone(),
                nu: 0.0,
                delta: 1.0,
                mu0: 1.0,
                inertia: inertia_of_eigenvalues(&eig.eigenvalues, None),
                neg_basis: eig.eigenvectors.columns(0, j).into_owned(),
            };
            let u = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let v = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let a: f64 = rng.gen_range(-3.0..3.0);
            let lhs = project_negative(&cert, &m, &(&u * a + &v)).unwrap();
            let rhs = project_negative(&cert, &m, &u).unwrap() * a
                + project_negative(&cert, &m, &v).unwrap();
            prop_assert!((lhs - rhs).amax() <= 1e-10 * (1.0 + a.abs()));
        }

        /// Inertia is invariant under M-orthogonal change of basis
        /// (T^T M T = M, S' = T^{-1} S T).
        #[test]
        fn inertia_invariant_under_m_orthogonal(seed in 0u64..5000, n in 2usize..9) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mspd = random_spd(n, &mut rng);
            let m = MassMatrix::new(mspd.clone()).unwrap();
            let s = random_self_adjoint(n, &m, &mut rng);
            let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let o = raw.qr().q();
            // T = L^{-T} O L^T is M-orthogonal.
            let l = nalgebra::Cholesky::new(mspd).unwrap().l();
            let t = l
                .transpose()
                .solve_upper_triangular(&(o * l.transpose()))
                .unwrap();
            let s_prime = t.clone().lu().solve(&(&s * &t)).unwrap();
            // Guard: conjugation keeps M-self-adjointness only up to rounding;
            // skip badly conditioned draws.
            let ms = m.entries() * &s_prime;
            prop_assume!(ms_asymmetry(&ms) <= 1e-12);
            let tol = Some(1e-7 * (1.0 + s.amax()));
            let i1 = inertia_of(&s, &m, tol).unwrap();
            let i2 = inertia_of(&s_prime, &m, tol).unwrap();
            prop_assert_eq!(i1, i2);
        }
    }
}
