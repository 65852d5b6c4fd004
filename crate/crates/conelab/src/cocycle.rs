//! Time integration of the two nonautonomous model problems.
//!
//! The integrators are the reference dynamics of the laboratory: they do not
//! integrate the truncation ODE `u' = A u + ...`, they integrate the actual
//! model equations and *resample* into truncation coordinates afterwards.
//! This keeps the trajectories independent of the certificate discretization,
//! so a squeezing check against the certified operator is a genuine
//! cross-validation and not a tautology.
//!
//! Delay problem: method of steps with classical RK4 on
//! `x'(t) = -lambda x(t) + b f(t, v(t)) + g(t)`,
//! `v(t) = int_{-tau}^0 rho(s) x(t+s) ds`. The history is a buffer of past
//! values at the integration spacing, read by linear interpolation, and the
//! observation integral is a trapezoid rule at that same resolution. During a
//! stage at `t + c h` the sliver of history newer than the step start is not
//! known yet; it is filled linearly between the step start and the stage
//! candidate. Interpolation, quadrature and sliver fill are all second order,
//! so the delay integrator is a second-order method dressed in RK4 stages; the
//! convergence test below pins the observed order near two, not four.
//!
//! Parabolic problem: the cosine-mode system
//! `u_k' = lambda_k u_k + B_k f(t, v(t)) + g_k(t)` is stiff
//! (`lambda_k ~ -alpha pi^2 k^2`), so steps use the exponential trapezoid
//! rule: the linear part is propagated by `exp(lambda_k h)` exactly and the
//! nonlinear input enters through the phi functions with one
//! predictor-corrector pass. The scheme is exact on the free equation for any
//! step size and second order in the coupled one.
//!
//! Both integrators advance in place, so iterating a period map means calling
//! [`Cocycle::advance`] repeatedly: continuation is exact, with no restart
//! error. Resetting from truncation coordinates is available for the fibre
//! reconstruction sweeps, but for the delay problem it is lossy (the history
//! between grid nodes is filled linearly) and documented as such.

use std::collections::VecDeque;

use nalgebra::DVector;
use thiserror::Error;

use crate::model::{DelayParams, LinearModel, ModelSpec};
use crate::tables::{KernelTable, PeriodicFn};

#[derive(Debug, Error)]
pub enum CocycleError {
    #[error("invalid integrator setup: {0}")]
    Invalid(String),
    #[error(
        "step at t = {t:.6} failed the sanity comparison (embedded error \
         {err_estimate:.3e} > {tol:.3e}); the step size does not resolve the dynamics"
    )]
    StepTooLarge { t: f64, err_estimate: f64, tol: f64 },
    #[error("state stopped being finite at t = {t:.6}")]
    NonFiniteState { t: f64 },
}

/// Scalar nonlinearity `f(t, v)`. All variants are nondecreasing in `v` with
/// bounded slope, which is what the sector form `F(u, xi)` certifies.
#[derive(Debug, Clone)]
pub enum Nonlinearity {
    Zero,
    /// `b1(t) / (1 + exp(-v)) + b2(t)`. Slope in `[0, max b1 / 4]` when
    /// `b1 >= 0`.
    Sigmoid { b1: PeriodicFn, b2: PeriodicFn },
    /// `gain * tanh(v)`, slope in `(0, gain]`.
    Saturating { gain: f64 },
    /// Piecewise linear `f(v)` given by a node table; slope bounds are read
    /// off the segments exactly.
    Table(KernelTable),
}

impl Nonlinearity {
    pub fn eval(&self, t: f64, v: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Sigmoid { b1, b2 } => {
                let vc = v.clamp(-700.0, 700.0);
                b1.eval(t) / (1.0 + (-vc).exp()) + b2.eval(t)
            }
            Nonlinearity::Saturating { gain } => gain * v.tanh(),
            Nonlinearity::Table(table) => table.eval(v),
        }
    }

    /// Largest slope in `v`, the `mu0` this nonlinearity needs certified.
    pub fn slope_cap(&self) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Sigmoid { b1, .. } => b1.max_abs() / 4.0,
            Nonlinearity::Saturating { gain } => gain.max(0.0),
            Nonlinearity::Table(table) => table
                .segments()
                .map(|((x0, v0), (x1, v1))| (v1 - v0) / (x1 - x0))
                .fold(0.0, f64::max),
        }
    }

    /// Smallest slope in `v`; negative means the sector `[0, mu0]` is violated.
    pub fn min_slope(&self) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Sigmoid { b1, .. } => (b1.min_value() / 4.0).min(0.0),
            Nonlinearity::Saturating { gain } => {
                if *gain >= 0.0 {
                    0.0
                } else {
                    *gain
                }
            }
            Nonlinearity::Table(table) => table
                .segments()
                .map(|((x0, v0), (x1, v1))| (v1 - v0) / (x1 - x0))
                .fold(0.0, f64::min),
        }
    }

    pub fn validate_sector(&self) -> Result<(), CocycleError> {
        if self.min_slope() < -1e-12 {
            return Err(CocycleError::Invalid(format!(
                "nonlinearity has slope down to {:.3e}; the sector [0, mu0] requires \
                 a nondecreasing f",
                self.min_slope()
            )));
        }
        Ok(())
    }
}

/// External periodic forcing.
#[derive(Debug, Clone)]
pub enum Forcing {
    None,
    /// Delay problem: additive term on `x'`. Parabolic problem: spatially
    /// uniform load, which excites mode 0 only.
    Scalar(PeriodicFn),
    /// Parabolic problem: per-mode coefficients; missing trailing modes are
    /// unforced.
    Modal(Vec<PeriodicFn>),
}

impl Forcing {
    fn scalar_at(&self, t: f64) -> f64 {
        match self {
            Forcing::None => 0.0,
            Forcing::Scalar(g) => g.eval(t),
            Forcing::Modal(_) => 0.0,
        }
    }

    fn modal_at(&self, t: f64, k: usize) -> f64 {
        match self {
            Forcing::None => 0.0,
            Forcing::Scalar(g) => {
                if k == 0 {
                    g.eval(t)
                } else {
                    0.0
                }
            }
            Forcing::Modal(list) => list.get(k).map_or(0.0, |g| g.eval(t)),
        }
    }
}

/// Uniformly sampled trajectory in truncation coordinates. `states[k]` is the
/// state at `t0 + k dt` and `observed[k] = C u` is the scalar observable the
/// nonlinearity sees through the truncation functional.
#[derive(Debug, Clone)]
pub struct TrajectoryGrid {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<DVector<f64>>,
    pub observed: Vec<f64>,
}

impl TrajectoryGrid {
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn last_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory grid is never empty")
    }

    pub fn last_time(&self) -> f64 {
        self.time(self.states.len() - 1)
    }

    /// Grid index of an absolute time, if it lies on the grid.
    pub fn index_of_time(&self, t: f64) -> Option<usize> {
        let k = ((t - self.t0) / self.dt).round();
        if k < 0.0 || k >= self.states.len() as f64 {
            return None;
        }
        let k = k as usize;
        if (self.time(k) - t).abs() <= 1e-9 * t.abs().max(1.0) {
            Some(k)
        } else {
            None
        }
    }
}

/// Number of integration steps per period, requiring `dt` to divide `sigma`
/// exactly up to rounding. Period maps iterate whole numbers of steps, so a
/// non-divisor `dt` would silently sample a different map.
pub fn steps_per_period(dt: f64, sigma: f64) -> Result<usize, CocycleError> {
    if !(dt > 0.0) || !(sigma > 0.0) {
        return Err(CocycleError::Invalid(format!(
            "need positive dt and sigma, got dt = {dt}, sigma = {sigma}"
        )));
    }
    let k = (sigma / dt).round();
    if k < 1.0 || (k * dt - sigma).abs() > 1e-12 * sigma.max(1.0) {
        return Err(CocycleError::Invalid(format!(
            "dt = {dt} does not divide the period sigma = {sigma}"
        )));
    }
    Ok(k as usize)
}

/// Method-of-steps integrator for the delay problem.
#[derive(Debug)]
pub struct DelayIntegrator {
    params: DelayParams,
    nonlinearity: Nonlinearity,
    forcing: Forcing,
    c: DVector<f64>,
    dt: f64,
    /// Offsets and combined weights `q * rho(s_k) * trapezoid` of the
    /// observation quadrature, fixed once per integrator.
    quad_offsets: Vec<f64>,
    quad_weights: Vec<f64>,
    /// Truncation grid offsets `s_i`, for resampling.
    grid_offsets: Vec<f64>,
    buffer_len: usize,
    t0: f64,
    steps: u64,
    x: f64,
    /// `past[j] = x(t - j dt)`, front is the current time.
    past: VecDeque<f64>,
}

impl DelayIntegrator {
    pub fn new(
        model: &LinearModel,
        nonlinearity: Nonlinearity,
        forcing: Forcing,
        dt: f64,
    ) -> Result<Self, CocycleError> {
        let params = match &model.spec {
            ModelSpec::Delay(p) => p.clone(),
            other => {
                return Err(CocycleError::Invalid(format!(
                    "delay integrator needs a delay model, got {other:?}"
                )))
            }
        };
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(CocycleError::Invalid(format!("dt = {dt} must be positive")));
        }
        if dt > params.tau / 4.0 {
            return Err(CocycleError::Invalid(format!(
                "dt = {dt} does not resolve the delay window tau = {}",
                params.tau
            )));
        }
        if matches!(forcing, Forcing::Modal(_)) {
            return Err(CocycleError::Invalid(
                "delay forcing is a scalar function of time, not modal".into(),
            ));
        }

        let m = (params.tau / dt).round().max(4.0) as usize;
        let q = params.tau / m as f64;
        let mut quad_offsets = Vec::with_capacity(m + 1);
        let mut quad_weights = Vec::with_capacity(m + 1);
        for k in 0..=m {
            let s = -params.tau + k as f64 * q;
            let trap = if k == 0 || k == m { 0.5 } else { 1.0 };
            quad_offsets.push(s);
            quad_weights.push(q * trap * params.rho.eval(s));
        }

        let grid_offsets = params.grid_nodes();
        let buffer_len = (params.tau / dt).ceil() as usize + 3;
        let dim = model.dim();

        let mut this = Self {
            params,
            nonlinearity,
            forcing,
            c: model.c.clone(),
            dt,
            quad_offsets,
            quad_weights,
            grid_offsets,
            buffer_len,
            t0: 0.0,
            steps: 0,
            x: 0.0,
            past: VecDeque::new(),
        };
        this.reset(0.0, &DVector::zeros(dim))?;
        Ok(this)
    }

    pub fn time(&self) -> f64 {
        self.t0 + self.steps as f64 * self.dt
    }

    pub fn dim(&self) -> usize {
        self.grid_offsets.len() + 1
    }

    /// Install the history encoded by truncation coordinates: node values at
    /// the `s_i`, linear in between, constant left of `s_1` (matching the
    /// quadrature convention that gives the first node the leftmost cell's
    /// mass). `u0[0]` is the running value; the history value *at* `s = 0` is
    /// `u0[n]`, so a mismatch between the two is an admissible initial jump.
    pub fn reset(&mut self, t0: f64, u0: &DVector<f64>) -> Result<(), CocycleError> {
        if u0.len() != self.dim() {
            return Err(CocycleError::Invalid(format!(
                "state has length {}, delay truncation needs {}",
                u0.len(),
                self.dim()
            )));
        }
        let n = self.grid_offsets.len();
        let delta = self.params.grid_spacing();
        let s1 = self.grid_offsets[0];
        let history = |s: f64| -> f64 {
            if s >= 0.0 {
                return u0[n];
            }
            if s <= s1 {
                return u0[1];
            }
            let pos = (s - s1) / delta;
            let cell = (pos.floor() as usize).min(n - 2);
            let frac = pos - cell as f64;
            u0[1 + cell] * (1.0 - frac) + u0[2 + cell] * frac
        };
        self.past.clear();
        for j in 0..self.buffer_len {
            self.past.push_back(history(-(j as f64) * self.dt));
        }
        self.x = u0[0];
        self.t0 = t0;
        self.steps = 0;
        Ok(())
    }

    /// Past value `x(t - age)` by linear interpolation in the buffer.
    fn x_before(&self, age: f64) -> f64 {
        let pos = age / self.dt;
        let j = (pos.floor() as usize).min(self.past.len() - 2);
        let frac = pos - j as f64;
        self.past[j] * (1.0 - frac) + self.past[j + 1] * frac
    }

    /// Observation integral at a stage time `ts >= t` with stage candidate
    /// `xs`; history newer than `t` is filled linearly between `(t, x)` and
    /// `(ts, xs)`.
    fn upsilon(&self, ts: f64, xs: f64) -> f64 {
        let t = self.time();
        let mut total = 0.0;
        for (s, w) in self.quad_offsets.iter().zip(&self.quad_weights) {
            let theta = ts + s;
            let value = if theta <= t {
                self.x_before(t - theta)
            } else {
                let frac = (theta - t) / (ts - t);
                self.x + frac * (xs - self.x)
            };
            total += w * value;
        }
        total
    }

    fn rhs(&self, ts: f64, xs: f64) -> f64 {
        let v = self.upsilon(ts, xs);
        -self.params.lambda * xs
            + self.params.b * self.nonlinearity.eval(ts, v)
            + self.forcing.scalar_at(ts)
    }

    fn step(&mut self) -> Result<(), CocycleError> {
        let t = self.time();
        let h = self.dt;
        let x0 = self.x;

        let k1 = self.rhs(t, x0);
        let k2 = self.rhs(t + 0.5 * h, x0 + 0.5 * h * k1);
        let k3 = self.rhs(t + 0.5 * h, x0 + 0.5 * h * k2);
        let k4 = self.rhs(t + h, x0 + h * k3);

        let x_rk4 = x0 + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let x_rk2 = x0 + h * k2;

        // Sanity comparison against the embedded midpoint value: this is a
        // blow-up guard, not error control.
        let err = (x_rk4 - x_rk2).abs();
        let tol = 0.05 * (1.0 + x0.abs());
        if err > tol {
            return Err(CocycleError::StepTooLarge {
                t,
                err_estimate: err,
                tol,
            });
        }
        if !x_rk4.is_finite() {
            return Err(CocycleError::NonFiniteState { t });
        }

        self.steps += 1;
        self.x = x_rk4;
        self.past.push_front(x_rk4);
        self.past.truncate(self.buffer_len);
        Ok(())
    }

    /// Resample the buffer into truncation coordinates `(x, x(t + s_i))`.
    pub fn coordinates(&self) -> DVector<f64> {
        let n = self.grid_offsets.len();
        let mut u = DVector::zeros(n + 1);
        u[0] = self.x;
        for (i, s) in self.grid_offsets.iter().enumerate() {
            u[1 + i] = self.x_before(-s);
        }
        u
    }
}

/// Exponential trapezoid integrator for the parabolic problem.
#[derive(Debug)]
pub struct ParabolicIntegrator {
    nonlinearity: Nonlinearity,
    forcing: Forcing,
    b: DVector<f64>,
    c: DVector<f64>,
    dt: f64,
    exp_h: Vec<f64>,
    phi1_h: Vec<f64>,
    phi2_h: Vec<f64>,
    t0: f64,
    steps: u64,
    u: DVector<f64>,
}

/// `phi1(z) = (e^z - 1)/z` with the series branch for small `|z|`.
fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0
    } else {
        (z.exp() - 1.0) / z
    }
}

/// `phi2(z) = (e^z - 1 - z)/z^2` with the series branch for small `|z|`.
fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0
    } else {
        (z.exp() - 1.0 - z) / (z * z)
    }
}

impl ParabolicIntegrator {
    pub fn new(
        model: &LinearModel,
        nonlinearity: Nonlinearity,
        forcing: Forcing,
        dt: f64,
    ) -> Result<Self, CocycleError> {
        let params = match &model.spec {
            ModelSpec::Parabolic(p) => p.clone(),
            other => {
                return Err(CocycleError::Invalid(format!(
                    "parabolic integrator needs a parabolic model, got {other:?}"
                )))
            }
        };
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(CocycleError::Invalid(format!("dt = {dt} must be positive")));
        }
        // The exponential part is exact, so the step only has to resolve the
        // nonlinear coupling rate mu0 |C| |B|.
        let cap = nonlinearity.slope_cap() * model.c.norm() * model.b.norm();
        if cap > 0.0 && dt > 0.1 / cap {
            return Err(CocycleError::Invalid(format!(
                "dt = {dt} exceeds the coupling resolution bound {:.3e}",
                0.1 / cap
            )));
        }

        let n = model.dim();
        let mut exp_h = Vec::with_capacity(n);
        let mut phi1_h = Vec::with_capacity(n);
        let mut phi2_h = Vec::with_capacity(n);
        for k in 0..n {
            let z = params.eigenvalue(k) * dt;
            exp_h.push(z.exp());
            phi1_h.push(dt * phi1(z));
            phi2_h.push(dt * phi2(z));
        }

        Ok(Self {
            nonlinearity,
            forcing,
            b: model.b.clone(),
            c: model.c.clone(),
            dt,
            exp_h,
            phi1_h,
            phi2_h,
            t0: 0.0,
            steps: 0,
            u: DVector::zeros(n),
        })
    }

    pub fn time(&self) -> f64 {
        self.t0 + self.steps as f64 * self.dt
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn reset(&mut self, t0: f64, u0: &DVector<f64>) -> Result<(), CocycleError> {
        if u0.len() != self.dim() {
            return Err(CocycleError::Invalid(format!(
                "state has length {}, parabolic truncation needs {}",
                u0.len(),
                self.dim()
            )));
        }
        self.t0 = t0;
        self.steps = 0;
        self.u = u0.clone();
        Ok(())
    }

    fn input(&self, t: f64, v: f64) -> (f64, Vec<f64>) {
        let xi = self.nonlinearity.eval(t, v);
        let g: Vec<f64> = (0..self.dim()).map(|k| self.forcing.modal_at(t, k)).collect();
        (xi, g)
    }

    fn step(&mut self) -> Result<(), CocycleError> {
        let t = self.time();
        let h = self.dt;
        let n = self.dim();

        let v0 = self.c.dot(&self.u);
        let (xi0, g0) = self.input(t, v0);

        let mut predictor = DVector::zeros(n);
        for k in 0..n {
            let r0 = self.b[k] * xi0 + g0[k];
            predictor[k] = self.exp_h[k] * self.u[k] + self.phi1_h[k] * r0;
        }

        let v1 = self.c.dot(&predictor);
        let (xi1, g1) = self.input(t + h, v1);

        let mut next = predictor.clone();
        let mut correction = 0.0f64;
        for k in 0..n {
            let r0 = self.b[k] * xi0 + g0[k];
            let r1 = self.b[k] * xi1 + g1[k];
            let delta = self.phi2_h[k] * (r1 - r0);
            next[k] += delta;
            correction = correction.max(delta.abs());
        }

        let tol = 0.05 * (1.0 + self.u.amax());
        if correction > tol {
            return Err(CocycleError::StepTooLarge {
                t,
                err_estimate: correction,
                tol,
            });
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(CocycleError::NonFiniteState { t });
        }

        self.steps += 1;
        self.u = next;
        Ok(())
    }

    pub fn coordinates(&self) -> DVector<f64> {
        self.u.clone()
    }
}

/// One interface over both integrators, in truncation coordinates. The
/// reduction routines drive everything through this enum, so the delay and
/// parabolic pipelines share all verification code.
#[derive(Debug)]
pub enum Cocycle {
    Delay(DelayIntegrator),
    Parabolic(ParabolicIntegrator),
}

impl Cocycle {
    pub fn new(
        model: &LinearModel,
        nonlinearity: Nonlinearity,
        forcing: Forcing,
        dt: f64,
    ) -> Result<Self, CocycleError> {
        match &model.spec {
            ModelSpec::Delay(_) => Ok(Cocycle::Delay(DelayIntegrator::new(
                model,
                nonlinearity,
                forcing,
                dt,
            )?)),
            ModelSpec::Parabolic(_) => Ok(Cocycle::Parabolic(ParabolicIntegrator::new(
                model,
                nonlinearity,
                forcing,
                dt,
            )?)),
            ModelSpec::Scalar { .. } => Err(CocycleError::Invalid(
                "the scalar diagnostic model is not a simulation target".into(),
            )),
        }
    }

    pub fn reset(&mut self, t0: f64, u0: &DVector<f64>) -> Result<(), CocycleError> {
        match self {
            Cocycle::Delay(i) => i.reset(t0, u0),
            Cocycle::Parabolic(i) => i.reset(t0, u0),
        }
    }

    pub fn time(&self) -> f64 {
        match self {
            Cocycle::Delay(i) => i.time(),
            Cocycle::Parabolic(i) => i.time(),
        }
    }

    pub fn dt(&self) -> f64 {
        match self {
            Cocycle::Delay(i) => i.dt,
            Cocycle::Parabolic(i) => i.dt,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Cocycle::Delay(i) => i.dim(),
            Cocycle::Parabolic(i) => i.dim(),
        }
    }

    pub fn state(&self) -> DVector<f64> {
        match self {
            Cocycle::Delay(i) => i.coordinates(),
            Cocycle::Parabolic(i) => i.coordinates(),
        }
    }

    pub fn observe(&self) -> f64 {
        match self {
            Cocycle::Delay(i) => i.c.dot(&i.coordinates()),
            Cocycle::Parabolic(i) => i.c.dot(&i.u),
        }
    }

    fn step(&mut self) -> Result<(), CocycleError> {
        match self {
            Cocycle::Delay(i) => i.step(),
            Cocycle::Parabolic(i) => i.step(),
        }
    }

    /// Integrate `n_steps` further and return the traversed grid, including
    /// the starting state. The integrator keeps its full internal state, so a
    /// subsequent call continues exactly.
    pub fn advance(&mut self, n_steps: usize) -> Result<TrajectoryGrid, CocycleError> {
        let t0 = self.time();
        let mut states = Vec::with_capacity(n_steps + 1);
        let mut observed = Vec::with_capacity(n_steps + 1);
        states.push(self.state());
        observed.push(self.observe());
        for _ in 0..n_steps {
            self.step()?;
            states.push(self.state());
            observed.push(self.observe());
        }
        Ok(TrajectoryGrid {
            t0,
            dt: self.dt(),
            states,
            observed,
        })
    }
}
