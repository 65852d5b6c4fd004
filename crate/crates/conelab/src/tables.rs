//! Sampled scalar functions: periodic coefficient tables and integration
//! kernels. Linear interpolation is the definition of these functions, not an
//! approximation of something smoother, so every module that consumes them
//! (quadrature, integrators, transfer functions) sees exactly the same values.

/// Periodic scalar function of time with period `sigma`. Evaluation reduces
/// the argument into `[0, sigma)` first, so `g(t + sigma) = g(t)` holds up to
/// the rounding of the reduction itself.
#[derive(Debug, Clone)]
pub struct PeriodicFn {
    pub sigma: f64,
    pub shape: PeriodicShape,
}

#[derive(Debug, Clone)]
pub enum PeriodicShape {
    Constant(f64),
    /// `amplitude * cos(2 pi harmonic t / sigma + phase)`
    Cosine {
        amplitude: f64,
        harmonic: u32,
        phase: f64,
    },
    /// Values at the uniform nodes `k sigma / len`, interpolated linearly
    /// with wraparound.
    Table(Vec<f64>),
}

impl PeriodicFn {
    pub fn constant(sigma: f64, value: f64) -> Self {
        Self {
            sigma,
            shape: PeriodicShape::Constant(value),
        }
    }

    pub fn cosine(sigma: f64, amplitude: f64, harmonic: u32, phase: f64) -> Self {
        Self {
            sigma,
            shape: PeriodicShape::Cosine {
                amplitude,
                harmonic,
                phase,
            },
        }
    }

    pub fn table(sigma: f64, values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "periodic table needs at least one node");
        Self {
            sigma,
            shape: PeriodicShape::Table(values),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let s = t.rem_euclid(self.sigma);
        match &self.shape {
            PeriodicShape::Constant(c) => *c,
            PeriodicShape::Cosine {
                amplitude,
                harmonic,
                phase,
            } => amplitude * (2.0 * std::f64::consts::PI * *harmonic as f64 * s / self.sigma + phase).cos(),
            PeriodicShape::Table(values) => {
                let n = values.len();
                let x = s / self.sigma * n as f64;
                let k = (x.floor() as usize).min(n - 1);
                let frac = x - k as f64;
                let next = values[(k + 1) % n];
                values[k] * (1.0 - frac) + next * frac
            }
        }
    }

    /// Upper bound for `|g|`, used for scale estimates.
    pub fn max_abs(&self) -> f64 {
        match &self.shape {
            PeriodicShape::Constant(c) => c.abs(),
            PeriodicShape::Cosine { amplitude, .. } => amplitude.abs(),
            PeriodicShape::Table(values) => values.iter().fold(0.0, |a, v| a.max(v.abs())),
        }
    }

    /// Lower bound for `g` itself (not `|g|`); linear interpolation cannot
    /// undershoot the node values, so for tables this is exact.
    pub fn min_value(&self) -> f64 {
        match &self.shape {
            PeriodicShape::Constant(c) => *c,
            PeriodicShape::Cosine { amplitude, .. } => -amplitude.abs(),
            PeriodicShape::Table(values) => values.iter().fold(f64::INFINITY, |a, v| a.min(*v)),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.max_abs() == 0.0
    }
}

/// Piecewise linear kernel on a fixed interval, given by a strictly
/// increasing node table. Outside the nodes the kernel is extended by its
/// endpoint values (only relevant for rounding at the interval ends).
#[derive(Debug, Clone)]
pub struct KernelTable {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl KernelTable {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self, String> {
        if nodes.len() != values.len() {
            return Err(format!(
                "kernel table has {} nodes but {} values",
                nodes.len(),
                values.len()
            ));
        }
        if nodes.len() < 2 {
            return Err("kernel table needs at least two nodes".into());
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err("kernel nodes must be strictly increasing".into());
        }
        if nodes.iter().chain(values.iter()).any(|x| !x.is_finite()) {
            return Err("kernel table contains non-finite entries".into());
        }
        Ok(Self { nodes, values })
    }

    pub fn constant(a: f64, b: f64, value: f64) -> Self {
        Self {
            nodes: vec![a, b],
            values: vec![value, value],
        }
    }

    /// Unit-mass triangular bump of half-width `width` centered at `center`,
    /// sampled on the enclosing interval `[a, b]`. Approximates a point mass
    /// as `width -> 0`.
    pub fn delta_approx(a: f64, b: f64, center: f64, width: f64) -> Self {
        let h = 1.0 / width;
        let mut nodes = vec![a];
        let mut values = vec![0.0];
        for (x, v) in [
            (center - width, 0.0),
            (center, h),
            (center + width, 0.0),
        ] {
            if x > *nodes.last().unwrap() && x < b {
                nodes.push(x);
                values.push(v);
            }
        }
        nodes.push(b);
        values.push(if (b - center).abs() < width {
            h * (1.0 - (b - center).abs() / width)
        } else {
            0.0
        });
        Self { nodes, values }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s <= self.nodes[0] {
            return self.values[0];
        }
        if s >= *self.nodes.last().unwrap() {
            return *self.values.last().unwrap();
        }
        let k = match self
            .nodes
            .binary_search_by(|x| x.partial_cmp(&s).unwrap())
        {
            Ok(i) => return self.values[i],
            Err(i) => i - 1,
        };
        let frac = (s - self.nodes[k]) / (self.nodes[k + 1] - self.nodes[k]);
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Linear segments `((x0, v0), (x1, v1))` making up the kernel.
    pub fn segments(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        self.nodes
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| ((x[0], v[0]), (x[1], v[1])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn periodic_wraps() {
        let g = PeriodicFn::table(2.0, vec![0.0, 1.0, 0.0, -1.0]);
        for t in [-3.3, -0.1, 0.0, 0.4, 1.9, 7.25] {
            assert_abs_diff_eq!(g.eval(t + 2.0), g.eval(t), epsilon = 1e-12);
        }
        // Linear interpolation between the quarter-period nodes.
        assert_abs_diff_eq!(g.eval(0.25), 0.5, epsilon = 1e-12);
        // Wraparound segment interpolates back toward the first node.
        assert_abs_diff_eq!(g.eval(1.75), -0.5, epsilon = 1e-12);
    }

    #[test]
    fn cosine_is_periodic() {
        let g = PeriodicFn::cosine(2.0, 0.7, 3, 0.1);
        for t in [0.0, 0.3, 1.99, 15.7] {
            assert_abs_diff_eq!(g.eval(t + 2.0), g.eval(t), epsilon = 1e-12);
        }
    }

    #[test]
    fn kernel_interpolates_and_clamps() {
        let k = KernelTable::new(vec![-1.0, -0.5, 0.0], vec![0.0, 1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(k.eval(-0.75), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(k.eval(-2.0), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k.eval(-0.5), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn delta_approx_has_unit_mass() {
        let k = KernelTable::delta_approx(-1.0, 0.0, -0.9, 0.05);
        // Trapezoid over a fine grid.
        let n = 20000;
        let mut mass = 0.0;
        for i in 0..n {
            let a = -1.0 + i as f64 / n as f64;
            let b = -1.0 + (i + 1) as f64 / n as f64;
            mass += 0.5 * (k.eval(a) + k.eval(b)) * (b - a);
        }
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-6);
    }
}
