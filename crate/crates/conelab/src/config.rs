//! Run configuration: TOML ingestion, validation, materialized defaults.
//!
//! Parsing is strict (unknown keys are rejected at the TOML layer) but
//! validation is forgiving in one specific way: it collects every violation
//! before failing, so a bad config is fixed in one round trip instead of
//! one message at a time. The materialized [`RunConfig`] carries no options;
//! every default has been filled in, and [`RunConfig::effective_toml`]
//! serializes exactly what the run will use, for provenance.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cocycle::{steps_per_period, Forcing, Nonlinearity};
use crate::model::{
    build_delay_model, build_parabolic_model, DelayParams, LinearModel, ParabolicParams,
};
use crate::tables::{KernelTable, PeriodicFn};

const DEFAULT_N_GRID: usize = 32;
const DEFAULT_N_MODES: usize = 16;
const DEFAULT_STEPS_PER_PERIOD: usize = 160;
const DEFAULT_N_OMEGA: usize = 400;
const DEFAULT_OMEGA_MAX: f64 = 1000.0;
const DEFAULT_SIM_PERIODS: usize = 12;
const DEFAULT_N_PAIRS: usize = 10;
const DEFAULT_MAX_ITERATIONS: usize = 400;
const DEFAULT_TRANSIENT: usize = 10;
const DEFAULT_TOL_PERIODIC_SCALE: f64 = 1e-7;
const DEFAULT_TOL_FIBRE: f64 = 1e-6;
const DEFAULT_HORIZON_PERIODS: usize = 3;
const DEFAULT_ANCHOR_WARMUP: usize = 20;
const DEFAULT_WARMUP_PERIODS: usize = 40;
const DEFAULT_N_SAMPLES: usize = 8;
const DEFAULT_SAMPLE_STRIDE: usize = 2;
const DEFAULT_N_ZETA: usize = 9;
const DEFAULT_ZETA_SPAN: f64 = 3.0;
const DEFAULT_PROBE_RADIUS: f64 = 1e-4;
const DEFAULT_PROBES: usize = 4;
const DEFAULT_STABILITY_PERIODS: usize = 20;
const DEFAULT_SEED: u64 = 12321;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
}

/// Raw shape of the file: everything optional, unknown keys rejected.
/// Validation turns this into the concrete [`RunConfig`] and reports every
/// missing or inconsistent field in one pass.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<RawModel>,
    #[serde(default)]
    nonlinearity: RawNonlinearity,
    #[serde(default)]
    forcing: RawForcing,
    analysis: Option<RawAnalysis>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: Option<String>,
    lambda: Option<f64>,
    b: Option<f64>,
    tau: Option<f64>,
    n_grid: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
    n_modes: Option<usize>,
    rho_nodes: Option<Vec<f64>>,
    rho_values: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNonlinearity {
    kind: Option<String>,
    b1: Option<f64>,
    b2: Option<f64>,
    gain: Option<f64>,
    table_nodes: Option<Vec<f64>>,
    table_values: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForcing {
    kind: Option<String>,
    value: Option<f64>,
    amplitude: Option<f64>,
    harmonic: Option<u32>,
    phase: Option<f64>,
    values: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    nu: Option<f64>,
    mu0: Option<f64>,
    sigma: Option<f64>,
    dt: Option<f64>,
    delta_seed: Option<f64>,
    theorem_mode: Option<bool>,
    n_omega: Option<usize>,
    omega_max: Option<f64>,
    sim_periods: Option<usize>,
    n_pairs: Option<usize>,
    max_iterations: Option<usize>,
    transient: Option<usize>,
    tol_periodic_scale: Option<f64>,
    tol_fibre: Option<f64>,
    horizon_periods: Option<usize>,
    anchor_warmup_periods: Option<usize>,
    warmup_periods: Option<usize>,
    n_samples: Option<usize>,
    sample_stride: Option<usize>,
    n_zeta: Option<usize>,
    zeta_span: Option<f64>,
    probe_radius: Option<f64>,
    probes: Option<usize>,
    stability_periods: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<String>,
    formats: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSection {
    Delay {
        lambda: f64,
        b: f64,
        tau: f64,
        n_grid: usize,
        rho_nodes: Vec<f64>,
        rho_values: Vec<f64>,
    },
    Parabolic {
        alpha: f64,
        beta: f64,
        n_modes: usize,
        rho_nodes: Vec<f64>,
        rho_values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonlinearitySection {
    Zero,
    Sigmoid { b1: f64, b2: f64 },
    Saturating { gain: f64 },
    Table { table_nodes: Vec<f64>, table_values: Vec<f64> },
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForcingSection {
    None,
    Constant { value: f64 },
    Cosine { amplitude: f64, harmonic: u32, phase: f64 },
    Table { values: Vec<f64> },
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisSection {
    pub nu: f64,
    pub mu0: f64,
    pub sigma: f64,
    pub dt: f64,
    /// Starting margin for the certificate bisection; 0 means automatic.
    pub delta_seed: f64,
    /// When set, parameter ranges outside the scope of the reduction
    /// theorems are rejected instead of merely warned about.
    pub theorem_mode: bool,
    pub n_omega: usize,
    pub omega_max: f64,
    pub sim_periods: usize,
    pub n_pairs: usize,
    pub max_iterations: usize,
    pub transient: usize,
    pub tol_periodic_scale: f64,
    pub tol_fibre: f64,
    pub horizon_periods: usize,
    pub anchor_warmup_periods: usize,
    pub warmup_periods: usize,
    pub n_samples: usize,
    pub sample_stride: usize,
    pub n_zeta: usize,
    pub zeta_span: f64,
    pub probe_radius: f64,
    pub probes: usize,
    pub stability_periods: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputSection {
    pub directory: String,
    pub formats: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub model: ModelSection,
    pub nonlinearity: NonlinearitySection,
    pub forcing: ForcingSection,
    pub analysis: AnalysisSection,
    pub output: OutputSection,
}

struct Violations(Vec<String>);

impl Violations {
    fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    fn require<T: Copy>(&mut self, field: Option<T>, name: &str) -> Option<T> {
        if field.is_none() {
            self.push(format!("missing required field `{name}`"));
        }
        field
    }
}

fn kernel_from(
    nodes: &Option<Vec<f64>>,
    values: &Option<Vec<f64>>,
    default_domain: (f64, f64),
    out: &mut Violations,
) -> (Vec<f64>, Vec<f64>) {
    match (nodes, values) {
        (None, None) => (
            vec![default_domain.0, default_domain.1],
            vec![1.0, 1.0],
        ),
        (Some(n), Some(v)) => {
            if let Err(e) = KernelTable::new(n.clone(), v.clone()) {
                out.push(format!("rho table: {e}"));
            }
            (n.clone(), v.clone())
        }
        _ => {
            out.push("rho_nodes and rho_values must be given together".to_string());
            (
                vec![default_domain.0, default_domain.1],
                vec![1.0, 1.0],
            )
        }
    }
}

fn forbid(present: bool, field: &str, kind: &str, out: &mut Violations) {
    if present {
        out.push(format!("field `{field}` does not apply to a {kind} model"));
    }
}

fn validate_model(raw: &RawModel, out: &mut Violations) -> Option<ModelSection> {
    let kind = match raw.kind.as_deref() {
        Some(k @ ("delay" | "parabolic")) => k,
        Some(other) => {
            out.push(format!(
                "model kind `{other}` is not one of `delay`, `parabolic`"
            ));
            return None;
        }
        None => {
            out.push("missing required field `model.kind`");
            return None;
        }
    };
    match kind {
        "delay" => {
            forbid(raw.alpha.is_some(), "alpha", "delay", out);
            forbid(raw.beta.is_some(), "beta", "delay", out);
            forbid(raw.n_modes.is_some(), "n_modes", "delay", out);
            let lambda = out.require(raw.lambda, "model.lambda");
            let tau = out.require(raw.tau, "model.tau");
            let b = raw.b.unwrap_or(1.0);
            let n_grid = raw.n_grid.unwrap_or(DEFAULT_N_GRID);
            if let Some(l) = lambda {
                if !(l > 0.0) {
                    out.push(format!("model.lambda = {l} must be positive"));
                }
            }
            if let Some(t) = tau {
                if !(t > 0.0) {
                    out.push(format!("model.tau = {t} must be positive"));
                }
            }
            if n_grid < 4 {
                out.push(format!("model.n_grid = {n_grid} is below the minimum of 4"));
            }
            let tau_v = tau.unwrap_or(1.0);
            let (rho_nodes, rho_values) =
                kernel_from(&raw.rho_nodes, &raw.rho_values, (-tau_v, 0.0), out);
            Some(ModelSection::Delay {
                lambda: lambda.unwrap_or(f64::NAN),
                b,
                tau: tau_v,
                n_grid,
                rho_nodes,
                rho_values,
            })
        }
        _ => {
            forbid(raw.lambda.is_some(), "lambda", "parabolic", out);
            forbid(raw.b.is_some(), "b", "parabolic", out);
            forbid(raw.tau.is_some(), "tau", "parabolic", out);
            forbid(raw.n_grid.is_some(), "n_grid", "parabolic", out);
            let alpha = out.require(raw.alpha, "model.alpha");
            let beta = out.require(raw.beta, "model.beta");
            let n_modes = raw.n_modes.unwrap_or(DEFAULT_N_MODES);
            if let Some(a) = alpha {
                if !(a > 0.0) {
                    out.push(format!("model.alpha = {a} must be positive"));
                }
            }
            if n_modes < 1 {
                out.push("model.n_modes must be at least 1");
            }
            let (rho_nodes, rho_values) =
                kernel_from(&raw.rho_nodes, &raw.rho_values, (0.0, 1.0), out);
            Some(ModelSection::Parabolic {
                alpha: alpha.unwrap_or(f64::NAN),
                beta: beta.unwrap_or(f64::NAN),
                n_modes,
                rho_nodes,
                rho_values,
            })
        }
    }
}

fn validate_nonlinearity(raw: &RawNonlinearity, out: &mut Violations) -> NonlinearitySection {
    let kind = raw.kind.as_deref().unwrap_or("zero");
    match kind {
        "zero" => NonlinearitySection::Zero,
        "sigmoid" => {
            let b1 = out.require(raw.b1, "nonlinearity.b1").unwrap_or(f64::NAN);
            let b2 = out.require(raw.b2, "nonlinearity.b2").unwrap_or(f64::NAN);
            if b1 < 0.0 {
                out.push(format!(
                    "nonlinearity.b1 = {b1} must be nonnegative for the sector [0, mu0]"
                ));
            }
            NonlinearitySection::Sigmoid { b1, b2 }
        }
        "saturating" => {
            let gain = out
                .require(raw.gain, "nonlinearity.gain")
                .unwrap_or(f64::NAN);
            if !(gain > 0.0) {
                out.push(format!("nonlinearity.gain = {gain} must be positive"));
            }
            NonlinearitySection::Saturating { gain }
        }
        "table" => {
            let nodes = raw.table_nodes.clone().unwrap_or_default();
            let values = raw.table_values.clone().unwrap_or_default();
            if nodes.is_empty() || values.is_empty() {
                out.push("table nonlinearity needs table_nodes and table_values");
            } else if let Err(e) = KernelTable::new(nodes.clone(), values.clone()) {
                out.push(format!("nonlinearity table: {e}"));
            }
            NonlinearitySection::Table {
                table_nodes: nodes,
                table_values: values,
            }
        }
        other => {
            out.push(format!(
                "nonlinearity kind `{other}` is not one of `zero`, `sigmoid`, `saturating`, `table`"
            ));
            NonlinearitySection::Zero
        }
    }
}

fn validate_forcing(raw: &RawForcing, out: &mut Violations) -> ForcingSection {
    let kind = raw.kind.as_deref().unwrap_or("none");
    match kind {
        "none" => ForcingSection::None,
        "constant" => ForcingSection::Constant {
            value: out.require(raw.value, "forcing.value").unwrap_or(f64::NAN),
        },
        "cosine" => ForcingSection::Cosine {
            amplitude: out
                .require(raw.amplitude, "forcing.amplitude")
                .unwrap_or(f64::NAN),
            harmonic: raw.harmonic.unwrap_or(1),
            phase: raw.phase.unwrap_or(0.0),
        },
        "table" => {
            let values = raw.values.clone().unwrap_or_default();
            if values.is_empty() {
                out.push("table forcing needs a nonempty `values` list");
            }
            ForcingSection::Table { values }
        }
        other => {
            out.push(format!(
                "forcing kind `{other}` is not one of `none`, `constant`, `cosine`, `table`"
            ));
            ForcingSection::None
        }
    }
}

fn validate_analysis(
    raw: &RawAnalysis,
    model: Option<&ModelSection>,
    out: &mut Violations,
) -> AnalysisSection {
    let nu = out.require(raw.nu, "analysis.nu").unwrap_or(f64::NAN);
    let mu0 = out.require(raw.mu0, "analysis.mu0").unwrap_or(f64::NAN);
    let sigma = out.require(raw.sigma, "analysis.sigma").unwrap_or(f64::NAN);

    if nu < 0.0 {
        out.push(format!("analysis.nu = {nu} must be nonnegative"));
    }
    if !(mu0 > 0.0) {
        out.push(format!("analysis.mu0 = {mu0} must be positive"));
    }
    if !(sigma > 0.0) {
        out.push(format!("analysis.sigma = {sigma} must be positive"));
    }

    let dt = raw
        .dt
        .unwrap_or(if sigma > 0.0 { sigma / DEFAULT_STEPS_PER_PERIOD as f64 } else { f64::NAN });
    if !(dt > 0.0) {
        out.push(format!("analysis.dt = {dt} must be positive"));
    } else if sigma > 0.0 && steps_per_period(dt, sigma).is_err() {
        out.push(format!(
            "analysis.dt = {dt} does not divide the period sigma = {sigma}"
        ));
    }

    let theorem_mode = raw.theorem_mode.unwrap_or(true);
    if theorem_mode {
        match model {
            Some(ModelSection::Delay { lambda, .. }) => {
                if (nu - lambda).abs() <= 1e-12 * lambda.abs().max(1.0) {
                    out.push(format!(
                        "analysis.nu = {nu} must differ from model.lambda = {lambda} \
                         for the delay reduction"
                    ));
                }
            }
            Some(ModelSection::Parabolic { alpha, beta, .. }) => {
                let hi = beta + std::f64::consts::PI.powi(2) * alpha;
                if !(nu > *beta && nu < hi) {
                    out.push(format!(
                        "analysis.nu = {nu} is outside the parabolic reduction range \
                         ({beta}, {hi}); set theorem_mode = false to run anyway"
                    ));
                }
            }
            None => {}
        }
    }

    let delta_seed = raw.delta_seed.unwrap_or(0.0);
    if delta_seed < 0.0 {
        out.push(format!(
            "analysis.delta_seed = {delta_seed} must be zero (automatic) or positive"
        ));
    }

    let n_omega = raw.n_omega.unwrap_or(DEFAULT_N_OMEGA);
    if n_omega < 16 {
        out.push(format!("analysis.n_omega = {n_omega} is below the minimum of 16"));
    }
    let omega_max = raw.omega_max.unwrap_or(DEFAULT_OMEGA_MAX);
    if !(omega_max > 0.0) {
        out.push(format!("analysis.omega_max = {omega_max} must be positive"));
    }

    let horizon_periods = raw.horizon_periods.unwrap_or(DEFAULT_HORIZON_PERIODS);
    if horizon_periods < 3 {
        out.push(format!(
            "analysis.horizon_periods = {horizon_periods} is below the minimum of 3"
        ));
    }
    let max_iterations = raw.max_iterations.unwrap_or(DEFAULT_MAX_ITERATIONS);
    if max_iterations < 20 {
        out.push(format!(
            "analysis.max_iterations = {max_iterations} is below the minimum of 20 periods"
        ));
    }
    let tol_periodic_scale = raw.tol_periodic_scale.unwrap_or(DEFAULT_TOL_PERIODIC_SCALE);
    if !(tol_periodic_scale > 0.0) {
        out.push("analysis.tol_periodic_scale must be positive");
    }
    let tol_fibre = raw.tol_fibre.unwrap_or(DEFAULT_TOL_FIBRE);
    if !(tol_fibre > 0.0) {
        out.push("analysis.tol_fibre must be positive");
    }
    let probe_radius = raw.probe_radius.unwrap_or(DEFAULT_PROBE_RADIUS);
    if !(probe_radius > 0.0) {
        out.push("analysis.probe_radius must be positive");
    }
    let n_samples = raw.n_samples.unwrap_or(DEFAULT_N_SAMPLES);
    if n_samples < 2 {
        out.push("analysis.n_samples must be at least 2");
    }
    let n_zeta = raw.n_zeta.unwrap_or(DEFAULT_N_ZETA);
    if n_zeta < 2 {
        out.push("analysis.n_zeta must be at least 2");
    }
    let zeta_span = raw.zeta_span.unwrap_or(DEFAULT_ZETA_SPAN);
    if !(zeta_span > 0.0) {
        out.push("analysis.zeta_span must be positive");
    }

    AnalysisSection {
        nu,
        mu0,
        sigma,
        dt,
        delta_seed,
        theorem_mode,
        n_omega,
        omega_max,
        sim_periods: raw.sim_periods.unwrap_or(DEFAULT_SIM_PERIODS).max(1),
        n_pairs: raw.n_pairs.unwrap_or(DEFAULT_N_PAIRS).max(1),
        max_iterations,
        transient: raw.transient.unwrap_or(DEFAULT_TRANSIENT),
        tol_periodic_scale,
        tol_fibre,
        horizon_periods,
        anchor_warmup_periods: raw.anchor_warmup_periods.unwrap_or(DEFAULT_ANCHOR_WARMUP),
        warmup_periods: raw.warmup_periods.unwrap_or(DEFAULT_WARMUP_PERIODS),
        n_samples,
        sample_stride: raw.sample_stride.unwrap_or(DEFAULT_SAMPLE_STRIDE).max(1),
        n_zeta,
        zeta_span,
        probe_radius,
        probes: raw.probes.unwrap_or(DEFAULT_PROBES).max(1),
        stability_periods: raw.stability_periods.unwrap_or(DEFAULT_STABILITY_PERIODS).max(1),
        seed: raw.seed.unwrap_or(DEFAULT_SEED),
    }
}

fn validate_output(raw: &RawOutput, out: &mut Violations) -> OutputSection {
    let formats = raw
        .formats
        .clone()
        .unwrap_or_else(|| vec!["summary".to_string(), "tables".to_string()]);
    for f in &formats {
        if f != "summary" && f != "tables" {
            out.push(format!(
                "output format `{f}` is not one of `summary`, `tables`"
            ));
        }
    }
    OutputSection {
        directory: raw.directory.clone().unwrap_or_else(|| "out".to_string()),
        formats,
    }
}

fn validate(raw: RawConfig) -> Result<RunConfig, ConfigError> {
    let mut out = Violations(Vec::new());

    let model = match &raw.model {
        Some(m) => validate_model(m, &mut out),
        None => {
            out.push("missing required section [model]");
            None
        }
    };
    let nonlinearity = validate_nonlinearity(&raw.nonlinearity, &mut out);
    let forcing = validate_forcing(&raw.forcing, &mut out);
    let analysis = match &raw.analysis {
        Some(a) => validate_analysis(a, model.as_ref(), &mut out),
        None => {
            out.push("missing required section [analysis] (nu, mu0, sigma)");
            validate_analysis(&RawAnalysis::default(), model.as_ref(), &mut Violations(Vec::new()))
        }
    };
    let output = validate_output(&raw.output, &mut out);

    // The certified sector must contain the nonlinearity.
    if analysis.mu0 > 0.0 {
        let config = RunConfig {
            model: model.clone().unwrap_or(ModelSection::Delay {
                lambda: 1.0,
                b: 1.0,
                tau: 1.0,
                n_grid: DEFAULT_N_GRID,
                rho_nodes: vec![-1.0, 0.0],
                rho_values: vec![1.0, 1.0],
            }),
            nonlinearity: nonlinearity.clone(),
            forcing: forcing.clone(),
            analysis: analysis.clone(),
            output: output.clone(),
        };
        if let Ok(f) = config.nonlinearity() {
            let cap = f.slope_cap();
            if cap > analysis.mu0 * (1.0 + 1e-12) {
                out.push(format!(
                    "nonlinearity slope cap {cap} exceeds the certified sector \
                     analysis.mu0 = {}",
                    analysis.mu0
                ));
            }
            if let Err(e) = f.validate_sector() {
                out.push(e.to_string());
            }
        }
    }

    if !out.0.is_empty() {
        return Err(ConfigError::Validation(out.0));
    }
    Ok(RunConfig {
        model: model.expect("violations were empty"),
        nonlinearity,
        forcing,
        analysis,
        output,
    })
}

/// Parse and validate a config from TOML text.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text)?;
    validate(raw)
}

/// Parse and validate a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text)
}

impl RunConfig {
    pub fn build_model(&self) -> Result<LinearModel, ConfigError> {
        let build = match &self.model {
            ModelSection::Delay {
                lambda,
                b,
                tau,
                n_grid,
                rho_nodes,
                rho_values,
            } => KernelTable::new(rho_nodes.clone(), rho_values.clone())
                .map_err(|e| ConfigError::Validation(vec![format!("rho table: {e}")]))
                .and_then(|rho| {
                    build_delay_model(DelayParams {
                        lambda: *lambda,
                        b: *b,
                        tau: *tau,
                        rho,
                        n_grid: *n_grid,
                    })
                    .map_err(|e| ConfigError::Validation(vec![e.to_string()]))
                }),
            ModelSection::Parabolic {
                alpha,
                beta,
                n_modes,
                rho_nodes,
                rho_values,
            } => KernelTable::new(rho_nodes.clone(), rho_values.clone())
                .map_err(|e| ConfigError::Validation(vec![format!("rho table: {e}")]))
                .and_then(|rho| {
                    build_parabolic_model(ParabolicParams {
                        alpha: *alpha,
                        beta: *beta,
                        rho,
                        n_modes: *n_modes,
                    })
                    .map_err(|e| ConfigError::Validation(vec![e.to_string()]))
                }),
        };
        build
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity, ConfigError> {
        let sigma = self.analysis.sigma;
        Ok(match &self.nonlinearity {
            NonlinearitySection::Zero => Nonlinearity::Zero,
            NonlinearitySection::Sigmoid { b1, b2 } => Nonlinearity::Sigmoid {
                b1: PeriodicFn::constant(sigma, *b1),
                b2: PeriodicFn::constant(sigma, *b2),
            },
            NonlinearitySection::Saturating { gain } => {
                Nonlinearity::Saturating { gain: *gain }
            }
            NonlinearitySection::Table {
                table_nodes,
                table_values,
            } => Nonlinearity::Table(
                KernelTable::new(table_nodes.clone(), table_values.clone())
                    .map_err(|e| ConfigError::Validation(vec![format!("nonlinearity table: {e}")]))?,
            ),
        })
    }

    pub fn forcing(&self) -> Forcing {
        let sigma = self.analysis.sigma;
        match &self.forcing {
            ForcingSection::None => Forcing::None,
            ForcingSection::Constant { value } => {
                Forcing::Scalar(PeriodicFn::constant(sigma, *value))
            }
            ForcingSection::Cosine {
                amplitude,
                harmonic,
                phase,
            } => Forcing::Scalar(PeriodicFn::cosine(sigma, *amplitude, *harmonic, *phase)),
            ForcingSection::Table { values } => {
                Forcing::Scalar(PeriodicFn::table(sigma, values.clone()))
            }
        }
    }

    /// The exact configuration this run uses, with every default filled in.
    pub fn effective_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
