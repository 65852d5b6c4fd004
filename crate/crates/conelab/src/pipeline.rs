//! Command dispatch: each subcommand builds what it needs from the run
//! configuration, writes a summary record plus detail tables into the output
//! directory, and reports one of three outcomes. Exit codes follow the
//! summary `status`: 0 `pass`, 2 `check-failed`, 3 `infeasible`; input
//! errors never reach this module (the binary maps them to 4 before
//! dispatch).
//!
//! Every command echoes the effective configuration to
//! `config.effective.toml` first, so an output directory always identifies
//! the run that produced it. Identical configurations produce byte-identical
//! summaries; all randomness flows through the seed recorded in the config.

use std::path::PathBuf;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cocycle::{steps_per_period, Cocycle, TrajectoryGrid};
use crate::config::RunConfig;
use crate::frequency::{certify_condition, delay_transfer, parabolic_transfer, FrequencyError};
use crate::kyp::{audit_inertia, solve_kyp_seeded, KypError, KypSolution, SectorBound};
use crate::model::{LinearModel, ModelSpec};
use crate::reduction::{
    amenable_v_check, attraction_check, classify_stability, detect_periodic, pi_coordinate,
    reachable_zeta_interval, reconstruct_fibre, verify_squeezing, AttractionOptions,
    FibreOptions, PeriodicOptions, PeriodicOrbit, ReductionError, StabilityClass,
    StabilityOptions,
};
use crate::report::{fmt_f64, matrix_tsv, trajectory_tsv, write_text, Summary, Table};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot write artifacts: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    CheckFreq,
    SolveKyp,
    Simulate,
    VerifySqueeze,
    FindPeriodic,
    ReconstructFibre,
    Attraction,
    FullPipeline,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CheckFreq => "check-freq",
            Command::SolveKyp => "solve-kyp",
            Command::Simulate => "simulate",
            Command::VerifySqueeze => "verify-squeeze",
            Command::FindPeriodic => "find-periodic",
            Command::ReconstructFibre => "reconstruct-fibre",
            Command::Attraction => "attraction",
            Command::FullPipeline => "full-pipeline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Status {
    Pass,
    CheckFailed,
    Infeasible,
}

impl Status {
    fn merge(self, other: Status) -> Status {
        self.max(other)
    }

    fn text(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::CheckFailed => "check-failed",
            Status::Infeasible => "infeasible",
        }
    }

    fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::CheckFailed => 2,
            Status::Infeasible => 3,
        }
    }
}

#[derive(Debug)]
pub struct CommandOutcome {
    pub exit_code: i32,
    pub status_line: String,
    pub summary_path: PathBuf,
}

struct Ctx<'a> {
    config: &'a RunConfig,
    model: LinearModel,
    out_dir: PathBuf,
    tables: bool,
    summary: Summary,
}

impl Ctx<'_> {
    fn sector(&self) -> SectorBound {
        SectorBound::SlopeCap {
            mu0: self.config.analysis.mu0,
        }
    }

    fn cocycle(&self) -> Result<Cocycle, ReductionError> {
        let f = self
            .config
            .nonlinearity()
            .map_err(|e| ReductionError::BadInput(e.to_string()))?;
        Ok(Cocycle::new(
            &self.model,
            f,
            self.config.forcing(),
            self.config.analysis.dt,
        )?)
    }

    fn write_table(&self, name: &str, content: &str) -> Result<(), PipelineError> {
        if self.tables {
            write_text(&self.out_dir.join(name), content)?;
        }
        Ok(())
    }

    /// Deterministic initial state: componentwise uniform in `[-1, 1]` from
    /// the run seed and a per-use stream index.
    fn random_state(&self, stream: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.analysis.seed ^ stream);
        DVector::from_fn(self.model.dim(), |_, _| rng.gen_range(-1.0..1.0))
    }
}

fn transfer_at<'m>(
    model: &'m LinearModel,
) -> impl Fn(num_complex::Complex<f64>) -> Result<num_complex::Complex<f64>, FrequencyError> + 'm {
    move |p| match &model.spec {
        ModelSpec::Delay(params) => delay_transfer(params, p),
        ModelSpec::Parabolic(params) => parabolic_transfer(params, p),
        ModelSpec::Scalar { .. } => crate::frequency::generic_transfer(model, p),
    }
}

fn stage_check_freq(ctx: &mut Ctx) -> Result<Status, PipelineError> {
    let a = &ctx.config.analysis;
    ctx.summary.section("frequency");
    match certify_condition(transfer_at(&ctx.model), a.nu, a.mu0, a.omega_max, a.n_omega) {
        Ok(report) => {
            ctx.summary.kv_bool("satisfied", report.satisfied);
            ctx.summary.kv_f64("min_margin", report.min_margin);
            ctx.summary.kv_f64("argmin_omega", report.argmin_omega);
            ctx.summary.kv_f64("tail_bound", report.tail_bound);
            ctx.summary.kv_usize("grid_points", report.grid.len());
            let mut table = Table::new(&["omega", "margin"]);
            for (omega, margin) in &report.grid {
                table.row(vec![fmt_f64(*omega), fmt_f64(*margin)]);
            }
            ctx.write_table("frequency_margin.tsv", &table.to_tsv())?;
            Ok(if report.satisfied {
                Status::Pass
            } else {
                Status::CheckFailed
            })
        }
        Err(e) => {
            ctx.summary.kv_bool("satisfied", false);
            ctx.summary.kv_str("error", &e.to_string());
            Ok(Status::CheckFailed)
        }
    }
}

fn stage_solve_kyp(ctx: &mut Ctx) -> Result<(Status, Option<KypSolution>), PipelineError> {
    let a = &ctx.config.analysis;
    let seed = if a.delta_seed > 0.0 {
        Some(a.delta_seed)
    } else {
        None
    };
    ctx.summary.section("certificate");
    match solve_kyp_seeded(&ctx.model, a.nu, ctx.sector(), seed) {
        Ok(solution) => {
            let cert = &solution.certificate;
            ctx.summary.kv_f64("nu", cert.nu);
            ctx.summary.kv_f64("mu0", cert.mu0);
            ctx.summary.kv_f64("delta_solve", solution.delta_solve);
            ctx.summary.kv_f64("margin", solution.margin);
            ctx.summary.kv_f64("delta_certified", cert.delta);
            ctx.summary.kv_int_list(
                "inertia",
                &[cert.inertia.n_neg, cert.inertia.n_zero, cert.inertia.n_pos],
            );
            ctx.summary
                .kv_usize("sign_iterations", solution.sign_iterations);

            let consistent = match audit_inertia(&ctx.model, cert) {
                Ok(audit) => {
                    let ok = audit.consistent();
                    ctx.summary.kv_usize("unstable_dim", audit.unstable_dim);
                    ctx.summary.kv_bool("inertia_consistent", ok);
                    ok
                }
                Err(e) => {
                    ctx.summary.kv_str("audit_error", &e.to_string());
                    false
                }
            };

            ctx.write_table("p_matrix.tsv", &matrix_tsv(&cert.p))?;
            Ok((
                if consistent {
                    Status::Pass
                } else {
                    Status::CheckFailed
                },
                Some(solution),
            ))
        }
        Err(e @ (KypError::Infeasible { .. } | KypError::HamiltonianImaginaryAxis { .. })) => {
            ctx.summary.kv_str("result", "infeasible");
            ctx.summary.kv_str("detail", &e.to_string());
            Ok((Status::Infeasible, None))
        }
        Err(e) => {
            ctx.summary.kv_str("result", "error");
            ctx.summary.kv_str("detail", &e.to_string());
            Ok((Status::CheckFailed, None))
        }
    }
}

fn stage_simulate(ctx: &mut Ctx) -> Result<Status, PipelineError> {
    let a = &ctx.config.analysis;
    ctx.summary.section("simulate");
    let run = || -> Result<TrajectoryGrid, ReductionError> {
        let mut cocycle = ctx.cocycle()?;
        let per = steps_per_period(a.dt, a.sigma)?;
        cocycle.reset(0.0, &ctx.random_state(1))?;
        Ok(cocycle.advance(a.sim_periods * per)?)
    };
    match run() {
        Ok(grid) => {
            let last = grid.states.last().expect("advance returns the start state");
            let norm = ctx.model.mass.norm(last);
            let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
            for y in &grid.observed {
                lo = lo.min(*y);
                hi = hi.max(*y);
                sum += *y;
            }
            ctx.summary.kv_usize("n_steps", grid.states.len() - 1);
            ctx.summary.kv_f64("t_end", grid.time(grid.states.len() - 1));
            ctx.summary.kv_f64("final_norm", norm);
            ctx.summary.kv_f64("observed_min", lo);
            ctx.summary.kv_f64("observed_max", hi);
            ctx.summary
                .kv_f64("observed_mean", sum / grid.observed.len() as f64);
            let note = format!("kind = {}", ctx.model.kind_name());
            ctx.write_table("trajectory.tsv", &trajectory_tsv(&grid, &note))?;
            Ok(Status::Pass)
        }
        Err(e) => {
            ctx.summary.kv_str("error", &e.to_string());
            Ok(Status::CheckFailed)
        }
    }
}

fn stage_verify_squeeze(
    ctx: &mut Ctx,
    solution: &KypSolution,
) -> Result<Status, PipelineError> {
    let a = &ctx.config.analysis;
    ctx.summary.section("squeezing");
    let run = || -> Result<(Table, f64, f64, bool, f64), ReductionError> {
        let per = steps_per_period(a.dt, a.sigma)?;
        let steps = a.sim_periods * per;
        let mut cocycle = ctx.cocycle()?;
        let mut table = Table::new(&["pair", "worst_residual", "tol", "windows"]);
        let mut worst = f64::NEG_INFINITY;
        let mut tol = 0.0;
        let mut all_ok = true;
        let mut first_pair: Option<(TrajectoryGrid, TrajectoryGrid)> = None;
        for pair in 0..a.n_pairs {
            cocycle.reset(0.0, &ctx.random_state(100 + 2 * pair as u64))?;
            let ga = cocycle.advance(steps)?;
            cocycle.reset(0.0, &ctx.random_state(101 + 2 * pair as u64))?;
            let gb = cocycle.advance(steps)?;
            let report =
                verify_squeezing(&ctx.model, &solution.certificate, &ga, &gb, a.sigma)?;
            worst = worst.max(report.worst_residual);
            tol = report.tol;
            all_ok &= report.satisfied;
            table.row(vec![
                pair.to_string(),
                fmt_f64(report.worst_residual),
                fmt_f64(report.tol),
                report.pairs_checked.to_string(),
            ]);
            if first_pair.is_none() {
                first_pair = Some((ga, gb));
            }
        }
        // Anti-vacuity control: the same data must violate the inequality
        // under the negated operator.
        let (ga, gb) = first_pair.expect("n_pairs >= 1");
        let control = verify_squeezing(
            &ctx.model,
            &solution.certificate.negated(),
            &ga,
            &gb,
            a.sigma,
        )?;
        Ok((table, worst, tol, all_ok, control.worst_residual))
    };
    match run() {
        Ok((table, worst, tol, all_ok, control)) => {
            let control_flipped = control > 10.0 * tol;
            ctx.summary.kv_usize("n_pairs", a.n_pairs);
            ctx.summary.kv_f64("worst_residual", worst);
            ctx.summary.kv_f64("tol", tol);
            ctx.summary.kv_bool("satisfied", all_ok);
            ctx.summary.kv_f64("control_residual", control);
            ctx.summary.kv_bool("control_flipped", control_flipped);
            ctx.write_table("squeezing_pairs.tsv", &table.to_tsv())?;
            Ok(if all_ok && control_flipped {
                Status::Pass
            } else {
                Status::CheckFailed
            })
        }
        Err(e) => {
            ctx.summary.kv_str("error", &e.to_string());
            Ok(Status::CheckFailed)
        }
    }
}

fn orbit_key(model: &LinearModel, orbits: &[PeriodicOrbit], candidate: &PeriodicOrbit) -> usize {
    for (i, known) in orbits.iter().enumerate() {
        let d = model.mass.norm(&(candidate.state() - known.state()));
        let scale = model.mass.norm(known.state()).max(1.0);
        if d <= 1e-3 * scale {
            return i;
        }
    }
    orbits.len()
}

fn stage_find_periodic(
    ctx: &mut Ctx,
    solution: &KypSolution,
) -> Result<Status, PipelineError> {
    let a = &ctx.config.analysis;
    ctx.summary.section("periodic");
    let opts = PeriodicOptions {
        max_iterations: a.max_iterations,
        transient: a.transient,
        tol_scale: a.tol_periodic_scale,
    };
    let run = || -> Result<(Table, usize, Vec<PeriodicOrbit>, Vec<usize>), ReductionError> {
        let mut cocycle = ctx.cocycle()?;
        let mut table = Table::new(&[
            "start",
            "converged",
            "iterations",
            "gap",
            "pi_coordinate",
            "orbit",
        ]);
        let mut orbits: Vec<PeriodicOrbit> = Vec::new();
        let mut membership = Vec::new();
        let mut converged = 0usize;
        for start in 0..a.n_samples {
            let u0 = ctx.random_state(300 + start as u64);
            match detect_periodic(
                &mut cocycle,
                &ctx.model,
                &solution.certificate,
                0.0,
                &u0,
                a.sigma,
                &opts,
            ) {
                Ok(orbit) => {
                    converged += 1;
                    let key = orbit_key(&ctx.model, &orbits, &orbit);
                    table.row(vec![
                        start.to_string(),
                        "true".to_string(),
                        orbit.iterations.to_string(),
                        fmt_f64(orbit.gap),
                        fmt_f64(orbit.pi_coordinate),
                        key.to_string(),
                    ]);
                    if key == orbits.len() {
                        orbits.push(orbit);
                    }
                    membership.push(key);
                }
                Err(e) => {
                    table.row(vec![
                        start.to_string(),
                        "false".to_string(),
                        "0".to_string(),
                        "nan".to_string(),
                        "nan".to_string(),
                        e.to_string(),
                    ]);
                }
            }
        }
        Ok((table, converged, orbits, membership))
    };
    match run() {
        Ok((table, converged, orbits, _membership)) => {
            let all = converged == a.n_samples;
            ctx.summary.kv_usize("n_starts", a.n_samples);
            ctx.summary.kv_usize("n_converged", converged);
            ctx.summary.kv_usize("n_distinct", orbits.len());

            // Stability tags for each distinct orbit.
            let mut tags = Vec::new();
            let sopts = StabilityOptions {
                radius: a.probe_radius,
                probes: a.probes,
                periods: a.stability_periods,
                seed: a.seed,
            };
            for orbit in &orbits {
                let tag = ctx
                    .cocycle()
                    .and_then(|mut c| {
                        classify_stability(&mut c, &ctx.model, &solution.certificate, orbit, &sopts)
                    })
                    .map(|r| match r.class {
                        StabilityClass::Stable => "stable",
                        StabilityClass::Unstable => "unstable",
                        StabilityClass::Undetermined => "undetermined",
                    })
                    .unwrap_or("undetermined");
                tags.push(tag.to_string());
            }
            ctx.summary.kv_str("stability", &tags.join(","));
            ctx.write_table("periodic_starts.tsv", &table.to_tsv())?;
            Ok(if all && !orbits.is_empty() {
                Status::Pass
            } else {
                Status::CheckFailed
            })
        }
        Err(e) => {
            ctx.summary.kv_str("error", &e.to_string());
            Ok(Status::CheckFailed)
        }
    }
}

/// Park a probe trajectory on the attractor, then lay a grid of `n_points`
/// reduced coordinates spanning `zeta_span` attractor scales around it,
/// clipped to the interval the shooting map can reach at this horizon.
fn attractor_zeta_grid(
    ctx: &Ctx,
    cert: &crate::operator::QuadraticCertificate,
    opts: &FibreOptions,
    stream: u64,
    n_points: usize,
) -> Result<(f64, f64, Vec<f64>), ReductionError> {
    let a = &ctx.config.analysis;
    let per = steps_per_period(a.dt, a.sigma)?;
    let mut cocycle = ctx.cocycle()?;
    cocycle.reset(0.0, &ctx.random_state(stream))?;
    cocycle.advance(a.warmup_periods * per)?;
    let orbit = cocycle.advance(per)?;
    let q = cocycle.time();
    let center = pi_coordinate(cert, &ctx.model, &cocycle.state())?;
    let scale = orbit
        .states
        .iter()
        .map(|u| ctx.model.mass.norm(u))
        .fold(f64::MIN_POSITIVE, f64::max);
    let want = (center - a.zeta_span * scale, center + a.zeta_span * scale);
    let (lo, hi) =
        reachable_zeta_interval(&mut cocycle, &ctx.model, cert, q, a.sigma, want, opts)?;
    let margin = 0.05 * (hi - lo);
    let grid_lo = want.0.max(lo + margin);
    let grid_hi = want.1.min(hi - margin);
    if !(grid_hi > grid_lo) {
        return Err(ReductionError::BadInput(format!(
            "the shooting map only reaches [{lo}, {hi}] at this horizon; no room for a grid"
        )));
    }
    let grid = (0..n_points)
        .map(|i| grid_lo + (grid_hi - grid_lo) * i as f64 / (n_points - 1) as f64)
        .collect();
    Ok((q, center, grid))
}

fn stage_reconstruct_fibre(
    ctx: &mut Ctx,
    solution: &KypSolution,
) -> Result<Status, PipelineError> {
    let a = &ctx.config.analysis;
    ctx.summary.section("fibre");
    let opts = FibreOptions {
        horizon_periods: a.horizon_periods,
        tol: a.tol_fibre,
        anchor_warmup_periods: a.anchor_warmup_periods,
        ..FibreOptions::default()
    };
    type FibreOut = (Table, f64, f64, f64, f64, (f64, f64));
    let run = || -> Result<FibreOut, ReductionError> {
        let cert = &solution.certificate;
        let (q, center, zeta_grid) = attractor_zeta_grid(ctx, cert, &opts, 400, a.n_zeta)?;
        let mut cocycle = ctx.cocycle()?;
        let fibre = reconstruct_fibre(
            &mut cocycle,
            &ctx.model,
            cert,
            q,
            &zeta_grid,
            a.sigma,
            &opts,
        )?;

        let mut table = Table::new(&["zeta", "pi", "residual", "d1", "d2", "ratio"]);
        let mut max_residual = 0.0f64;
        let mut max_ratio = 0.0f64;
        for (i, zeta) in fibre.zeta_grid.iter().enumerate() {
            let (d1, d2) = fibre.gaps[i];
            let floor = a.tol_fibre * ctx.model.mass.norm(&fibre.points[i]).max(1.0);
            let ratio = if d1 > floor { d2 / d1 } else { 0.0 };
            let pi = pi_coordinate(&solution.certificate, &ctx.model, &fibre.points[i])?;
            max_residual = max_residual.max(fibre.residuals[i]);
            max_ratio = max_ratio.max(ratio);
            table.row(vec![
                fmt_f64(*zeta),
                fmt_f64(pi),
                fmt_f64(fibre.residuals[i]),
                fmt_f64(d1),
                fmt_f64(d2),
                fmt_f64(ratio),
            ]);
        }
        let bounds = (fibre.zeta_grid[0], *fibre.zeta_grid.last().unwrap());
        Ok((table, max_residual, max_ratio, center, fibre.horizon, bounds))
    };
    match run() {
        Ok((table, max_residual, max_ratio, center, horizon, bounds)) => {
            let residual_ok = max_residual <= a.tol_fibre;
            let contraction_ok = max_ratio <= 0.5;
            ctx.summary.kv_usize("n_points", a.n_zeta);
            ctx.summary.kv_f64("center", center);
            ctx.summary.kv_f64("zeta_lo", bounds.0);
            ctx.summary.kv_f64("zeta_hi", bounds.1);
            ctx.summary.kv_f64("horizon", horizon);
            ctx.summary.kv_f64("max_residual", max_residual);
            ctx.summary.kv_f64("max_ratio", max_ratio);
            ctx.summary.kv_bool("residuals_ok", residual_ok);
            ctx.summary.kv_bool("contraction_ok", contraction_ok);
            ctx.write_table("fibre_points.tsv", &table.to_tsv())?;
            Ok(if residual_ok && contraction_ok {
                Status::Pass
            } else {
                Status::CheckFailed
            })
        }
        Err(e) => {
            ctx.summary.kv_str("error", &e.to_string());
            Ok(Status::CheckFailed)
        }
    }
}

fn stage_attraction(ctx: &mut Ctx, solution: &KypSolution) -> Result<Status, PipelineError> {
    let a = &ctx.config.analysis;
    ctx.summary.section("attraction");
    let opts = AttractionOptions {
        warmup_periods: a.warmup_periods,
        n_samples: a.n_samples,
        sample_stride: a.sample_stride,
        fibre: FibreOptions {
            horizon_periods: a.horizon_periods,
            tol: a.tol_fibre,
            anchor_warmup_periods: a.anchor_warmup_periods,
            ..FibreOptions::default()
        },
    };
    let run = || -> Result<crate::reduction::AttractionReport, ReductionError> {
        let mut cocycle = ctx.cocycle()?;
        attraction_check(
            &mut cocycle,
            &ctx.model,
            &solution.certificate,
            0.0,
            &ctx.random_state(500),
            a.sigma,
            &opts,
        )
    };
    match run() {
        Ok(report) => {
            ctx.summary.kv_usize("n_samples", report.distances.len());
            ctx.summary.kv_f64("final_distance", report.final_distance);
            ctx.summary.kv_f64("bound", report.bound);
            ctx.summary.kv_bool("satisfied", report.satisfied);
            let mut table = Table::new(&["sample", "distance"]);
            for (i, d) in report.distances.iter().enumerate() {
                table.row(vec![i.to_string(), fmt_f64(*d)]);
            }
            ctx.write_table("attraction_distances.tsv", &table.to_tsv())?;
            Ok(if report.satisfied {
                Status::Pass
            } else {
                Status::CheckFailed
            })
        }
        Err(e) => {
            ctx.summary.kv_str("error", &e.to_string());
            Ok(Status::CheckFailed)
        }
    }
}

/// Cone check between reconstructed fibre points, used by the full
/// pipeline after the fibre stage.
fn stage_cone(ctx: &mut Ctx, solution: &KypSolution) -> Result<Status, PipelineError> {
    let a = &ctx.config.analysis;
    ctx.summary.section("cone");
    let opts = FibreOptions {
        horizon_periods: a.horizon_periods,
        tol: a.tol_fibre,
        anchor_warmup_periods: a.anchor_warmup_periods,
        ..FibreOptions::default()
    };
    let run = || -> Result<(f64, bool, bool), ReductionError> {
        let cert = &solution.certificate;
        let per = steps_per_period(a.dt, a.sigma)?;
        let (q, _center, zetas) = attractor_zeta_grid(ctx, cert, &opts, 600, 5)?;
        let mut cocycle = ctx.cocycle()?;
        let fibre =
            reconstruct_fibre(&mut cocycle, &ctx.model, cert, q, &zetas, a.sigma, &opts)?;

        // Flow each fibre point one period; check every pair along the way.
        let mut grids = Vec::new();
        for p in &fibre.points {
            cocycle.reset(q, p)?;
            grids.push(cocycle.advance(per)?);
        }
        let p_norm = fibre
            .points
            .iter()
            .map(|p| ctx.model.mass.norm(p))
            .fold(0.0, f64::max);
        let v_max = p_norm * p_norm;
        let mut worst = f64::INFINITY;
        let mut all_ok = true;
        for i in 0..grids.len() {
            for j in (i + 1)..grids.len() {
                let report = amenable_v_check(
                    &ctx.model,
                    cert,
                    &grids[i],
                    &grids[j],
                    fibre.horizon,
                    v_max,
                )?;
                worst = worst.min(report.min_margin);
                all_ok &= report.satisfied;
            }
        }

        // Negative control: displace a fibre point along the most positive
        // eigendirection of P. The pair starts outside the cone, so the
        // check must report a violation somewhere on the grid; a fresh
        // transient start carries no amenability guarantee.
        let eig = crate::operator::generalized_eigen(&cert.p, &ctx.model.mass)?;
        let top = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("nonempty spectrum");
        let kick = eig.eigenvectors.column(top).into_owned();
        cocycle.reset(q, &(&fibre.points[0] + kick))?;
        let transient = cocycle.advance(per)?;
        let control =
            amenable_v_check(&ctx.model, cert, &grids[0], &transient, fibre.horizon, 0.0)?;
        Ok((worst, all_ok, !control.satisfied))
    };
    match run() {
        Ok((worst, all_ok, control_violated)) => {
            ctx.summary.kv_f64("min_margin", worst);
            ctx.summary.kv_bool("satisfied", all_ok);
            ctx.summary.kv_bool("control_violated", control_violated);
            Ok(if all_ok && control_violated {
                Status::Pass
            } else {
                Status::CheckFailed
            })
        }
        Err(e) => {
            ctx.summary.kv_str("error", &e.to_string());
            Ok(Status::CheckFailed)
        }
    }
}

/// Run one command against a validated configuration. The output directory
/// is taken from the config (already overridden by the CLI when requested).
pub fn run_command(cmd: Command, config: &RunConfig) -> Result<CommandOutcome, PipelineError> {
    let out_dir = PathBuf::from(&config.output.directory);
    std::fs::create_dir_all(&out_dir)?;
    write_text(&out_dir.join("config.effective.toml"), &config.effective_toml())?;

    let model = config.build_model()?;
    let tables = config.output.formats.iter().any(|f| f == "tables");
    let mut ctx = Ctx {
        config,
        model,
        out_dir: out_dir.clone(),
        tables,
        summary: Summary::new(cmd.name()),
    };

    let status = dispatch(cmd, &mut ctx)?;

    let summary_path = out_dir.join("summary.toml");
    write_text(&summary_path, &ctx.summary.finish(status.text()))?;
    Ok(CommandOutcome {
        exit_code: status.exit_code(),
        status_line: format!("{}: {}", cmd.name(), status.text()),
        summary_path,
    })
}

fn dispatch(cmd: Command, ctx: &mut Ctx) -> Result<Status, PipelineError> {
    // Commands that need the certificate solve it themselves; an infeasible
    // certificate short-circuits everything downstream of it.
    match cmd {
        Command::CheckFreq => stage_check_freq(ctx),
        Command::SolveKyp => Ok(stage_solve_kyp(ctx)?.0),
        Command::Simulate => stage_simulate(ctx),
        Command::VerifySqueeze => with_certificate(ctx, stage_verify_squeeze),
        Command::FindPeriodic => with_certificate(ctx, stage_find_periodic),
        Command::ReconstructFibre => with_certificate(ctx, stage_reconstruct_fibre),
        Command::Attraction => with_certificate(ctx, stage_attraction),
        Command::FullPipeline => {
            let mut status = stage_check_freq(ctx)?;
            let (solve_status, solution) = stage_solve_kyp(ctx)?;
            status = status.merge(solve_status);
            let Some(solution) = solution else {
                return Ok(status);
            };
            status = status.merge(stage_simulate(ctx)?);
            status = status.merge(stage_verify_squeeze(ctx, &solution)?);
            status = status.merge(stage_find_periodic(ctx, &solution)?);
            status = status.merge(stage_reconstruct_fibre(ctx, &solution)?);
            status = status.merge(stage_cone(ctx, &solution)?);
            status = status.merge(stage_attraction(ctx, &solution)?);
            Ok(status)
        }
    }
}

fn with_certificate(
    ctx: &mut Ctx,
    stage: impl FnOnce(&mut Ctx, &KypSolution) -> Result<Status, PipelineError>,
) -> Result<Status, PipelineError> {
    let (status, solution) = stage_solve_kyp(ctx)?;
    match solution {
        Some(solution) => Ok(status.merge(stage(ctx, &solution)?)),
        None => Ok(status),
    }
}
