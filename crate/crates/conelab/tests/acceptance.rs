//! Acceptance gate for the laboratory: one test per criterion the crate has
//! to meet, each printing a single pass/fail line with the measured numbers.
//! Every check here runs against the public API only, at the tolerances the
//! criteria state; nothing is mocked and nothing is tuned per test.

use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use conelab::cocycle::{steps_per_period, Cocycle, Forcing, Nonlinearity, TrajectoryGrid};
use conelab::frequency::{certify_condition, delay_transfer, generic_transfer, parabolic_transfer};
use conelab::kyp::{audit_inertia, solve_kyp, KypError, SectorBound};
use conelab::model::{
    build_delay_model, build_parabolic_model, DelayParams, LinearModel, ParabolicParams,
};
use conelab::operator::{generalized_eigen, Inertia, QuadraticCertificate};
use conelab::reduction::{
    amenable_v_check, attraction_check, detect_periodic, pi_coordinate, reconstruct_fibre,
    verify_squeezing, AttractionOptions, FibreOptions, PeriodicOptions,
};
use conelab::tables::{KernelTable, PeriodicFn};

const SIGMA: f64 = 2.0;
const DT: f64 = 0.0125;
const N_GRID: usize = 80;

fn verdict(name: &str, ok: bool, detail: &str) {
    println!(
        "acceptance [{name}]: {}; {detail}",
        if ok { "pass" } else { "fail" }
    );
    assert!(ok, "[{name}] {detail}");
}

fn reference_model() -> LinearModel {
    build_delay_model(DelayParams {
        lambda: 0.1,
        b: 1.0,
        tau: 1.0,
        rho: KernelTable::constant(-1.0, 0.0, 1.0),
        n_grid: N_GRID,
    })
    .unwrap()
}

fn bistable() -> Nonlinearity {
    Nonlinearity::Sigmoid {
        b1: PeriodicFn::constant(SIGMA, 1.2),
        b2: PeriodicFn::constant(SIGMA, -0.6),
    }
}

fn reference_forcing() -> Forcing {
    Forcing::Scalar(PeriodicFn::cosine(SIGMA, 0.02, 1, 0.0))
}

fn reference_certificate(model: &LinearModel) -> QuadraticCertificate {
    solve_kyp(model, 1.1, SectorBound::SlopeCap { mu0: 0.3 })
        .unwrap()
        .certificate
}

fn reference_cocycle(model: &LinearModel) -> Cocycle {
    Cocycle::new(model, bistable(), reference_forcing(), DT).unwrap()
}

fn random_history(dim: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0))
}

/// Criterion 1: the certificate solve and the frequency sweep must agree on
/// feasibility over the whole scalar parameter family, with both verdicts
/// represented.
#[test]
fn kyp_and_frequency_verdicts_agree_on_the_scalar_family() {
    let start = Instant::now();
    let mut points = 0usize;
    let mut disagreements = Vec::new();
    let mut feasible = 0usize;
    let mut infeasible = 0usize;
    for a in [0.5, 1.0, 2.0, 4.0] {
        let model = LinearModel::scalar(a);
        for nu in [0.0, a + 1.0] {
            for mu0 in [0.1, 0.3, 0.9, 1.5, 3.0, 8.0] {
                points += 1;
                let freq = certify_condition(|p| generic_transfer(&model, p), nu, mu0, 1e3, 400)
                    .unwrap()
                    .satisfied;
                let kyp = match solve_kyp(&model, nu, SectorBound::SlopeCap { mu0 }) {
                    Ok(_) => true,
                    Err(KypError::Infeasible { .. })
                    | Err(KypError::HamiltonianImaginaryAxis { .. }) => false,
                    Err(e) => panic!("a={a} nu={nu} mu0={mu0}: unexpected error {e}"),
                };
                if freq {
                    feasible += 1;
                } else {
                    infeasible += 1;
                }
                if freq != kyp {
                    disagreements.push(format!("a={a} nu={nu} mu0={mu0} freq={freq} kyp={kyp}"));
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = points >= 20
        && disagreements.is_empty()
        && feasible > 0
        && infeasible > 0
        && elapsed < 10.0;
    verdict(
        "kyp-frequency equivalence",
        ok,
        &format!(
            "{points} points, {} disagreements ({feasible} feasible / {infeasible} infeasible), {elapsed:.2}s: {:?}",
            disagreements.len(),
            disagreements
        ),
    );
}

/// Criterion 2: certificate inertia matches the dichotomy of the shifted
/// linear part exactly, in both model families and in both regimes.
#[test]
fn certificate_inertia_matches_the_shifted_dichotomy() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut check = |label: String, model: &LinearModel, nu: f64, mu0: f64, want: Inertia| {
        let solution = match solve_kyp(model, nu, SectorBound::SlopeCap { mu0 }) {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("{label}: solve failed: {e}"));
                return;
            }
        };
        let inertia = solution.certificate.inertia;
        let audit = audit_inertia(model, &solution.certificate).unwrap();
        if inertia != want || !audit.consistent() {
            failures.push(format!(
                "{label}: inertia ({},{},{}) want ({},{},{}), unstable_dim {}",
                inertia.n_neg,
                inertia.n_zero,
                inertia.n_pos,
                want.n_neg,
                want.n_zero,
                want.n_pos,
                audit.unstable_dim
            ));
        }
    };

    for n_modes in [8usize, 16, 32] {
        let model = build_parabolic_model(ParabolicParams {
            alpha: 1.0,
            beta: 2.0,
            rho: KernelTable::constant(0.0, 1.0, 1.0),
            n_modes,
        })
        .unwrap();
        let want = Inertia {
            n_neg: 1,
            n_zero: 0,
            n_pos: n_modes - 1,
        };
        check(format!("parabolic n_modes={n_modes}"), &model, 2.5, 0.3, want);
    }
    for n_grid in [32usize, 64] {
        let model = build_delay_model(DelayParams {
            lambda: 1.0,
            b: 1.0,
            tau: 1.0,
            rho: KernelTable::constant(-1.0, 0.0, 1.0),
            n_grid,
        })
        .unwrap();
        let n = model.dim();
        let want = Inertia {
            n_neg: 1,
            n_zero: 0,
            n_pos: n - 1,
        };
        check(format!("delay lambda=1 n_grid={n_grid}"), &model, 2.0, 1.0, want);
    }
    {
        let model = build_delay_model(DelayParams {
            lambda: 2.0,
            b: 1.0,
            tau: 1.0,
            rho: KernelTable::constant(-1.0, 0.0, 1.0),
            n_grid: 32,
        })
        .unwrap();
        let n = model.dim();
        let want = Inertia {
            n_neg: 0,
            n_zero: 0,
            n_pos: n,
        };
        check("delay lambda=2 nu=0".into(), &model, 0.0, 1.0, want);
    }

    let elapsed = start.elapsed().as_secs_f64();
    let ok = failures.is_empty() && elapsed < 30.0;
    verdict(
        "inertia audit",
        ok,
        &format!("6 solves, {elapsed:.2}s{}{}", if failures.is_empty() { "" } else { ": " }, failures.join("; ")),
    );
}

/// Criterion 3: the squeezing inequality holds on random trajectory pairs of
/// the reference bistable system, and turns into a gross violation when the
/// operator is negated.
#[test]
fn squeezing_holds_on_random_pairs_and_flips_under_negation() {
    let start = Instant::now();
    let model = reference_model();
    let cert = reference_certificate(&model);
    let mut cocycle = reference_cocycle(&model);
    let per = steps_per_period(DT, SIGMA).unwrap();
    let steps = 12 * per;

    let mut worst = f64::NEG_INFINITY;
    let mut min_windows = usize::MAX;
    let mut all_ok = true;
    let mut first: Option<(TrajectoryGrid, TrajectoryGrid)> = None;
    for pair in 0..10u64 {
        cocycle.reset(0.0, &random_history(model.dim(), 2 * pair)).unwrap();
        let ga = cocycle.advance(steps).unwrap();
        cocycle.reset(0.0, &random_history(model.dim(), 2 * pair + 1)).unwrap();
        let gb = cocycle.advance(steps).unwrap();
        let report = verify_squeezing(&model, &cert, &ga, &gb, SIGMA).unwrap();
        worst = worst.max(report.worst_residual);
        min_windows = min_windows.min(report.pairs_checked);
        all_ok &= report.satisfied;
        if first.is_none() {
            first = Some((ga, gb));
        }
    }

    let (ga, gb) = first.unwrap();
    let flipped = verify_squeezing(&model, &cert.negated(), &ga, &gb, SIGMA).unwrap();
    let control_ok = flipped.worst_residual > 10.0 * flipped.tol;

    let elapsed = start.elapsed().as_secs_f64();
    let ok = all_ok && control_ok && min_windows >= 200 && elapsed < 60.0;
    verdict(
        "squeezing",
        ok,
        &format!(
            "10 pairs, >= {min_windows} windows each, worst residual {worst:.3e}, negated-P residual {:.3e} vs 10 tol {:.3e}, {elapsed:.2}s",
            flipped.worst_residual,
            10.0 * flipped.tol
        ),
    );
}

fn fourier_amplitude(xs: &[f64], dt: f64, omega: f64) -> f64 {
    let n = xs.len() - 1;
    let (mut re, mut im) = (0.0, 0.0);
    for (k, x) in xs.iter().enumerate() {
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        let t = k as f64 * dt;
        re += w * x * (omega * t).cos();
        im += w * x * (omega * t).sin();
    }
    2.0 * (re * re + im * im).sqrt() / n as f64
}

/// Criterion 4: with the nonlinearity off, both integrators reproduce the
/// closed-form amplitude of the forced linear response.
#[test]
fn linear_response_matches_the_closed_form_amplitudes() {
    let start = Instant::now();
    let omega = 2.0 * std::f64::consts::PI / SIGMA;
    let amp = 0.02;
    let forcing = Forcing::Scalar(PeriodicFn::cosine(SIGMA, amp, 1, 0.0));
    let per = steps_per_period(DT, SIGMA).unwrap();

    let measure = |model: &LinearModel| -> f64 {
        let mut cocycle =
            Cocycle::new(model, Nonlinearity::Zero, forcing.clone(), DT).unwrap();
        cocycle.reset(0.0, &DVector::zeros(model.dim())).unwrap();
        let grid = cocycle.advance(14 * per).unwrap();
        let xs: Vec<f64> = grid.states[10 * per..=14 * per]
            .iter()
            .map(|u| u[0])
            .collect();
        fourier_amplitude(&xs, DT, omega)
    };

    let lambda = 1.0;
    let delay = build_delay_model(DelayParams {
        lambda,
        b: 1.0,
        tau: 1.0,
        rho: KernelTable::constant(-1.0, 0.0, 1.0),
        n_grid: 16,
    })
    .unwrap();
    let got_delay = measure(&delay);
    let want_delay = amp / (lambda * lambda + omega * omega).sqrt();
    let err_delay = (got_delay - want_delay).abs() / want_delay;

    let beta = 2.0;
    let parabolic = build_parabolic_model(ParabolicParams {
        alpha: 1.0,
        beta,
        rho: KernelTable::constant(0.0, 1.0, 1.0),
        n_modes: 8,
    })
    .unwrap();
    let got_parabolic = measure(&parabolic);
    let want_parabolic = amp / (beta * beta + omega * omega).sqrt();
    let err_parabolic = (got_parabolic - want_parabolic).abs() / want_parabolic;

    let elapsed = start.elapsed().as_secs_f64();
    let ok = err_delay <= 1e-3 && err_parabolic <= 1e-3 && elapsed < 10.0;
    verdict(
        "linear response",
        ok,
        &format!(
            "delay rel err {err_delay:.2e}, parabolic rel err {err_parabolic:.2e}, {elapsed:.2}s"
        ),
    );
}

fn eventually_monotone(trace: &[f64], scale: f64) -> bool {
    if trace.len() < 3 {
        return true;
    }
    let diffs: Vec<f64> = trace.windows(2).map(|w| w[1] - w[0]).collect();
    let k0 = diffs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap();
    let negligible = 1e-9 * scale;
    let mut sign = 0.0f64;
    for d in &diffs[k0..] {
        if d.abs() <= negligible {
            continue;
        }
        if sign == 0.0 {
            sign = d.signum();
        } else if d.signum() != sign {
            return false;
        }
    }
    true
}

/// Criterion 5: the period map converges from every random initial history,
/// with an eventually monotone reduced coordinate, and the limit orbits are
/// counted.
#[test]
fn random_histories_converge_to_periodic_orbits() {
    let start = Instant::now();
    let model = reference_model();
    let cert = reference_certificate(&model);
    let mut cocycle = reference_cocycle(&model);
    let opts = PeriodicOptions {
        max_iterations: 400,
        transient: 10,
        tol_scale: 1e-7,
    };

    let mut orbits: Vec<DVector<f64>> = Vec::new();
    let mut failures = Vec::new();
    for s in 0..8u64 {
        let u0 = random_history(model.dim(), 1000 + s);
        match detect_periodic(&mut cocycle, &model, &cert, 0.0, &u0, SIGMA, &opts) {
            Ok(orbit) => {
                let scale = model.mass.norm(orbit.state()).max(1.0);
                if !eventually_monotone(&orbit.zeta_trace, scale) {
                    failures.push(format!("start {s}: reduced trace not eventually monotone"));
                }
                if !orbits
                    .iter()
                    .any(|known| model.mass.norm(&(orbit.state() - known)) <= 1e-3 * scale)
                {
                    orbits.push(orbit.state().clone());
                }
            }
            Err(e) => failures.push(format!("start {s}: {e}")),
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    let ok = failures.is_empty() && !orbits.is_empty() && elapsed < 300.0;
    verdict(
        "periodic convergence",
        ok,
        &format!(
            "8/8 starts converged, {} distinct orbit(s), {elapsed:.2}s{}{}",
            orbits.len(),
            if failures.is_empty() { "" } else { ": " },
            failures.join("; ")
        ),
    );
}

/// Shared fibre construction for criteria 6-8: park on the attractor, lay a
/// grid of the requested width in attractor scales, reconstruct.
fn fibre_over_scales(
    model: &LinearModel,
    cert: &QuadraticCertificate,
    cocycle: &mut Cocycle,
    n_points: usize,
    scales: f64,
) -> (conelab::reduction::FibreReconstruction, f64) {
    let per = steps_per_period(DT, SIGMA).unwrap();
    cocycle.reset(0.0, &random_history(model.dim(), 77)).unwrap();
    cocycle.advance(20 * per).unwrap();
    let rec = cocycle.advance(per).unwrap();
    let q = cocycle.time();
    let scale = rec
        .states
        .iter()
        .map(|u| model.mass.norm(u))
        .fold(0.0, f64::max);
    let center = pi_coordinate(cert, model, &cocycle.state()).unwrap();
    let grid: Vec<f64> = (0..n_points)
        .map(|i| center - scales * scale + 2.0 * scales * scale * i as f64 / (n_points - 1) as f64)
        .collect();
    let fibre = reconstruct_fibre(
        cocycle,
        model,
        cert,
        q,
        &grid,
        SIGMA,
        &FibreOptions::default(),
    )
    .unwrap();
    (fibre, scale)
}

/// Criterion 6: fibre reconstruction over a wide coordinate grid is accurate
/// to tolerance, strictly monotone in the reduced coordinate, and contracts
/// under horizon doubling.
#[test]
fn fibre_reconstruction_is_accurate_monotone_and_contracting() {
    let start = Instant::now();
    let model = reference_model();
    let cert = reference_certificate(&model);
    let mut cocycle = reference_cocycle(&model);
    let (fibre, scale) = fibre_over_scales(&model, &cert, &mut cocycle, 9, 3.0);

    let tol = FibreOptions::default().tol;
    let max_residual = fibre.residuals.iter().cloned().fold(0.0, f64::max);
    let residuals_ok = max_residual <= 1e-6;

    let pis: Vec<f64> = fibre
        .points
        .iter()
        .map(|u| pi_coordinate(&cert, &model, u).unwrap())
        .collect();
    let monotone = pis.windows(2).all(|w| w[1] > w[0]);

    let mut max_ratio = 0.0f64;
    for (i, (d1, d2)) in fibre.gaps.iter().enumerate() {
        let floor = tol * model.mass.norm(&fibre.points[i]).max(1.0);
        if *d2 > floor {
            max_ratio = max_ratio.max(d2 / d1.max(floor));
        }
    }
    let contracting = max_ratio <= 0.5;

    let elapsed = start.elapsed().as_secs_f64();
    let ok = residuals_ok && monotone && contracting && elapsed < 300.0;
    verdict(
        "fibre reconstruction",
        ok,
        &format!(
            "9 points over ±3 × {scale:.2}, max residual {max_residual:.2e}, monotone {monotone}, doubling ratio {max_ratio:.2e}, {elapsed:.2}s"
        ),
    );
}

/// Criterion 7: a transient trajectory's distance to the fibre family
/// decreases and ends below ten reconstruction tolerances.
#[test]
fn transients_attract_to_the_fibre_family() {
    let start = Instant::now();
    let model = reference_model();
    let cert = reference_certificate(&model);
    let mut cocycle = reference_cocycle(&model);
    let opts = AttractionOptions {
        warmup_periods: 1,
        n_samples: 8,
        sample_stride: 1,
        fibre: FibreOptions::default(),
    };
    let report = attraction_check(
        &mut cocycle,
        &model,
        &cert,
        0.0,
        &random_history(model.dim(), 4242),
        SIGMA,
        &opts,
    )
    .unwrap();

    let first = report.distances[0];
    let decreased = first > 100.0 * report.final_distance.max(1e-12);
    let elapsed = start.elapsed().as_secs_f64();
    let ok = report.satisfied
        && report.distances.len() >= 8
        && report.final_distance <= report.bound
        && decreased
        && elapsed < 300.0;
    verdict(
        "attraction",
        ok,
        &format!(
            "8 samples, first {first:.2e}, final {:.2e} vs bound {:.2e}, {elapsed:.2}s",
            report.final_distance, report.bound
        ),
    );
}

/// Criterion 8: differences of fibre points stay in the quadratic cone along
/// a full period, for every pair; a deliberately displaced transient start
/// must violate the check at least once.
#[test]
fn fibre_points_satisfy_the_cone_condition_pairwise() {
    let start = Instant::now();
    let model = reference_model();
    let cert = reference_certificate(&model);
    let mut cocycle = reference_cocycle(&model);
    let per = steps_per_period(DT, SIGMA).unwrap();
    let (fibre, _scale) = fibre_over_scales(&model, &cert, &mut cocycle, 5, 2.0);

    let mut grids = Vec::new();
    for p in &fibre.points {
        cocycle.reset(fibre.q, p).unwrap();
        grids.push(cocycle.advance(per).unwrap());
    }
    let v_max = fibre
        .points
        .iter()
        .map(|p| model.mass.norm(p).powi(2))
        .fold(0.0, f64::max);

    let mut pairs = 0usize;
    let mut worst_value = f64::NEG_INFINITY;
    let mut all_in_cone = true;
    for i in 0..grids.len() {
        for j in (i + 1)..grids.len() {
            pairs += 1;
            let report =
                amenable_v_check(&model, &cert, &grids[i], &grids[j], fibre.horizon, v_max)
                    .unwrap();
            worst_value = worst_value.max(report.max_value);
            all_in_cone &= report.satisfied && report.max_value < 0.0;
        }
    }

    // Counterprobe: kick one fibre point along the most positive
    // eigendirection of the form; the pair starts outside the cone and the
    // check must say so.
    let eig = generalized_eigen(&cert.p, &model.mass).unwrap();
    let top = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let kick = eig.eigenvectors.column(top).into_owned();
    cocycle.reset(fibre.q, &(&fibre.points[0] + kick)).unwrap();
    let transient = cocycle.advance(per).unwrap();
    let control = amenable_v_check(&model, &cert, &grids[0], &transient, fibre.horizon, 0.0)
        .unwrap();

    let elapsed = start.elapsed().as_secs_f64();
    let ok = pairs == 10 && all_in_cone && !control.satisfied && elapsed < 300.0;
    verdict(
        "amenable cone",
        ok,
        &format!(
            "10 pairs, worst V {worst_value:.3e} (< 0), counterprobe max V {:.3e} flags violation {}, {elapsed:.2}s",
            control.max_value,
            !control.satisfied
        ),
    );
}

fn test_points() -> Vec<Complex64> {
    let mut points = Vec::new();
    for nu in [0.0, 1.1] {
        for omega in [0.37, 1.0, 2.7, 7.4] {
            points.push(Complex64::new(-nu, omega));
        }
    }
    points
}

/// Criterion 9: explicit truncations converge to the closed-form transfer
/// functions with observed order at least one, and the constant-kernel
/// parabolic observation collapses to its rational form exactly.
#[test]
fn transfer_truncations_converge_to_closed_forms() {
    let start = Instant::now();
    let points = test_points();
    let mut failures = Vec::new();
    let mut min_order = f64::INFINITY;

    for (k, p) in points.iter().enumerate() {
        let reference = delay_transfer(
            &DelayParams {
                lambda: 0.1,
                b: 1.0,
                tau: 1.0,
                rho: KernelTable::constant(-1.0, 0.0, 1.0),
                n_grid: 40,
            },
            *p,
        )
        .unwrap();
        let errs: Vec<f64> = [40usize, 80, 160]
            .iter()
            .map(|&n| {
                let model = build_delay_model(DelayParams {
                    lambda: 0.1,
                    b: 1.0,
                    tau: 1.0,
                    rho: KernelTable::constant(-1.0, 0.0, 1.0),
                    n_grid: n,
                })
                .unwrap();
                (generic_transfer(&model, *p).unwrap() - reference).norm()
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0].max(1e-300) / w[1].max(1e-300)).log2();
            min_order = min_order.min(order);
            if order < 1.0 {
                failures.push(format!("delay point {k}: order {order:.2} from errs {errs:?}"));
            }
        }
    }

    let rho_lin = KernelTable::new(vec![0.0, 1.0], vec![1.0, 1.5]).unwrap();
    for (k, p) in points.iter().enumerate() {
        let reference = parabolic_transfer(
            &ParabolicParams {
                alpha: 1.0,
                beta: 2.0,
                rho: rho_lin.clone(),
                n_modes: 512,
            },
            *p,
        )
        .unwrap();
        let errs: Vec<f64> = [8usize, 16, 32]
            .iter()
            .map(|&n| {
                let model = build_parabolic_model(ParabolicParams {
                    alpha: 1.0,
                    beta: 2.0,
                    rho: rho_lin.clone(),
                    n_modes: n,
                })
                .unwrap();
                (generic_transfer(&model, *p).unwrap() - reference).norm()
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0].max(1e-300) / w[1].max(1e-300)).log2();
            min_order = min_order.min(order);
            if order < 1.0 {
                failures.push(format!(
                    "parabolic point {k}: order {order:.2} from errs {errs:?}"
                ));
            }
        }
    }

    let mut max_exact_err = 0.0f64;
    for n_modes in [2usize, 8] {
        let model = build_parabolic_model(ParabolicParams {
            alpha: 1.0,
            beta: 2.0,
            rho: KernelTable::constant(0.0, 1.0, 1.0),
            n_modes,
        })
        .unwrap();
        for p in &points {
            let want = -Complex64::new(1.0, 0.0) / (p + 2.0);
            let err = (generic_transfer(&model, *p).unwrap() - want).norm();
            max_exact_err = max_exact_err.max(err);
            if err > 1e-8 {
                failures.push(format!("constant-kernel n_modes={n_modes} p={p}: err {err:.2e}"));
            }
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    let ok = failures.is_empty() && elapsed < 60.0;
    verdict(
        "transfer cross-oracle",
        ok,
        &format!(
            "8 points, min observed order {min_order:.2}, constant-kernel max err {max_exact_err:.2e}, {elapsed:.2}s{}{}",
            if failures.is_empty() { "" } else { ": " },
            failures.join("; ")
        ),
    );
}
