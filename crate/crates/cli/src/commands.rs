use std::fs;
use std::path::Path;

use blowup_core::duhamel::{
    cross_solver_check, ode_comparison, raw_gradient_slope, standard_probes, weighted_semigroup_check,
    CrossSolverReport, OdeComparison, PicardOptions, SemigroupRow,
};
use blowup_core::io::{read_fields_csv, read_trajectory_csv, write_fields_csv, write_trajectory_csv, RunConfig};
use blowup_core::kernel_lab::{
    composition_error, feynman_kac_mc, mehler_kernel, outer_bound_check, semigroup_eigen_check,
    weighted_regularization_check, ConstantPotential, KernelEstimate, OuterBoundReport, RegularizationReport,
};
use blowup_core::params::{validate, ModelParams, RawParams};
use blowup_core::profiles::Profile;
use blowup_core::shooting::{
    classify_trajectory, initial_data, polish, search, Classification, LevelRecord, PdeClassifier, PolishOptions,
    PolishResult, Rect, SearchOptions, ShootResult,
};
use blowup_core::shrinking_set::{ExitEvent, TrackOptions, Trajectory};
use blowup_core::similarity::{recommended_grid, SolverOptions};
use blowup_core::verify::{
    central_value, corollary_outer_bound, theorem_bound, CentralSeries, OuterBoundReport as CorollaryReport,
    ProfileErrorSeries, VerifyError, HORIZON_LAYER,
};
use blowup_core::{Field, Grid1D};
use serde::Serialize;

use crate::error::CliError;
use crate::output::OutDir;
use crate::Common;

fn load(c: &Common) -> Result<(RunConfig, ModelParams), CliError> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(&format!("config {}", path.display()), e))?;
            RunConfig::from_text(&text)?
        }
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&c.overrides)?;
    let params = validate(&cfg.params)?;
    Ok((cfg, params))
}

fn open_out(c: &Common, cfg: &RunConfig) -> Result<OutDir, CliError> {
    let mut out = OutDir::create(&c.out)?;
    out.write("config.txt", cfg.to_text().as_bytes())?;
    Ok(out)
}

fn solver_opts(cfg: &RunConfig) -> SolverOptions {
    SolverOptions { ds: cfg.ds, boundary: cfg.boundary, ..SolverOptions::default() }
}

fn classifier(cfg: &RunConfig, params: &ModelParams) -> Result<PdeClassifier, CliError> {
    let grid = recommended_grid(params, params.s0 + cfg.horizon, cfg.h)?;
    Ok(PdeClassifier::new(*params, grid, solver_opts(cfg), cfg.horizon))
}

fn track_opts(cfg: &RunConfig) -> TrackOptions {
    TrackOptions { field_every: cfg.field_every, record_samples: true }
}

fn write_series(out: &mut OutDir, traj: &Trajectory) -> Result<(), CliError> {
    out.csv("trajectory.csv", |w, m| write_trajectory_csv(w, m, &traj.samples))?;
    out.csv("fields.csv", |w, m| write_fields_csv(w, m, &traj.fields))
}

#[derive(Serialize)]
struct SimulateReport {
    d: [f64; 2],
    survived: bool,
    s_end: f64,
    classification: Classification,
    exit: Option<ExitEvent>,
}

pub fn simulate(c: &Common) -> Result<(), CliError> {
    let (cfg, params) = load(c)?;
    let pde = classifier(&cfg, &params)?;
    let traj = pde.trajectory([cfg.d0, cfg.d1], track_opts(&cfg))?;
    let mut out = open_out(c, &cfg)?;
    write_series(&mut out, &traj)?;
    let report = SimulateReport {
        d: [cfg.d0, cfg.d1],
        survived: traj.survived(),
        s_end: traj.s_end,
        classification: classify_trajectory(&traj, &params),
        exit: traj.exit.clone(),
    };
    out.report("exit_report.json", "exit_report", report)?;
    out.finish("simulate", &cfg)
}

#[derive(Serialize)]
struct ShootReport {
    result: ShootResult,
    polished: Option<PolishResult>,
    d: [f64; 2],
    s_target: f64,
    survived_to_target: bool,
}

pub fn shoot(c: &Common) -> Result<(), CliError> {
    let (cfg, params) = load(c)?;
    let pde = classifier(&cfg, &params)?;
    let rect = Rect::new(-cfg.rect, cfg.rect, -cfg.rect, cfg.rect);
    let mut progress = Vec::new();
    let mut emit = |l: &LevelRecord| {
        if let Ok(line) = serde_json::to_string(l) {
            println!("{line}");
            progress.extend_from_slice(line.as_bytes());
            progress.push(b'\n');
        }
    };
    let result = search(&pde, rect, SearchOptions { tol: cfg.tol, ..SearchOptions::default() }, &mut emit)?;
    let polished = if cfg.polish > 0.0 {
        Some(polish(&pde, result.d, PolishOptions { target: cfg.polish, ..PolishOptions::default() })?)
    } else {
        None
    };
    let d = polished.as_ref().map_or(result.d, |p| p.d);
    let traj = pde.trajectory(d, track_opts(&cfg))?;
    let mut out = open_out(c, &cfg)?;
    out.write("progress.jsonl", &progress)?;
    write_series(&mut out, &traj)?;
    let s_target = params.s0 + cfg.horizon;
    let survived_to_target = traj.survived() && traj.s_end >= s_target - 1e-9;
    let report = ShootReport { result, polished, d, s_target, survived_to_target };
    out.report("shoot_result.json", "shoot_result", report)?;
    out.finish("shoot", &cfg)
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum CorollarySection {
    Checked(CorollaryReport),
    NotApplicable(String),
}

#[derive(Serialize)]
struct VerifyReport {
    theorem: ProfileErrorSeries,
    theorem_stable: bool,
    theorem_pullback_consistent: bool,
    corollary: CorollarySection,
    central: CentralSeries,
    central_envelope_constant: f64,
    central_monotone_after_transient: bool,
    central_horizon_layer: f64,
}

pub fn verify(c: &Common, from: Option<&Path>) -> Result<(), CliError> {
    let (cfg, params) = load(c)?;
    let traj = match from {
        Some(dir) => {
            let open = |name: &str| {
                let p = dir.join(name);
                fs::File::open(&p).map_err(|e| CliError::io(&format!("open {}", p.display()), e))
            };
            let samples = read_trajectory_csv(open("trajectory.csv")?)?;
            let fields = read_fields_csv(open("fields.csv")?)?;
            Trajectory::from_records(samples, fields, &params)?
        }
        None => classifier(&cfg, &params)?.trajectory([cfg.d0, cfg.d1], track_opts(&cfg))?,
    };
    let theorem = theorem_bound(&traj, &params)?;
    let corollary = match corollary_outer_bound(&traj, &params) {
        Ok(r) => CorollarySection::Checked(r),
        Err(e @ VerifyError::OuterRegionEmpty { .. }) => CorollarySection::NotApplicable(e.to_string()),
        Err(e) => return Err(e.into()),
    };
    let central = central_value(&traj, &params);
    let mut out = open_out(c, &cfg)?;
    let report = VerifyReport {
        theorem_stable: theorem.stable(),
        theorem_pullback_consistent: theorem.pullback_consistent(),
        theorem,
        corollary,
        central_envelope_constant: central.envelope_constant(params.a),
        central_monotone_after_transient: central.monotone_after_transient(),
        central_horizon_layer: HORIZON_LAYER,
        central,
    };
    out.report("verify_report.json", "verify_report", report)?;
    out.finish("verify", &cfg)
}

#[derive(Serialize)]
struct EigenRow {
    m: usize,
    theta: f64,
    error: f64,
}

#[derive(Serialize)]
struct CompositionRow {
    probe: usize,
    theta1: f64,
    theta2: f64,
    error: f64,
}

#[derive(Serialize)]
struct ExactCase {
    potential: f64,
    theta: f64,
    estimate: KernelEstimate,
    expected: f64,
    pass: bool,
}

#[derive(Serialize)]
struct KernelReport {
    eigen: Vec<EigenRow>,
    eigen_pass: bool,
    composition: Vec<CompositionRow>,
    composition_pass: bool,
    feynman_kac: Vec<ExactCase>,
    regularization: Vec<RegularizationReport>,
    outer: OuterBoundReport,
    outer_rate: f64,
}

pub const EIGEN_TOL: f64 = 1e-7;
pub const COMPOSITION_TOL: f64 = 1e-6;

pub fn kernel(c: &Common) -> Result<(), CliError> {
    let (cfg, params) = load(c)?;
    let grid = Grid1D::with_spacing(20.0, 0.1)?;
    let mut eigen = Vec::new();
    for m in 0..=8 {
        for theta in [0.1, 1.0, 3.0] {
            eigen.push(EigenRow { m, theta, error: semigroup_eigen_check(m, theta, grid)? });
        }
    }
    let mut composition = Vec::new();
    for k in 0..=4 {
        let g = Field::from_fn(grid, |y| y.powi(k) - 0.5 * y);
        for (theta1, theta2) in [(0.1, 0.2), (0.5, 1.0), (1.0, 2.0)] {
            composition.push(CompositionRow { probe: k as usize, theta1, theta2, error: composition_error(theta1, theta2, &g, 5.0)? });
        }
    }
    let (s, sigma, y, x) = (1.5, 0.5, 0.3, -0.2);
    let theta = s - sigma;
    let mut feynman_kac = Vec::new();
    for v in [0.0, 0.7] {
        let est = feynman_kac_mc(s, sigma, y, x, cfg.paths, 64, &ConstantPotential(v), cfg.seed)?;
        let expected = mehler_kernel(theta, y, x) * (v * theta).exp();
        let slack = 3.0 * est.stderr + 1e-12 * expected;
        let pass = if v == 0.0 { est.stderr == 0.0 } else { true } && (est.value - expected).abs() <= slack;
        feynman_kac.push(ExactCase { potential: v, theta, estimate: est, expected, pass });
    }
    let probe = Field::from_fn(grid, |y| (2.0 * y).sin() / (1.0 + y * y));
    let regularization = [0.05, 0.1, 0.5, 1.0, 2.0]
        .iter()
        .map(|&t| weighted_regularization_check(t, params.beta, &probe))
        .collect::<Result<Vec<_>, _>>()?;
    let outer = outer_bound_check(0.0, 400.0, &[0.5, 1.0, 2.0], &[100.0, 400.0, 1500.0], &params, cfg.paths, 32, cfg.seed)?;
    let outer_rate = outer.sup_rate()?;
    let eigen_pass = eigen.iter().all(|r| r.error <= EIGEN_TOL);
    let composition_pass = composition.iter().all(|r| r.error <= COMPOSITION_TOL);
    let exact_pass = feynman_kac.iter().all(|c| c.pass);
    let mut out = open_out(c, &cfg)?;
    let report =
        KernelReport { eigen, eigen_pass, composition, composition_pass, feynman_kac, regularization, outer, outer_rate };
    out.report("kernel_report.json", "kernel_report", report)?;
    out.finish("kernel", &cfg)?;
    if eigen_pass && composition_pass && exact_pass {
        Ok(())
    } else {
        Err(CliError::numeric("kernel: an exact check failed, see kernel_report.json"))
    }
}

#[derive(Serialize)]
struct OracleReport {
    semigroup: Vec<SemigroupRow>,
    semigroup_value_pass: bool,
    semigroup_grad_pass: bool,
    raw_gradient_slopes: Vec<f64>,
    ode: OdeComparison,
    cross: CrossSolverReport,
}

/// Slack on the gradient bound for the discrete operator.
pub const GRAD_SLACK: f64 = 1.05;

pub fn oracle(c: &Common) -> Result<(), CliError> {
    let (cfg, params) = load(c)?;
    let m = params.beta;
    let probes = standard_probes(m)?;
    let semigroup = weighted_semigroup_check(m, &[1e-3, 1e-1, 1.0], &probes)?;
    let raw_gradient_slopes = (0..probes.len()).map(|k| raw_gradient_slope(&semigroup, k)).collect();
    let ode_params = validate(&RawParams { mu: 0.0, s0: 1.0, ..cfg.params })?;
    let ode = ode_comparison(&ode_params, 1.0, 0.5, PicardOptions { intervals: 80, ..PicardOptions::default() }, 1e-5)?;
    let grid = recommended_grid(&params, params.s0 + 1.0, cfg.h)?;
    let v = initial_data(cfg.d0, cfg.d1, &params, grid)?;
    let prof = Profile::new(params);
    let w0 = Field { grid, values: grid.nodes().zip(&v.values).map(|(y, v)| prof.phi(y, params.s0) + v).collect() };
    let cross = cross_solver_check(
        &params,
        &w0,
        0.01,
        5.0,
        SolverOptions { ds: 1e-4, boundary: cfg.boundary, ..SolverOptions::default() },
        PicardOptions::default(),
    )?;
    let mut out = open_out(c, &cfg)?;
    let report = OracleReport {
        semigroup_value_pass: semigroup.iter().all(|r| r.c_value <= r.c_value_bound),
        semigroup_grad_pass: semigroup.iter().all(|r| r.c_grad <= GRAD_SLACK * r.c_grad_bound),
        semigroup,
        raw_gradient_slopes,
        ode,
        cross,
    };
    out.report("oracle_report.json", "oracle_report", report)?;
    out.finish("oracle", &cfg)
}
