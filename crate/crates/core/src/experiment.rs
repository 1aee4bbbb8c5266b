//! Experiment orchestration: dataset synthesis from a config, dispatch to
//! the three reconstruction methods, and deterministic CSV/PGM/summary
//! artifacts.

use std::fmt::Write as _;
use std::time::Instant;

use crate::config::{ExperimentConfig, Method, PhantomKind};
use crate::elliptic::{self, forward_trace, EllipticProblem, FaceCoefficients};
use crate::error::{Error, Result};
use crate::kaczmarz::{lk_run, project_gamma, DtNDataset, LkOptions, LkResult, VoltageBasis};
use crate::lattice::{
    lattice_solve, read_lattice_string, recover_diagonals, simulate_sweep_data, DetectorData,
    Lattice, LatticeLayout, Recovery,
};
use crate::levelset::{
    evolve, line_signed_distance, project_smooth, EvolveOptions, EvolveResult, InverseDatum,
    IterRecord, LevelSetState, StopReason,
};
use crate::mesh::{read_field, BoundaryLabel, BoundarySpec, Grid, ScalarField};
use crate::metrics::{quality_metrics, QualityMetrics};
use crate::noise::{apply_noise, Lcg};
use crate::sparse::SolverKind;

/// Phantom description resolved from a config (reads the custom field file
/// if one is named).
pub fn phantom_from_config(cfg: &ExperimentConfig) -> Result<crate::phantom::PhantomSpec> {
    use crate::phantom::PhantomSpec;
    let spec = match cfg.phantom {
        PhantomKind::Linear => PhantomSpec::LinearJunction {
            ya: cfg.phantom_ya,
            yb: cfg.phantom_yb,
        },
        PhantomKind::Analytic => PhantomSpec::AnalyticJunction {
            c0: cfg.phantom_c0,
            c1: cfg.phantom_c1,
        },
        PhantomKind::Custom => {
            let path = cfg
                .phantom_file
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("custom phantom requires phantom_file".into()))?;
            PhantomSpec::CustomField(read_field(std::path::Path::new(path))?)
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// Applied voltage for the single-pair experiments: 1 on the source
/// contact, 0 elsewhere.
pub fn unit_source_voltage(grid: Grid, spec: &BoundarySpec) -> ScalarField {
    let mut u = ScalarField::zeros(grid);
    for (i, j) in spec.boundary_nodes(&grid, BoundaryLabel::SourceContact) {
        u.set(i, j, 1.0);
    }
    u
}

/// Synthesized single-measurement problem for the level-set method.
pub struct LevelSetSetup {
    pub datum: InverseDatum,
    pub gamma_truth: ScalarField,
    pub phi_truth: Option<ScalarField>,
    pub clean_trace: Vec<f64>,
}

pub fn synthesize_levelset_datum(cfg: &ExperimentConfig) -> Result<LevelSetSetup> {
    cfg.validate()?;
    let grid = Grid::new(cfg.nx, cfg.ny)?;
    let spec = BoundarySpec::source_top_measure_bottom();
    let phantom = phantom_from_config(cfg)?;
    let gamma_truth = phantom.gamma_field(grid)?;
    let u = unit_source_voltage(grid, &spec);
    let faces = phantom
        .face_coefficients(grid)
        .unwrap_or(FaceCoefficients::FromNodes);
    let p = EllipticProblem::new(gamma_truth.clone(), spec, u.clone()).with_faces(faces);
    let fwd = forward_trace(&p, 1e-10, SolverKind::Auto)?;
    let (y_delta, delta) = if cfg.noise_level > 0.0 {
        let mut rng = Lcg::new(cfg.seed.unwrap());
        apply_noise(&fwd.trace, cfg.noise_level, &mut rng)
    } else {
        (fwd.trace.clone(), 0.0)
    };
    Ok(LevelSetSetup {
        datum: InverseDatum {
            spec,
            u,
            y_delta,
            delta,
        },
        gamma_truth,
        phi_truth: phantom.phi_field(grid),
        clean_trace: fwd.trace,
    })
}

/// Synthesized multi-source dataset for Landweber-Kaczmarz. The noise
/// bound is taken over the whole dataset (sup norm across all traces).
pub fn synthesize_lk_dataset(cfg: &ExperimentConfig) -> Result<(DtNDataset, ScalarField)> {
    cfg.validate()?;
    let grid = Grid::new(cfg.nx, cfg.ny)?;
    let spec = BoundarySpec::source_top_measure_bottom();
    let phantom = phantom_from_config(cfg)?;
    let gamma_truth = phantom.gamma_field(grid)?;
    let basis = VoltageBasis::new(cfg.n_sources, cfg.basis_half_width)?;
    let faces = phantom
        .face_coefficients(grid)
        .unwrap_or(FaceCoefficients::FromNodes);
    let mut traces = Vec::with_capacity(cfg.n_sources);
    for j in 1..=cfg.n_sources {
        let u = basis.voltage_field(grid, &spec, j)?;
        let p = EllipticProblem::new(gamma_truth.clone(), spec, u)
            .with_faces(faces.clone());
        traces.push(forward_trace(&p, 1e-10, SolverKind::Auto)?.trace);
    }
    let mut delta = 0.0;
    if cfg.noise_level > 0.0 {
        let sup = traces
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        delta = cfg.noise_level * sup;
        let mut rng = Lcg::new(cfg.seed.unwrap());
        for t in &mut traces {
            for v in t.iter_mut() {
                *v += delta * rng.symmetric();
            }
        }
    }
    Ok((
        DtNDataset {
            spec,
            basis,
            traces,
            delta,
        },
        gamma_truth,
    ))
}

/// Seeded truth lattice with w uniform in (0.2, 0.8), or the named file.
pub fn lattice_from_config(cfg: &ExperimentConfig) -> Result<Lattice> {
    if let Some(path) = &cfg.lattice_file {
        let text = std::fs::read_to_string(path)?;
        return read_lattice_string(&text);
    }
    let seed = cfg
        .seed
        .ok_or_else(|| Error::InvalidConfig("lattice run needs lattice_file or seed".into()))?;
    let mut rng = Lcg::new(seed);
    let n = cfg.lattice_n;
    let w = (0..n * n).map(|_| 0.2 + 0.6 * rng.uniform()).collect();
    Lattice::new(n, w, cfg.lattice_eps)
}

/// Method-specific raw results.
pub enum MethodOutput {
    LevelSet(EvolveResult),
    Lk(LkResult),
    Lattice {
        truth: Lattice,
        recovery: Recovery,
        max_abs_error: f64,
    },
}

pub struct ExperimentReport {
    pub history_csv: String,
    /// `key = value` summary lines (includes the wall-time field; all other
    /// artifacts are byte-deterministic).
    pub summary: String,
    /// Raw final conductivity iterate, when the method produces one.
    pub final_gamma: Option<ScalarField>,
    /// Sharp {1, 2} classification of the final iterate.
    pub final_projected: Option<ScalarField>,
    pub gamma_truth: Option<ScalarField>,
    pub metrics: Option<QualityMetrics>,
    pub output: MethodOutput,
    pub solve_count: u64,
    pub wall_secs: f64,
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.12e}")
    }
}

pub fn levelset_history_csv(history: &[IterRecord]) -> String {
    let mut s = String::from("iter,residual_l2,G_alpha,misclassified_fraction\n");
    for r in history {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.iter,
            fmt(r.residual_norm),
            fmt(r.g_alpha),
            fmt(r.misclassified)
        );
    }
    s
}

pub fn lk_history_csv(result: &LkResult) -> String {
    let mut s =
        String::from("iter,residual_l2,G_alpha,misclassified_fraction,cycle,component_j\n");
    for r in &result.history {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.step,
            fmt(r.residual_norm),
            fmt(r.residual_norm * r.residual_norm),
            fmt(r.misclassified),
            r.cycle,
            r.component_j
        );
    }
    s
}

pub fn recovery_csv(truth: &Lattice, recovery: &Recovery) -> String {
    let mut s = String::from("p,det_D_p,max_abs_error\n");
    for step in &recovery.steps {
        let err = recovery
            .w
            .iter()
            .filter(|((i, j), _)| i + j == step.p + 1)
            .map(|&((i, j), w)| (w - truth.weight(i, j)).abs())
            .fold(0.0_f64, f64::max);
        let _ = writeln!(s, "{},{},{}", step.p, fmt(step.det), fmt(err));
    }
    s
}

/// Measurement dump for `lattice solve`: one row per adjacent-layer site.
pub fn lattice_measurements_csv(l: &Lattice, layout: &LatticeLayout, detectors: &[(usize, usize)]) -> Result<String> {
    let mut s = String::from("detector,site_i,site_j,value\n");
    for (k, &d) in detectors.iter().enumerate() {
        let sol = lattice_solve(l, layout, d)?;
        for ((i, j), v) in crate::lattice::measurements(&sol, layout) {
            let _ = writeln!(s, "{},{},{},{}", k + 1, i, j, fmt(v));
        }
    }
    Ok(s)
}

/// PGM (P2) export: value 1 maps to 0, value 2 to 255, linearly between,
/// clamped. Rows run top to bottom.
pub fn write_pgm_string(f: &ScalarField) -> String {
    let g = &f.grid;
    let mut s = format!("P2\n{} {}\n255\n", g.nx, g.ny);
    for j in (0..g.ny).rev() {
        for i in 0..g.nx {
            if i > 0 {
                s.push(' ');
            }
            let pix = (((f.at(i, j) - 1.0) * 255.0).round()).clamp(0.0, 255.0) as u32;
            let _ = write!(s, "{pix}");
        }
        s.push('\n');
    }
    s
}

fn stop_str(stop: &StopReason) -> &'static str {
    match stop {
        StopReason::Converged => "converged",
        StopReason::MaxIter => "max_iter",
        StopReason::Stagnated => "stagnated",
    }
}

/// Runs the experiment a config describes and bundles the artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    elliptic::reset_bvp_solve_count();
    match cfg.method {
        Method::LevelSet => {
            let setup = synthesize_levelset_datum(cfg)?;
            let grid = setup.gamma_truth.grid;
            let eps = cfg.epsilon.unwrap_or(2.0 / (cfg.nx as f64 - 1.0));
            let phi0 = line_signed_distance(grid, 0.5, 0.5);
            let state = LevelSetState::new(phi0, eps, cfg.beta, cfg.alpha, cfg.tau)?;
            let opts = EvolveOptions {
                max_iter: cfg.max_iter,
                stop_tol: cfg.stop_tol,
                truth: Some(setup.gamma_truth.clone()),
                ..EvolveOptions::default()
            };
            let solves0 = elliptic::bvp_solve_count();
            let result = evolve(state, &setup.datum, &opts)?;
            let solve_count = elliptic::bvp_solve_count() - solves0;
            let (gamma, _) = project_smooth(&result.state.phi, result.state.eps);
            let projected = crate::levelset::project(&result.state.phi);
            let m = quality_metrics(&projected, &setup.gamma_truth)?;
            let last = result.history.last().expect("history is never empty");
            let mut summary = String::new();
            let _ = writeln!(summary, "method = levelset");
            let _ = writeln!(summary, "iterations = {}", last.iter);
            let _ = writeln!(summary, "stop = {}", stop_str(&result.stop));
            let _ = writeln!(summary, "solve_count = {solve_count}");
            let _ = writeln!(summary, "delta = {}", fmt(setup.datum.delta));
            let _ = writeln!(summary, "residual_l2 = {}", fmt(last.residual_norm));
            let _ = writeln!(summary, "G_alpha = {}", fmt(last.g_alpha));
            let _ = writeln!(summary, "misclassified_fraction = {}", fmt(m.misclassified));
            let _ = writeln!(summary, "l2_rel = {}", fmt(m.l2_rel));
            let _ = writeln!(summary, "jaccard = {}", fmt(m.jaccard));
            let wall_secs = start.elapsed().as_secs_f64();
            let _ = writeln!(summary, "wall_secs = {wall_secs:.3}");
            Ok(ExperimentReport {
                history_csv: levelset_history_csv(&result.history),
                summary,
                final_gamma: Some(gamma),
                final_projected: Some(projected),
                gamma_truth: Some(setup.gamma_truth),
                metrics: Some(m),
                output: MethodOutput::LevelSet(result),
                solve_count,
                wall_secs,
            })
        }
        Method::Lk => {
            let (dataset, gamma_truth) = synthesize_lk_dataset(cfg)?;
            let grid = gamma_truth.grid;
            let gamma0 = ScalarField::constant(grid, 1.5);
            let opts = LkOptions {
                omega: cfg.omega,
                strip_width: cfg.strip_width,
                smooth: cfg.smooth,
                stop_tol: cfg.stop_tol,
                truth: Some(gamma_truth.clone()),
                ..LkOptions::default()
            };
            let solves0 = elliptic::bvp_solve_count();
            let result = lk_run(&gamma0, &dataset, cfg.max_iter, &opts)?;
            let solve_count = elliptic::bvp_solve_count() - solves0;
            let projected = project_gamma(&result.gamma);
            let m = quality_metrics(&projected, &gamma_truth)?;
            let mut summary = String::new();
            let _ = writeln!(summary, "method = lk");
            let _ = writeln!(summary, "cycles = {}", result.cycle_residuals.len());
            let _ = writeln!(summary, "steps = {}", result.history.len());
            let _ = writeln!(summary, "stop = {}", stop_str(&result.stop));
            let _ = writeln!(summary, "solve_count = {solve_count}");
            let _ = writeln!(summary, "omega = {}", fmt(result.omega));
            let _ = writeln!(summary, "delta = {}", fmt(dataset.delta));
            let _ = writeln!(
                summary,
                "residual_l2 = {}",
                fmt(result.cycle_residuals.last().copied().unwrap_or(f64::NAN))
            );
            let _ = writeln!(summary, "misclassified_fraction = {}", fmt(m.misclassified));
            let _ = writeln!(summary, "l2_rel = {}", fmt(m.l2_rel));
            let _ = writeln!(summary, "jaccard = {}", fmt(m.jaccard));
            let wall_secs = start.elapsed().as_secs_f64();
            let _ = writeln!(summary, "wall_secs = {wall_secs:.3}");
            Ok(ExperimentReport {
                history_csv: lk_history_csv(&result),
                summary,
                final_gamma: Some(result.gamma.clone()),
                final_projected: Some(projected),
                gamma_truth: Some(gamma_truth),
                metrics: Some(m),
                output: MethodOutput::Lk(result),
                solve_count,
                wall_secs,
            })
        }
        Method::Lattice => {
            let truth = lattice_from_config(cfg)?;
            let layout = LatticeLayout::default();
            let data: Vec<DetectorData> = simulate_sweep_data(&truth, &layout, cfg.p_prime)?;
            let recovery = recover_diagonals(&data, cfg.p_prime, truth.n)?;
            let max_abs_error = recovery
                .w
                .iter()
                .map(|&((i, j), w)| (w - truth.weight(i, j)).abs())
                .fold(0.0_f64, f64::max);
            let history_csv = recovery_csv(&truth, &recovery);
            let mut summary = String::new();
            let _ = writeln!(summary, "method = lattice");
            let _ = writeln!(summary, "lattice_n = {}", truth.n);
            let _ = writeln!(summary, "p_prime = {}", cfg.p_prime);
            let _ = writeln!(summary, "recovered_sites = {}", recovery.w.len());
            let _ = writeln!(summary, "max_abs_error = {}", fmt(max_abs_error));
            let wall_secs = start.elapsed().as_secs_f64();
            let _ = writeln!(summary, "wall_secs = {wall_secs:.3}");
            Ok(ExperimentReport {
                history_csv,
                summary,
                final_gamma: None,
                final_projected: None,
                gamma_truth: None,
                metrics: None,
                output: MethodOutput::Lattice {
                    truth,
                    recovery,
                    max_abs_error,
                },
                solve_count: 0,
                wall_secs,
            })
        }
    }
}
