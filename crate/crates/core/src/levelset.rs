//! Level-set reconstruction of a piecewise-constant conductivity from one
//! voltage-current pair: projection onto {1,2}, smoothed ramp surrogate,
//! adjoint-based misfit gradient, curvature regularization, the Helmholtz
//! velocity solve and the damped evolution loop.

use crate::elliptic::{
    self, EllipticProblem, ForwardTrace, gamma1_weights, solve_helmholtz_neumann, trace_norm,
};
use crate::error::{Error, Result};
use crate::mesh::{self, BoundarySpec, ScalarField};
use crate::sparse::SolverKind;

pub const DEFAULT_ETA: f64 = 1e-8;
pub const GAMMA_LO: f64 = 1.0;
pub const GAMMA_HI: f64 = 2.0;

/// Level-set iteration state.
#[derive(Debug, Clone)]
pub struct LevelSetState {
    pub phi: ScalarField,
    pub phi0: ScalarField,
    pub eps: f64,
    pub beta: f64,
    pub alpha: f64,
    pub step: f64,
    pub iter: usize,
}

impl LevelSetState {
    pub fn new(phi0: ScalarField, eps: f64, beta: f64, alpha: f64, step: f64) -> Result<Self> {
        if eps <= 0.0 || beta <= 0.0 || step <= 0.0 || alpha < 0.0 {
            return Err(Error::InvalidInput(format!(
                "level-set parameters must be positive (eps={eps}, beta={beta}, step={step}, alpha={alpha})"
            )));
        }
        Ok(LevelSetState {
            phi: phi0.clone(),
            phi0,
            eps,
            beta,
            alpha,
            step,
            iter: 0,
        })
    }
}

/// One voltage-current measurement pair with its noise bound.
#[derive(Debug, Clone)]
pub struct InverseDatum {
    pub spec: BoundarySpec,
    /// Applied voltage as a full-grid field; read on Dirichlet nodes only
    /// and required to vanish on the measurement contact.
    pub u: ScalarField,
    pub y_delta: Vec<f64>,
    pub delta: f64,
}

/// Sharp projection: 2 where phi > 0, 1 where phi < 0, 1.5 at phi = 0.
pub fn project(phi: &ScalarField) -> ScalarField {
    phi.map(|t| {
        if t > 0.0 {
            2.0
        } else if t < 0.0 {
            1.0
        } else {
            1.5
        }
    })
}

/// Piecewise-linear ramp: 1 below -eps, 2 above eps, linear between.
#[inline]
pub fn ramp(t: f64, eps: f64) -> f64 {
    if t <= -eps {
        1.0
    } else if t >= eps {
        2.0
    } else {
        1.0 + (t + eps) / (2.0 * eps)
    }
}

/// Derivative of the ramp: 1/(2 eps) inside (-eps, eps), 0 outside.
#[inline]
pub fn ramp_deriv(t: f64, eps: f64) -> f64 {
    if t > -eps && t < eps {
        1.0 / (2.0 * eps)
    } else {
        0.0
    }
}

/// Smoothed projection and its derivative.
pub fn project_smooth(phi: &ScalarField, eps: f64) -> (ScalarField, ScalarField) {
    (phi.map(|t| ramp(t, eps)), phi.map(|t| ramp_deriv(t, eps)))
}

/// Residual trace on Gamma_1 and the adjoint misfit gradient (an L2 density
/// field). Performs exactly two elliptic solves (forward + adjoint).
pub fn adjoint_gradient(
    gamma: &ScalarField,
    datum: &InverseDatum,
    tol: f64,
    kind: SolverKind,
) -> Result<(Vec<f64>, ScalarField)> {
    let p = EllipticProblem::new(gamma.clone(), datum.spec, datum.u.clone());
    let g = elliptic::misfit_gradient(&p, &datum.y_delta, tol, kind)?;
    Ok((g.residual, g.gradient))
}

/// Curvature term: backward-difference divergence of the normalized
/// forward-difference gradient of P_eps(phi), with the gradient magnitude
/// floored at eta.
pub fn curvature(phi: &ScalarField, eps: f64, eta: f64) -> ScalarField {
    let grid = phi.grid;
    let p = phi.map(|t| ramp(t, eps));
    let mut fx = vec![0.0; grid.len()];
    let mut fy = vec![0.0; grid.len()];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let gx = if i + 1 < grid.nx {
                (p.at(i + 1, j) - p.at(i, j)) / grid.hx
            } else {
                0.0
            };
            let gy = if j + 1 < grid.ny {
                (p.at(i, j + 1) - p.at(i, j)) / grid.hy
            } else {
                0.0
            };
            let norm = (gx * gx + gy * gy).sqrt().max(eta);
            fx[grid.idx(i, j)] = gx / norm;
            fy[grid.idx(i, j)] = gy / norm;
        }
    }
    let mut out = ScalarField::zeros(grid);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let dx = if i > 0 {
                (fx[grid.idx(i, j)] - fx[grid.idx(i - 1, j)]) / grid.hx
            } else {
                0.0
            };
            let dy = if j > 0 {
                (fy[grid.idx(i, j)] - fy[grid.idx(i, j - 1)]) / grid.hy
            } else {
                0.0
            };
            out.set(i, j, dx + dy);
        }
    }
    out
}

/// Solves (Lap - I) v = P'_eps(phi) (w - beta P'_eps(phi) curvature(phi))
/// with homogeneous Neumann conditions (one elliptic solve).
pub fn velocity_solve(
    state: &LevelSetState,
    w: &ScalarField,
    tol: f64,
    kind: SolverKind,
) -> Result<ScalarField> {
    state.phi.same_grid(w)?;
    let (_, dp) = project_smooth(&state.phi, state.eps);
    let kappa = curvature(&state.phi, state.eps, DEFAULT_ETA);
    let rhs = ScalarField {
        grid: w.grid,
        values: w
            .values
            .iter()
            .zip(&dp.values)
            .zip(&kappa.values)
            .map(|((&wv, &d), &k)| d * (wv - state.beta * d * k))
            .collect(),
    };
    solve_helmholtz_neumann(&rhs, tol, kind)
}

/// Regularization part of the Tikhonov functional:
/// alpha (2 beta |P(phi)|_BV + ||phi - phi0||^2_{H1}).
fn regularizer(state: &LevelSetState) -> Result<f64> {
    let sharp = project(&state.phi);
    let bv = mesh::norms(&sharp)?.bv;
    let diff = state.phi.zip(&state.phi0, |a, b| a - b)?;
    let n = mesh::norms(&diff)?;
    let h1_sq = n.l2 * n.l2 + n.h1_semi * n.h1_semi;
    Ok(state.alpha * (2.0 * state.beta * bv + h1_sq))
}

/// Evaluates G_alpha = ||F(P_eps(phi)) - Y||^2_Y + regularizer (one solve).
pub fn tikhonov_value(
    state: &LevelSetState,
    datum: &InverseDatum,
    tol: f64,
    kind: SolverKind,
) -> Result<f64> {
    let (gamma, _) = project_smooth(&state.phi, state.eps);
    let p = EllipticProblem::new(gamma, datum.spec, datum.u.clone());
    let fwd = elliptic::forward_trace(&p, tol, kind)?;
    let weights = gamma1_weights(&state.phi.grid, &datum.spec);
    let r: Vec<f64> = fwd
        .trace
        .iter()
        .zip(&datum.y_delta)
        .map(|(t, y)| t - y)
        .collect();
    let rn = trace_norm(&r, &weights);
    Ok(rn * rn + regularizer(state)?)
}

/// How an evolution run terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Discrepancy criterion met: residual norm below the stop threshold.
    Converged,
    /// Iteration budget exhausted.
    MaxIter,
    /// Backtracking exhausted without an objective decrease.
    Stagnated,
}

/// Per-iterate record of the evolution.
#[derive(Debug, Clone, Copy)]
pub struct IterRecord {
    pub iter: usize,
    pub residual_norm: f64,
    pub g_alpha: f64,
    /// Misclassified area fraction against the truth field (NaN if no truth
    /// was supplied).
    pub misclassified: f64,
    /// Cumulative elliptic solve count after this iterate.
    pub bvp_solves: u64,
}

pub struct EvolveResult {
    pub state: LevelSetState,
    pub history: Vec<IterRecord>,
    pub stop: StopReason,
}

pub struct EvolveOptions {
    pub max_iter: usize,
    pub stop_tol: f64,
    pub tol: f64,
    pub kind: SolverKind,
    /// Optional ground-truth conductivity for misclassification reporting.
    pub truth: Option<ScalarField>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            max_iter: 500,
            stop_tol: 1e-10,
            tol: elliptic::DEFAULT_LINEAR_TOL,
            kind: SolverKind::Auto,
            truth: None,
        }
    }
}

/// Area fraction on which the sharp projections of two fields disagree.
pub fn misclassified_fraction(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.same_grid(b)?;
    let g = a.grid;
    let classify = |v: f64| v > 1.5;
    let mut bad = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            if classify(a.at(i, j)) != classify(b.at(i, j)) {
                bad += g.cell_wx(i) * g.cell_wy(j);
            }
        }
    }
    Ok(bad)
}

struct Evaluation {
    fwd: ForwardTrace,
    residual_norm: f64,
    g_alpha: f64,
}

fn evaluate(
    state: &LevelSetState,
    phi: &ScalarField,
    datum: &InverseDatum,
    weights: &[f64],
    opts: &EvolveOptions,
) -> Result<Evaluation> {
    let gamma = phi.map(|t| ramp(t, state.eps));
    let p = EllipticProblem::new(gamma, datum.spec, datum.u.clone());
    let fwd = elliptic::forward_trace(&p, opts.tol, opts.kind)?;
    let r: Vec<f64> = fwd
        .trace
        .iter()
        .zip(&datum.y_delta)
        .map(|(t, y)| t - y)
        .collect();
    let residual_norm = trace_norm(&r, weights);
    let mut probe = state.clone();
    probe.phi = phi.clone();
    let g_alpha = residual_norm * residual_norm + regularizer(&probe)?;
    Ok(Evaluation {
        fwd,
        residual_norm,
        g_alpha,
    })
}

const MAX_BACKTRACKS: usize = 20;

/// Runs the level-set evolution phi_{k+1} = phi_k + tau v_k with objective
/// backtracking. In steady state each iteration costs exactly three
/// elliptic solves: the adjoint, the velocity solve, and the forward solve
/// of the accepted trial (which is reused as the next iterate's forward
/// solution).
pub fn evolve(
    mut state: LevelSetState,
    datum: &InverseDatum,
    opts: &EvolveOptions,
) -> Result<EvolveResult> {
    state.phi.same_grid(&datum.u)?;
    let grid = state.phi.grid;
    let weights = gamma1_weights(&grid, &datum.spec);
    if datum.y_delta.len() != weights.len() {
        return Err(Error::InvalidInput(format!(
            "measured trace has {} entries, contact has {} nodes",
            datum.y_delta.len(),
            weights.len()
        )));
    }
    let threshold = opts.stop_tol.max(1.1 * datum.delta);

    let mut cur = evaluate(&state, &state.phi, datum, &weights, opts)?;
    let mut history = Vec::new();
    let record = |state: &LevelSetState, ev: &Evaluation, history: &mut Vec<IterRecord>| {
        let mis = match &opts.truth {
            Some(t) => {
                misclassified_fraction(&project(&state.phi), t).unwrap_or(f64::NAN)
            }
            None => f64::NAN,
        };
        history.push(IterRecord {
            iter: state.iter,
            residual_norm: ev.residual_norm,
            g_alpha: ev.g_alpha,
            misclassified: mis,
            bvp_solves: elliptic::bvp_solve_count(),
        });
    };
    record(&state, &cur, &mut history);

    let mut stop = StopReason::MaxIter;
    while state.iter < opts.max_iter {
        if cur.residual_norm <= threshold {
            stop = StopReason::Converged;
            break;
        }
        // adjoint gradient reusing the cached forward solution
        let gamma = state.phi.map(|t| ramp(t, state.eps));
        let p = EllipticProblem::new(gamma, datum.spec, datum.u.clone());
        let grad =
            elliptic::gradient_from_forward(&p, &cur.fwd, &datum.y_delta, opts.tol, opts.kind)?;
        let v = velocity_solve(&state, &grad.gradient, opts.tol, opts.kind)?;

        let mut tau = state.step;
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            let mut phi_try = state.phi.clone();
            phi_try.axpy(tau, &v)?;
            let ev = evaluate(&state, &phi_try, datum, &weights, opts)?;
            if ev.g_alpha <= cur.g_alpha {
                accepted = Some((phi_try, ev));
                break;
            }
            tau *= 0.5;
        }
        match accepted {
            Some((phi_new, ev)) => {
                state.phi = phi_new;
                // remember the working step so later iterations accept the
                // first trial (steady-state cost: three solves)
                state.step = tau;
                state.iter += 1;
                cur = ev;
                record(&state, &cur, &mut history);
            }
            None => {
                stop = StopReason::Stagnated;
                break;
            }
        }
    }
    if stop == StopReason::MaxIter && cur.residual_norm <= threshold {
        stop = StopReason::Converged;
    }
    Ok(EvolveResult {
        state,
        history,
        stop,
    })
}

/// Signed distance to the straight line through (0, ya) and (1, yb),
/// positive above the line — the default initial guess.
pub fn line_signed_distance(grid: crate::mesh::Grid, ya: f64, yb: f64) -> ScalarField {
    let slope = yb - ya;
    let norm = (1.0 + slope * slope).sqrt();
    ScalarField::from_fn(grid, |x, y| (y - (ya + slope * x)) / norm)
}
