//! Forward models: variable-coefficient elliptic solver with mixed boundary
//! conditions, the voltage-to-current (DtN) map, the equilibrium Poisson
//! solve and the doping <-> conductivity <-> potential transforms.
//!
//! Discretization: 5-point finite volumes on the node-centered grid with
//! dual cells (half cells along the boundary). Face conductivities are the
//! harmonic mean of the two adjacent nodal values, so the scheme is exact
//! for layered media whose jumps sit on the dual-cell interfaces.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryLabel, BoundarySpec, Grid, ScalarField};
use crate::sparse::{SolverKind, SparseSystem};

thread_local! {
    static BVP_SOLVES: Cell<u64> = const { Cell::new(0) };
}

/// Number of elliptic boundary-value solves performed by this thread.
pub fn bvp_solve_count() -> u64 {
    BVP_SOLVES.with(|c| c.get())
}

pub fn reset_bvp_solve_count() {
    BVP_SOLVES.with(|c| c.set(0));
}

fn count_solve() {
    BVP_SOLVES.with(|c| c.set(c.get() + 1));
}

pub const DEFAULT_LINEAR_TOL: f64 = 1e-10;
pub const DEFAULT_NONLINEAR_TOL: f64 = 1e-9;

#[inline]
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Face conductivities, either derived from nodal values or supplied
/// explicitly (e.g. exact face averages of an analytic phantom).
#[derive(Debug, Clone)]
pub enum FaceCoefficients {
    /// Harmonic mean of the two adjacent nodal gamma values.
    FromNodes,
    /// Explicit face values: `x_faces[j*(nx-1)+i]` between nodes (i,j) and
    /// (i+1,j); `y_faces[j*nx+i]` between (i,j) and (i,j+1).
    Explicit {
        x_faces: Vec<f64>,
        y_faces: Vec<f64>,
    },
}

impl FaceCoefficients {
    fn x_face(&self, gamma: &ScalarField, i: usize, j: usize) -> f64 {
        match self {
            FaceCoefficients::FromNodes => {
                harmonic_mean(gamma.at(i, j), gamma.at(i + 1, j))
            }
            FaceCoefficients::Explicit { x_faces, .. } => {
                x_faces[j * (gamma.grid.nx - 1) + i]
            }
        }
    }

    fn y_face(&self, gamma: &ScalarField, i: usize, j: usize) -> f64 {
        match self {
            FaceCoefficients::FromNodes => {
                harmonic_mean(gamma.at(i, j), gamma.at(i, j + 1))
            }
            FaceCoefficients::Explicit { y_faces, .. } => y_faces[j * gamma.grid.nx + i],
        }
    }
}

/// Mixed Dirichlet/Neumann conductivity problem
/// div(gamma grad u) = 0, u given on the contacts, u_nu = 0 elsewhere.
#[derive(Debug, Clone)]
pub struct EllipticProblem {
    pub gamma: ScalarField,
    pub spec: BoundarySpec,
    /// Full-grid array; only entries at Dirichlet boundary nodes are read.
    pub dirichlet: ScalarField,
    /// Admissible conductivity range (gamma_minus, gamma_plus).
    pub gamma_bounds: (f64, f64),
    pub faces: FaceCoefficients,
}

impl EllipticProblem {
    pub fn new(gamma: ScalarField, spec: BoundarySpec, dirichlet: ScalarField) -> Self {
        EllipticProblem {
            gamma,
            spec,
            dirichlet,
            gamma_bounds: (1.0, 2.0),
            faces: FaceCoefficients::FromNodes,
        }
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.gamma_bounds = (lo, hi);
        self
    }

    pub fn with_faces(mut self, faces: FaceCoefficients) -> Self {
        self.faces = faces;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.gamma.same_grid(&self.dirichlet)?;
        self.spec.validate(&self.gamma.grid)?;
        let (lo, hi) = self.gamma_bounds;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidInput(format!(
                "bad gamma bounds ({lo}, {hi})"
            )));
        }
        let slack = 1e-12 * hi.max(1.0);
        for (k, &g) in self.gamma.values.iter().enumerate() {
            if g < lo - slack || g > hi + slack {
                return Err(Error::InvalidInput(format!(
                    "gamma value {g} at node {k} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Assembled linear system together with the node <-> unknown numbering.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub system: SparseSystem,
    /// unknown index per flattened node, `usize::MAX` for eliminated nodes.
    pub unknown_of: Vec<usize>,
    /// flattened node index per unknown.
    pub node_of: Vec<usize>,
}

const NOT_UNKNOWN: usize = usize::MAX;

fn numbering(grid: &Grid, spec: &BoundarySpec) -> (Vec<usize>, Vec<usize>) {
    let mut unknown_of = vec![NOT_UNKNOWN; grid.len()];
    let mut node_of = Vec::new();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let dirichlet = matches!(
                spec.node_label(grid, i, j),
                Some(BoundaryLabel::SourceContact) | Some(BoundaryLabel::MeasureContact)
            );
            if !dirichlet {
                unknown_of[grid.idx(i, j)] = node_of.len();
                node_of.push(grid.idx(i, j));
            }
        }
    }
    (unknown_of, node_of)
}

/// All faces of the grid as (node_a, node_b, geometric transmissibility
/// transverse_width/dist, face axis and lower-left face index).
fn for_each_face(grid: &Grid, mut f: impl FnMut(usize, usize, usize, usize, bool, f64)) {
    for j in 0..grid.ny {
        let wy = grid.cell_wy(j);
        for i in 0..grid.nx - 1 {
            f(i, j, i + 1, j, true, wy / grid.hx);
        }
    }
    for j in 0..grid.ny - 1 {
        for i in 0..grid.nx {
            f(i, j, i, j + 1, false, grid.cell_wx(i) / grid.hy);
        }
    }
}

/// Assembles the 5-point finite-volume system. Dirichlet nodes are
/// eliminated into the right-hand side; the unknowns are interior plus
/// insulating-boundary nodes. The result is checked for diagonal dominance.
pub fn assemble(p: &EllipticProblem) -> Result<Assembly> {
    p.validate()?;
    let grid = p.gamma.grid;
    let (unknown_of, node_of) = numbering(&grid, &p.spec);
    let mut system = SparseSystem::new(node_of.len());
    for_each_face(&grid, |ia, ja, ib, jb, x_axis, geo| {
        let gf = if x_axis {
            p.faces.x_face(&p.gamma, ia, ja)
        } else {
            p.faces.y_face(&p.gamma, ia, ja)
        };
        let t = gf * geo;
        let a = unknown_of[grid.idx(ia, ja)];
        let b = unknown_of[grid.idx(ib, jb)];
        match (a != NOT_UNKNOWN, b != NOT_UNKNOWN) {
            (true, true) => {
                system.add(a, a, t);
                system.add(b, b, t);
                system.add(a, b, -t);
                system.add(b, a, -t);
            }
            (true, false) => {
                system.add(a, a, t);
                system.rhs[a] += t * p.dirichlet.at(ib, jb);
            }
            (false, true) => {
                system.add(b, b, t);
                system.rhs[b] += t * p.dirichlet.at(ia, ja);
            }
            (false, false) => {}
        }
    });
    system.check_diagonally_dominant()?;
    Ok(Assembly {
        system,
        unknown_of,
        node_of,
    })
}

/// Solves an assembled mixed boundary-value problem and returns the full
/// nodal solution field (Dirichlet values included). Increments the
/// per-thread BVP solve counter.
pub fn solve_bvp(p: &EllipticProblem, tol: f64, kind: SolverKind) -> Result<ScalarField> {
    let asm = assemble(p)?;
    count_solve();
    let x = asm.system.solve(tol, kind)?;
    Ok(expand_solution(p, &asm, &x))
}

fn expand_solution(p: &EllipticProblem, asm: &Assembly, x: &[f64]) -> ScalarField {
    let grid = p.gamma.grid;
    let mut u = p.dirichlet.clone();
    for (k, &node) in asm.node_of.iter().enumerate() {
        u.values[node] = x[k];
    }
    let _ = grid;
    u
}

/// A Gamma_1 boundary node together with its inward normal neighbor and the
/// quadrature weight of the node on the contact.
#[derive(Debug, Clone, Copy)]
pub struct TraceNode {
    pub boundary: (usize, usize),
    pub inward: (usize, usize),
    /// Normal spacing (hy for horizontal contacts, hx for vertical ones).
    pub h_normal: f64,
    /// Tangential dual-cell width (trapezoid quadrature weight).
    pub weight: f64,
    /// True when the face is a y-face (horizontal contact).
    pub y_face: bool,
}

/// Trace geometry for a contact label, in boundary_nodes order.
pub fn trace_nodes(grid: &Grid, spec: &BoundarySpec, label: BoundaryLabel) -> Vec<TraceNode> {
    spec.boundary_nodes(grid, label)
        .into_iter()
        .map(|(i, j)| {
            // the owning edge is the first one (bottom, top, left, right)
            // whose raw label matches the resolved label of the node
            if j == 0 && spec.edge_label_at(crate::mesh::Edge::Bottom, grid.x(i)) == label {
                TraceNode {
                    boundary: (i, j),
                    inward: (i, 1),
                    h_normal: grid.hy,
                    weight: grid.cell_wx(i),
                    y_face: true,
                }
            } else if j == grid.ny - 1
                && spec.edge_label_at(crate::mesh::Edge::Top, grid.x(i)) == label
            {
                TraceNode {
                    boundary: (i, j),
                    inward: (i, grid.ny - 2),
                    h_normal: grid.hy,
                    weight: grid.cell_wx(i),
                    y_face: true,
                }
            } else if i == 0 && spec.edge_label_at(crate::mesh::Edge::Left, grid.y(j)) == label
            {
                TraceNode {
                    boundary: (i, j),
                    inward: (1, j),
                    h_normal: grid.hx,
                    weight: grid.cell_wy(j),
                    y_face: false,
                }
            } else {
                TraceNode {
                    boundary: (i, j),
                    inward: (grid.nx - 2, j),
                    h_normal: grid.hx,
                    weight: grid.cell_wy(j),
                    y_face: false,
                }
            }
        })
        .collect()
}

fn face_gamma_for(p: &EllipticProblem, t: &TraceNode) -> f64 {
    let (bi, bj) = t.boundary;
    let (ai, aj) = t.inward;
    if t.y_face {
        let j = bj.min(aj);
        p.faces.y_face(&p.gamma, bi, j)
    } else {
        let i = bi.min(ai);
        p.faces.x_face(&p.gamma, i, bj)
    }
}

fn extract_trace(p: &EllipticProblem, u: &ScalarField, nodes: &[TraceNode]) -> Vec<f64> {
    nodes
        .iter()
        .map(|t| {
            let ub = u.at(t.boundary.0, t.boundary.1);
            let ua = u.at(t.inward.0, t.inward.1);
            face_gamma_for(p, t) * (ub - ua) / t.h_normal
        })
        .collect()
}

/// Quadrature weights of the Gamma_1 trace (discrete L2 on the contact).
pub fn gamma1_weights(grid: &Grid, spec: &BoundarySpec) -> Vec<f64> {
    trace_nodes(grid, spec, BoundaryLabel::MeasureContact)
        .iter()
        .map(|t| t.weight)
        .collect()
}

pub fn trace_inner(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(w)
        .map(|((x, y), wi)| wi * x * y)
        .sum()
}

pub fn trace_norm(a: &[f64], w: &[f64]) -> f64 {
    trace_inner(a, a, w).sqrt()
}

/// Applies the DtN map: solves the mixed problem for the applied voltage and
/// returns the current density gamma * du/dnu (outward normal) at each
/// Gamma_1 node, via the flux-consistent one-sided difference.
pub fn dtn_apply(p: &EllipticProblem, tol: f64, kind: SolverKind) -> Result<Vec<f64>> {
    let grid = p.gamma.grid;
    for (i, j) in p.spec.boundary_nodes(&grid, BoundaryLabel::MeasureContact) {
        if p.dirichlet.at(i, j).abs() > 1e-12 {
            return Err(Error::InvalidInput(
                "applied voltage must vanish on the measurement contact".into(),
            ));
        }
    }
    let u = solve_bvp(p, tol, kind)?;
    let nodes = trace_nodes(&grid, &p.spec, BoundaryLabel::MeasureContact);
    Ok(extract_trace(p, &u, &nodes))
}

/// Total weighted current through a contact (for conservation checks).
pub fn contact_current(p: &EllipticProblem, u: &ScalarField, label: BoundaryLabel) -> f64 {
    let nodes = trace_nodes(&p.gamma.grid, &p.spec, label);
    let t = extract_trace(p, u, &nodes);
    t.iter().zip(&nodes).map(|(v, n)| v * n.weight).sum()
}

/// Residual trace and misfit gradient for one voltage-current datum.
///
/// The gradient is the exact discrete adjoint of
/// J = 1/2 ||trace(gamma, U) - y||^2 on the contact, returned as an L2
/// density field so that <w, h>_{L2} equals the directional derivative.
pub struct MisfitGradient {
    pub residual: Vec<f64>,
    pub forward: ScalarField,
    pub gradient: ScalarField,
    pub misfit: f64,
}

/// Forward solution together with its current trace on Gamma_1.
pub struct ForwardTrace {
    pub u: ScalarField,
    pub trace: Vec<f64>,
}

/// One forward solve plus trace extraction (one BVP solve).
pub fn forward_trace(p: &EllipticProblem, tol: f64, kind: SolverKind) -> Result<ForwardTrace> {
    let u = solve_bvp(p, tol, kind)?;
    let nodes = trace_nodes(&p.gamma.grid, &p.spec, BoundaryLabel::MeasureContact);
    let trace = extract_trace(p, &u, &nodes);
    Ok(ForwardTrace { u, trace })
}

pub fn misfit_gradient(
    p: &EllipticProblem,
    y: &[f64],
    tol: f64,
    kind: SolverKind,
) -> Result<MisfitGradient> {
    let fwd = forward_trace(p, tol, kind)?;
    gradient_from_forward(p, &fwd, y, tol, kind)
}

/// Adjoint stage of the misfit gradient, reusing a previously computed
/// forward solution (one BVP solve).
pub fn gradient_from_forward(
    p: &EllipticProblem,
    fwd: &ForwardTrace,
    y: &[f64],
    tol: f64,
    kind: SolverKind,
) -> Result<MisfitGradient> {
    if !matches!(p.faces, FaceCoefficients::FromNodes) {
        return Err(Error::InvalidInput(
            "misfit gradient requires nodal face coefficients".into(),
        ));
    }
    let grid = p.gamma.grid;
    let asm = assemble(p)?;
    let u = fwd.u.clone();

    let nodes = trace_nodes(&grid, &p.spec, BoundaryLabel::MeasureContact);
    let traces = fwd.trace.clone();
    if y.len() != traces.len() {
        return Err(Error::InvalidInput(format!(
            "trace length mismatch: {} vs {}",
            y.len(),
            traces.len()
        )));
    }
    let residual: Vec<f64> = traces.iter().zip(y).map(|(t, d)| t - d).collect();
    let weights: Vec<f64> = nodes.iter().map(|t| t.weight).collect();
    let misfit = 0.5 * trace_inner(&residual, &residual, &weights);

    // adjoint load: dJ/du_a for the inward neighbor of each trace node
    let mut adj = asm.system.clone();
    adj.rhs = vec![0.0; adj.n];
    for ((t, r), w) in nodes.iter().zip(&residual).zip(&weights) {
        let gf = face_gamma_for(p, t);
        let a = asm.unknown_of[grid.idx(t.inward.0, t.inward.1)];
        if a != NOT_UNKNOWN {
            adj.rhs[a] += -w * r * gf / t.h_normal;
        }
    }
    count_solve();
    let lambda = adj.solve(tol, kind)?;

    // accumulate dJ/dgamma_m (J depends on gamma through every face value)
    let mut grad = vec![0.0; grid.len()];
    let mut add_face = |na: usize, nb: usize, djdgf: f64, gamma: &ScalarField| {
        let ga = gamma.values[na];
        let gb = gamma.values[nb];
        let denom = (ga + gb) * (ga + gb);
        grad[na] += djdgf * 2.0 * gb * gb / denom;
        grad[nb] += djdgf * 2.0 * ga * ga / denom;
    };

    // explicit dependence of the extracted trace on the contact face value
    for ((t, r), w) in nodes.iter().zip(&residual).zip(&weights) {
        let ub = u.at(t.boundary.0, t.boundary.1);
        let ua = u.at(t.inward.0, t.inward.1);
        let djdgf = w * r * (ub - ua) / t.h_normal;
        let na = grid.idx(t.boundary.0, t.boundary.1);
        let nb = grid.idx(t.inward.0, t.inward.1);
        add_face(na, nb, djdgf, &p.gamma);
    }

    // dependence through the assembled system: dJ = lambda^T (db - dA u)
    for_each_face(&grid, |ia, ja, ib, jb, _x_axis, geo| {
        let na = grid.idx(ia, ja);
        let nb = grid.idx(ib, jb);
        let ka = asm.unknown_of[na];
        let kb = asm.unknown_of[nb];
        if ka == NOT_UNKNOWN && kb == NOT_UNKNOWN {
            return;
        }
        let ua = u.values[na];
        let ub = u.values[nb];
        let la = if ka != NOT_UNKNOWN { lambda[ka] } else { 0.0 };
        let lb = if kb != NOT_UNKNOWN { lambda[kb] } else { 0.0 };
        let djdgf = -geo * (ua - ub) * (la - lb);
        add_face(na, nb, djdgf, &p.gamma);
    });

    // convert to an L2 density
    let mut w_field = ScalarField::zeros(grid);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let area = grid.cell_wx(i) * grid.cell_wy(j);
            w_field.values[grid.idx(i, j)] = grad[grid.idx(i, j)] / area;
        }
    }
    Ok(MisfitGradient {
        residual,
        forward: u,
        gradient: w_field,
        misfit,
    })
}

/// Solves (Laplacian - I) v = rhs with homogeneous Neumann conditions on
/// the whole boundary. The -I shift makes the system uniquely solvable.
pub fn solve_helmholtz_neumann(rhs: &ScalarField, tol: f64, kind: SolverKind) -> Result<ScalarField> {
    let grid = rhs.grid;
    let mut system = SparseSystem::new(grid.len());
    for_each_face(&grid, |ia, ja, ib, jb, _x, geo| {
        let a = grid.idx(ia, ja);
        let b = grid.idx(ib, jb);
        system.add(a, a, geo);
        system.add(b, b, geo);
        system.add(a, b, -geo);
        system.add(b, a, -geo);
    });
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let k = grid.idx(i, j);
            let area = grid.cell_wx(i) * grid.cell_wy(j);
            system.add(k, k, area);
            system.rhs[k] = -area * rhs.values[k];
        }
    }
    count_solve();
    let x = system.solve(tol, kind)?;
    Ok(ScalarField {
        grid,
        values: x,
    })
}

/// 5-point Laplacian, continued to the boundary with shifted (one-sided)
/// 3-point second differences so that linears are annihilated exactly and
/// quadratics are reproduced exactly everywhere.
pub fn laplacian_5pt(f: &ScalarField) -> ScalarField {
    let grid = f.grid;
    let nx = grid.nx;
    let ny = grid.ny;
    let mut out = ScalarField::zeros(grid);
    for j in 0..ny {
        for i in 0..nx {
            let d2x = if i > 0 && i < nx - 1 {
                f.at(i - 1, j) - 2.0 * f.at(i, j) + f.at(i + 1, j)
            } else if i == 0 {
                f.at(0, j) - 2.0 * f.at(1, j) + f.at(2, j)
            } else {
                f.at(nx - 1, j) - 2.0 * f.at(nx - 2, j) + f.at(nx - 3, j)
            };
            let d2y = if j > 0 && j < ny - 1 {
                f.at(i, j - 1) - 2.0 * f.at(i, j) + f.at(i, j + 1)
            } else if j == 0 {
                f.at(i, 0) - 2.0 * f.at(i, 1) + f.at(i, 2)
            } else {
                f.at(i, ny - 1) - 2.0 * f.at(i, ny - 2) + f.at(i, ny - 3)
            };
            out.set(i, j, d2x / (grid.hx * grid.hx) + d2y / (grid.hy * grid.hy));
        }
    }
    out
}

/// Damped Newton solve of the equilibrium Poisson problem
/// lambda^2 Lap V = e^V - C with V = V_bi on the contacts and zero normal
/// derivative on the insulating boundary. Returns V with nonlinear residual
/// sup-norm <= tol.
pub fn solve_equilibrium(
    c: &ScalarField,
    v_bi: &ScalarField,
    spec: &BoundarySpec,
    lambda: f64,
    tol: f64,
) -> Result<ScalarField> {
    if lambda <= 0.0 {
        return Err(Error::InvalidInput("lambda must be > 0".into()));
    }
    c.check_finite()?;
    c.same_grid(v_bi)?;
    let grid = c.grid;
    spec.validate(&grid)?;
    let (unknown_of, node_of) = numbering(&grid, spec);

    // start from the Dirichlet data extended by its boundary mean
    let mut v = v_bi.clone();
    let lam2 = lambda * lambda;

    let residual = |v: &ScalarField| -> Vec<f64> {
        // nodal residual at the unknowns: lam2 * Lap_fv V - (e^V - C),
        // with the finite-volume Laplacian scaled back to nodal form
        let mut flux = vec![0.0; grid.len()];
        for_each_face(&grid, |ia, ja, ib, jb, _x, geo| {
            let a = grid.idx(ia, ja);
            let b = grid.idx(ib, jb);
            let d = geo * (v.values[b] - v.values[a]);
            flux[a] += d;
            flux[b] -= d;
        });
        node_of
            .iter()
            .map(|&n| {
                let (i, j) = (n % grid.nx, n / grid.nx);
                let area = grid.cell_wx(i) * grid.cell_wy(j);
                lam2 * flux[n] / area - (v.values[n].exp() - c.values[n])
            })
            .collect()
    };

    let sup = |r: &[f64]| r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    let mut res = residual(&v);
    let mut res_norm = sup(&res);
    let max_newton = 100;
    for it in 0..max_newton {
        if res_norm <= tol {
            return Ok(v);
        }
        // Jacobian (times -1 to stay SPD): lam2 * A_fv + diag(area e^V)
        let mut system = SparseSystem::new(node_of.len());
        for_each_face(&grid, |ia, ja, ib, jb, _x, geo| {
            let a = unknown_of[grid.idx(ia, ja)];
            let b = unknown_of[grid.idx(ib, jb)];
            let t = lam2 * geo;
            match (a != NOT_UNKNOWN, b != NOT_UNKNOWN) {
                (true, true) => {
                    system.add(a, a, t);
                    system.add(b, b, t);
                    system.add(a, b, -t);
                    system.add(b, a, -t);
                }
                (true, false) => system.add(a, a, t),
                (false, true) => system.add(b, b, t),
                (false, false) => {}
            }
        });
        for (k, &n) in node_of.iter().enumerate() {
            let (i, j) = (n % grid.nx, n / grid.nx);
            let area = grid.cell_wx(i) * grid.cell_wy(j);
            system.add(k, k, area * v.values[n].exp());
            system.rhs[k] = area * res[k];
        }
        count_solve();
        let delta = system.solve(DEFAULT_LINEAR_TOL, SolverKind::Auto)?;

        // damping: halve the step until the residual decreases
        let mut step = 1.0;
        loop {
            let mut v_try = v.clone();
            for (k, &n) in node_of.iter().enumerate() {
                v_try.values[n] += step * delta[k];
            }
            let res_try = residual(&v_try);
            let norm_try = sup(&res_try);
            if norm_try < res_norm {
                v = v_try;
                res = res_try;
                res_norm = norm_try;
                break;
            }
            step *= 0.5;
            if step < 2f64.powi(-20) {
                return Err(Error::NewtonStagnation {
                    iterations: it,
                    residual: res_norm,
                    step,
                });
            }
        }
    }
    Err(Error::NewtonStagnation {
        iterations: max_newton,
        residual: res_norm,
        step: 1.0,
    })
}

/// gamma = exp(V0) where V0 solves the equilibrium Poisson problem.
pub fn gamma_from_doping(
    c: &ScalarField,
    v_bi: &ScalarField,
    spec: &BoundarySpec,
    lambda: f64,
    tol: f64,
) -> Result<ScalarField> {
    Ok(solve_equilibrium(c, v_bi, spec, lambda, tol)?.map(f64::exp))
}

/// C = gamma - lambda^2 * Lap(ln gamma).
pub fn doping_from_gamma(gamma: &ScalarField, lambda: f64) -> Result<ScalarField> {
    if gamma.values.iter().any(|&g| g <= 0.0) {
        return Err(Error::InvalidInput("gamma must be positive".into()));
    }
    let lap = laplacian_5pt(&gamma.map(f64::ln));
    gamma.zip(&lap, |g, l| g - lambda * lambda * l)
}

/// Schroedinger potential V = Lap(sqrt(gamma)) / sqrt(gamma).
pub fn schrodinger_from_gamma(gamma: &ScalarField) -> Result<ScalarField> {
    if gamma.values.iter().any(|&g| g <= 0.0) {
        return Err(Error::InvalidInput("gamma must be positive".into()));
    }
    let root = gamma.map(f64::sqrt);
    let lap = laplacian_5pt(&root);
    lap.zip(&root, |l, r| l / r)
}
