//! Discrete Schroedinger lattice model: random-walk survival weights w on an
//! N x N grid of sites, mixed Dirichlet/Neumann boundary conditions, a
//! path-sum (Neumann series) oracle, and the constructive diagonal sweep
//! that recovers w near the data boundary from detector measurements.

use crate::error::{Error, Result};
use crate::sparse::{SparseSystem, dense_det, dense_solve};

/// Interior sites are (i, j) with 1 <= i, j <= N; boundary sites have
/// exactly one index in {0, N+1}.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub n: usize,
    /// Row-major weights, w[(j-1)*n + (i-1)] for site (i, j).
    pub w: Vec<f64>,
    pub eps: f64,
}

impl Lattice {
    pub fn new(n: usize, w: Vec<f64>, eps: f64) -> Result<Self> {
        let l = Self::new_relaxed(n, w, eps)?;
        for (k, &v) in l.w.iter().enumerate() {
            if v <= 0.0 || v >= 1.0 {
                return Err(Error::InvalidInput(format!(
                    "weight {v} at site ({}, {}) outside (0,1)",
                    k % n + 1,
                    k / n + 1
                )));
            }
        }
        Ok(l)
    }

    /// Validation relaxed to [0, 1] (used by limit cases in tests).
    pub fn new_relaxed(n: usize, w: Vec<f64>, eps: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("lattice size must be >= 1".into()));
        }
        if w.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "expected {} weights, got {}",
                n * n,
                w.len()
            )));
        }
        if eps <= 0.0 {
            return Err(Error::InvalidInput("mesh size must be > 0".into()));
        }
        if let Some(&v) = w.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("weight {v} outside [0,1]")));
        }
        Ok(Lattice { n, w, eps })
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[(j - 1) * self.n + (i - 1)]
    }
}

/// Survival weights from a potential: w = 4 / (4 + eps^2 V).
pub fn w_from_potential(v: &[f64], n: usize, eps: f64) -> Result<Lattice> {
    let e2 = eps * eps;
    let mut w = Vec::with_capacity(v.len());
    for (k, &vi) in v.iter().enumerate() {
        if 4.0 + e2 * vi <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "4 + eps^2 V = {} at site ({}, {})",
                4.0 + e2 * vi,
                k % n + 1,
                k / n + 1
            )));
        }
        w.push(4.0 / (4.0 + e2 * vi));
    }
    Lattice::new(n, w, eps)
}

/// Inverse map: V = (4/w - 4) / eps^2.
pub fn potential_from_w(l: &Lattice) -> Vec<f64> {
    let e2 = l.eps * l.eps;
    l.w.iter().map(|&w| (4.0 / w - 4.0) / e2).collect()
}

/// Dirichlet-equivalent weight for a site adjacent to a Neumann boundary:
/// w_eff = 3w / (4 - w).
pub fn effective_weight(w: f64) -> f64 {
    3.0 * w / (4.0 - w)
}

/// Role of one side of the lattice boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideKind {
    /// Homogeneous Dirichlet (measurement segment Gamma_1).
    DirichletZero,
    /// Dirichlet sites that may carry the unit impulse (detector segment).
    DirichletDetector,
    /// Value copied from the adjacent interior site.
    Neumann,
}

#[derive(Debug, Clone, Copy)]
pub struct LatticeLayout {
    pub left: SideKind,
    pub right: SideKind,
    pub bottom: SideKind,
    pub top: SideKind,
}

impl Default for LatticeLayout {
    /// Data sides (zero Dirichlet) left and bottom, detectors on the right,
    /// Neumann on top.
    fn default() -> Self {
        LatticeLayout {
            left: SideKind::DirichletZero,
            right: SideKind::DirichletDetector,
            bottom: SideKind::DirichletZero,
            top: SideKind::Neumann,
        }
    }
}

impl LatticeLayout {
    /// Side containing a boundary site, if it is a valid boundary site
    /// (exactly one index in {0, N+1}).
    pub fn side_of(&self, n: usize, i: usize, j: usize) -> Option<SideKind> {
        let lo_i = i == 0;
        let hi_i = i == n + 1;
        let lo_j = j == 0;
        let hi_j = j == n + 1;
        match (lo_i || hi_i, lo_j || hi_j) {
            (true, false) => Some(if lo_i { self.left } else { self.right }),
            (false, true) => Some(if lo_j { self.bottom } else { self.top }),
            _ => None,
        }
    }
}

/// Solution of the lattice system for one detector impulse.
#[derive(Debug, Clone)]
pub struct LatticeSolution {
    pub n: usize,
    pub detector: (usize, usize),
    /// Interior values, same indexing as Lattice::w.
    pub z: Vec<f64>,
}

impl LatticeSolution {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.z[(j - 1) * self.n + (i - 1)]
    }
}

const NBRS: [(i64, i64); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

fn check_detector(l: &Lattice, layout: &LatticeLayout, d: (usize, usize)) -> Result<()> {
    match layout.side_of(l.n, d.0, d.1) {
        Some(SideKind::DirichletDetector) => Ok(()),
        other => Err(Error::InvalidInput(format!(
            "detector {d:?} is not on a detector segment (side: {other:?})"
        ))),
    }
}

/// Assembles the N^2 x N^2 system u_ij - (w_ij/4) sum(neighbors) = 0 with
/// the impulse at d; `weff_rewrite` replaces Neumann-adjacent rows by the
/// Dirichlet-equivalent 3-neighbor form with w_eff.
fn assemble_lattice(
    l: &Lattice,
    layout: &LatticeLayout,
    d: (usize, usize),
    weff_rewrite: bool,
) -> Result<SparseSystem> {
    let n = l.n;
    let mut sys = SparseSystem::new(n * n);
    for j in 1..=n {
        for i in 1..=n {
            let s = (j - 1) * n + (i - 1);
            let w = l.weight(i, j);
            let neumann_nbrs = NBRS
                .iter()
                .filter(|(di, dj)| {
                    let (ni, nj) = ((i as i64 + di) as usize, (j as i64 + dj) as usize);
                    layout.side_of(n, ni, nj) == Some(SideKind::Neumann)
                })
                .count();
            let (coef, denom) = if weff_rewrite && neumann_nbrs == 1 {
                (effective_weight(w), 3.0)
            } else if weff_rewrite && neumann_nbrs > 1 {
                return Err(Error::InvalidInput(
                    "w_eff rewrite supports at most one Neumann neighbor per site".into(),
                ));
            } else {
                (w, 4.0)
            };
            sys.add(s, s, 1.0);
            for (di, dj) in NBRS {
                let (ni, nj) = ((i as i64 + di) as usize, (j as i64 + dj) as usize);
                match layout.side_of(n, ni, nj) {
                    None => {
                        // interior neighbor
                        let t = (nj - 1) * n + (ni - 1);
                        sys.add(s, t, -coef / denom);
                    }
                    Some(SideKind::DirichletZero) => {}
                    Some(SideKind::DirichletDetector) => {
                        if (ni, nj) == d {
                            sys.rhs[s] += coef / denom;
                        }
                    }
                    Some(SideKind::Neumann) => {
                        if weff_rewrite {
                            // treated as zero Dirichlet after the rewrite
                        } else {
                            // boundary value copies the site itself
                            sys.add(s, s, -coef / denom);
                        }
                    }
                }
            }
        }
    }
    sys.check_diagonally_dominant()?;
    Ok(sys)
}

/// Monotone Gauss-Seidel iteration from zero. All arithmetic is sums of
/// nonnegative terms, so even components many orders of magnitude below the
/// largest are computed with full relative accuracy.
fn solve_monotone(sys: &SparseSystem) -> Result<Vec<f64>> {
    let n = sys.n;
    let mut x = vec![0.0; n];
    let max_sweeps = 200_000;
    for _ in 0..max_sweeps {
        let mut converged = true;
        for r in 0..n {
            let mut s = sys.rhs[r];
            let mut diag = 0.0;
            for &(c, v) in &sys.rows[r] {
                if c == r {
                    diag += v;
                } else {
                    s -= v * x[c];
                }
            }
            let new = s / diag;
            if (new - x[r]).abs() > 1e-15 * new.abs() {
                converged = false;
            }
            x[r] = new;
        }
        if converged {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_sweeps,
        residual: sys.residual_norm(&x),
        tol: 1e-15,
    })
}

/// Solves the lattice system for a unit impulse at detector d.
pub fn lattice_solve(l: &Lattice, layout: &LatticeLayout, d: (usize, usize)) -> Result<LatticeSolution> {
    check_detector(l, layout, d)?;
    let sys = assemble_lattice(l, layout, d, false)?;
    let z = solve_monotone(&sys)?;
    Ok(LatticeSolution {
        n: l.n,
        detector: d,
        z,
    })
}

/// Same solve with the w_eff Dirichlet-equivalent rewrite of
/// Neumann-adjacent rows (must reproduce lattice_solve exactly).
pub fn lattice_solve_weff(
    l: &Lattice,
    layout: &LatticeLayout,
    d: (usize, usize),
) -> Result<LatticeSolution> {
    check_detector(l, layout, d)?;
    let sys = assemble_lattice(l, layout, d, true)?;
    let z = solve_monotone(&sys)?;
    Ok(LatticeSolution {
        n: l.n,
        detector: d,
        z,
    })
}

/// Measurement extraction: interior values on the layer adjacent to the
/// zero-Dirichlet (measurement) sides, as ((i, j), value) pairs.
pub fn measurements(sol: &LatticeSolution, layout: &LatticeLayout) -> Vec<((usize, usize), f64)> {
    let n = sol.n;
    let mut out = Vec::new();
    if layout.left == SideKind::DirichletZero {
        for j in 1..=n {
            out.push(((1, j), sol.at(1, j)));
        }
    }
    if layout.bottom == SideKind::DirichletZero {
        for i in 1..=n {
            out.push(((i, 1), sol.at(i, 1)));
        }
    }
    if layout.right == SideKind::DirichletZero {
        for j in 1..=n {
            out.push(((n, j), sol.at(n, j)));
        }
    }
    if layout.top == SideKind::DirichletZero {
        for i in 1..=n {
            out.push(((i, n), sol.at(i, n)));
        }
    }
    out
}

/// Shortest monotone path length between two sites.
pub fn min_path_length(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

/// Number of shortest lattice paths between two sites:
/// binom(|di| + |dj|, |di|).
pub fn path_count(a: (usize, usize), b: (usize, usize)) -> u128 {
    let di = a.0.abs_diff(b.0) as u128;
    let dj = a.1.abs_diff(b.1) as u128;
    let mut c: u128 = 1;
    for k in 1..=di {
        c = c * (dj + k) / k;
    }
    c
}

/// Truncated Neumann-series (Jacobi) evaluation: the result after max_len
/// sweeps equals the sum over walk contributions of length <= max_len.
pub fn path_sum_partial(
    l: &Lattice,
    layout: &LatticeLayout,
    d: (usize, usize),
    max_len: usize,
) -> Result<Vec<f64>> {
    check_detector(l, layout, d)?;
    let n = l.n;
    let mut cur = vec![0.0; n * n];
    for _ in 0..max_len {
        let mut next = vec![0.0; n * n];
        for j in 1..=n {
            for i in 1..=n {
                let s = (j - 1) * n + (i - 1);
                let w = l.weight(i, j);
                let mut acc = 0.0;
                for (di, dj) in NBRS {
                    let (ni, nj) = ((i as i64 + di) as usize, (j as i64 + dj) as usize);
                    acc += match layout.side_of(n, ni, nj) {
                        None => cur[(nj - 1) * n + (ni - 1)],
                        Some(SideKind::DirichletZero) => 0.0,
                        Some(SideKind::DirichletDetector) => {
                            if (ni, nj) == d {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Some(SideKind::Neumann) => cur[s],
                    };
                }
                next[s] = w / 4.0 * acc;
            }
        }
        cur = next;
    }
    Ok(cur)
}

/// Determinant of the p x p matrix with rows indexed by the diagonal sites
/// (1,p), ..., (p,1) and columns by detectors.
pub fn sweep_determinant(z: &[Vec<f64>]) -> f64 {
    dense_det(z)
}

/// The boundary-adjacent data of one detector: the full site table with
/// entries valid only where i or j lies in {0, 1}.
#[derive(Debug, Clone)]
pub struct DetectorData {
    pub n: usize,
    pub detector: (usize, usize),
    /// (n+2) x (n+2) table, index j*(n+2)+i.
    pub table: Vec<f64>,
    pub known: Vec<bool>,
}

impl DetectorData {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * (self.n + 2) + i
    }

    fn get(&self, i: usize, j: usize) -> Result<f64> {
        if !self.known[self.idx(i, j)] {
            return Err(Error::InvalidInput(format!(
                "sweep requires z({i},{j}) for detector {:?}, which is neither data nor recovered",
                self.detector
            )));
        }
        Ok(self.table[self.idx(i, j)])
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.table[k] = v;
        self.known[k] = true;
    }

    /// Builds the data table from a forward simulation, keeping only sites
    /// with i in {0,1} or j in {0,1} (the Theorem's data model).
    pub fn from_solution(sol: &LatticeSolution, layout: &LatticeLayout) -> Self {
        let n = sol.n;
        let m = n + 2;
        let mut table = vec![0.0; m * m];
        let mut known = vec![false; m * m];
        let mut put = |i: usize, j: usize, v: f64| {
            table[j * m + i] = v;
            known[j * m + i] = true;
        };
        for j in 0..m {
            for i in 0..m {
                if i > 1 && j > 1 {
                    continue;
                }
                match layout.side_of(n, i, j) {
                    Some(SideKind::DirichletZero) => put(i, j, 0.0),
                    Some(SideKind::DirichletDetector) => {
                        put(i, j, if (i, j) == sol.detector { 1.0 } else { 0.0 })
                    }
                    Some(SideKind::Neumann) => {
                        // copy of the adjacent interior value (bd1)
                        let (ai, aj) = if i == 0 {
                            (1, j)
                        } else if i == n + 1 {
                            (n, j)
                        } else if j == 0 {
                            (i, 1)
                        } else {
                            (i, n)
                        };
                        put(i, j, sol.at(ai, aj));
                    }
                    None => {
                        if (1..=n).contains(&i) && (1..=n).contains(&j) {
                            put(i, j, sol.at(i, j));
                        }
                        // corners of the extended table stay unknown
                    }
                }
            }
        }
        DetectorData {
            n,
            detector: sol.detector,
            table,
            known,
        }
    }
}

/// One step of the sweep report.
#[derive(Debug, Clone, Copy)]
pub struct SweepStep {
    pub p: usize,
    /// Genericity determinant D_p.
    pub det: f64,
    /// Infinity-norm condition number of the p^2 x p^2 sweep system.
    pub cond: f64,
}

/// Result of the diagonal-sweep recovery.
#[derive(Debug, Clone)]
pub struct Recovery {
    pub n: usize,
    pub p_prime: usize,
    /// Recovered V-hat = 4/w at sites with i + j <= p' + 1, as
    /// ((i, j), value).
    pub v_hat: Vec<((usize, usize), f64)>,
    /// Recovered weights at the same sites.
    pub w: Vec<((usize, usize), f64)>,
    pub steps: Vec<SweepStep>,
}

fn inf_norm_cond(a: &[Vec<f64>]) -> f64 {
    let p = a.len();
    let norm_a = a
        .iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    // ||A^{-1}||_inf column by column
    let mut inv_rows_abs = vec![0.0_f64; p];
    for c in 0..p {
        let mut e = vec![0.0; p];
        e[c] = 1.0;
        if let Ok(col) = dense_solve(a, &e) {
            for r in 0..p {
                inv_rows_abs[r] += col[r].abs();
            }
        } else {
            return f64::INFINITY;
        }
    }
    norm_a * inv_rows_abs.iter().fold(0.0_f64, |m, &v| m.max(v))
}

/// Recovers V-hat (and w = 4/V-hat) on the anti-diagonals i + j <= p' + 1
/// from the boundary-adjacent data of detectors d_k = (N+1, N+1-k),
/// k = 1..p'. The sweep is inductive in p: each step solves a p^2-sized
/// dense system for the diagonal's V-hat values plus the next diagonal's z
/// values, gated by the genericity determinant D_p.
pub fn recover_diagonals(data: &[DetectorData], p_prime: usize, n: usize) -> Result<Recovery> {
    if p_prime == 0 || 2 * p_prime > n + 1 {
        return Err(Error::InvalidInput(format!(
            "need 1 <= p' and 2 p' <= N + 1 (got p' = {p_prime}, N = {n})"
        )));
    }
    if data.len() < p_prime {
        return Err(Error::InvalidInput(format!(
            "need {p_prime} detectors, got {}",
            data.len()
        )));
    }
    for (k, dd) in data.iter().take(p_prime).enumerate() {
        let expected = (n + 1, n - k);
        if dd.n != n || dd.detector != expected {
            return Err(Error::InvalidInput(format!(
                "detector {} must be {:?}, got {:?}",
                k + 1,
                expected,
                dd.detector
            )));
        }
    }
    let mut t: Vec<DetectorData> = data[..p_prime].to_vec();
    let m = p_prime;

    let mut v_hat_out = Vec::new();
    let mut w_out = Vec::new();
    let mut steps = Vec::new();

    let mut v_hat_diag: Vec<f64>;
    for p in 1..=p_prime {
        // known diagonal values Z[q][k] = z(q, p+1-q) for detector k
        let mut zmat = vec![vec![0.0; p]; p];
        for (q, row) in zmat.iter_mut().enumerate() {
            for (k, entry) in row.iter_mut().enumerate() {
                *entry = t[k].get(q + 1, p - q)?;
            }
        }
        let det = dense_det(&zmat);
        // Hadamard-normalized threshold: |det| <= prod of row sup-norms
        // always, so this gate is dimensionless and survives the strong
        // decay of z away from the detectors.
        let scale: f64 = zmat
            .iter()
            .map(|row| {
                row.iter()
                    .fold(0.0_f64, |m, v| m.max(v.abs()))
                    .max(f64::MIN_POSITIVE)
            })
            .product();
        let tol_det = 1e-12 * scale;
        if det.abs() <= tol_det {
            return Err(Error::GenericityFailure {
                diagonal: p,
                determinant: det.abs(),
                threshold: tol_det,
            });
        }

        // unknowns: V-hat_q (q = 1..p), then z(s, p+2-s) per detector
        // (s = 2..p, k = 1..p)
        let nvar = p * p;
        let mut a = vec![vec![0.0; nvar]; nvar];
        let mut b = vec![0.0; nvar];
        let zvar = |s: usize, k: usize| p + (s - 2) * p + k;
        for q in 1..=p {
            let site_j = p + 1 - q;
            for k in 0..p {
                let row = (q - 1) * p + k;
                a[row][q - 1] = zmat[q - 1][k];
                // up neighbor (q, p+2-q)
                if q >= 2 {
                    a[row][zvar(q, k)] -= 1.0;
                } else {
                    b[row] += t[k].get(1, p + 1)?;
                }
                // right neighbor (q+1, p+1-q)
                if q + 1 <= p {
                    a[row][zvar(q + 1, k)] -= 1.0;
                } else {
                    b[row] += t[k].get(p + 1, 1)?;
                }
                // left and down neighbors lie on earlier diagonals
                b[row] += t[k].get(q - 1, site_j)?;
                b[row] += t[k].get(q, site_j - 1)?;
            }
        }
        let cond = inf_norm_cond(&a);
        let sol = dense_solve(&a, &b).map_err(|_| Error::GenericityFailure {
            diagonal: p,
            determinant: det.abs(),
            threshold: tol_det,
        })?;
        v_hat_diag = sol[..p].to_vec();
        steps.push(SweepStep { p, det, cond });
        for q in 1..=p {
            let site = (q, p + 1 - q);
            v_hat_out.push((site, v_hat_diag[q - 1]));
            w_out.push((site, 4.0 / v_hat_diag[q - 1]));
        }
        // store the solved next-diagonal values for detectors 1..p
        for k in 0..p {
            for s in 2..=p {
                t[k].set(s, p + 2 - s, sol[zvar(s, k)]);
            }
        }
        // propagate the next-diagonal values for the remaining detectors by
        // forward substitution along the diagonal equations
        for k in p..m {
            for q in 1..p {
                let site_j = p + 1 - q;
                let z_here = t[k].get(q, site_j)?;
                let up = t[k].get(q, site_j + 1)?;
                let left = t[k].get(q - 1, site_j)?;
                let down = t[k].get(q, site_j - 1)?;
                let right = v_hat_diag[q - 1] * z_here - up - left - down;
                t[k].set(q + 1, site_j, right);
            }
        }
    }
    Ok(Recovery {
        n,
        p_prime,
        v_hat: v_hat_out,
        w: w_out,
        steps,
    })
}

/// Convenience: simulate all sweep detectors for a lattice and package the
/// boundary-adjacent data.
pub fn simulate_sweep_data(
    l: &Lattice,
    layout: &LatticeLayout,
    p_prime: usize,
) -> Result<Vec<DetectorData>> {
    (1..=p_prime)
        .map(|k| {
            let d = (l.n + 1, l.n + 1 - k);
            let sol = lattice_solve(l, layout, d)?;
            Ok(DetectorData::from_solution(&sol, layout))
        })
        .collect()
}

/// Lattice file format: `lattice <N> <eps>` then N rows of N weights
/// (row j = 1 first).
pub fn write_lattice_string(l: &Lattice) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "lattice {} {:.16e}", l.n, l.eps);
    for j in 1..=l.n {
        for i in 1..=l.n {
            if i > 1 {
                s.push(' ');
            }
            let _ = write!(s, "{:.16e}", l.weight(i, j));
        }
        s.push('\n');
    }
    s
}

pub fn read_lattice_string(s: &str) -> Result<Lattice> {
    let mut lines = s.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty lattice file".into()))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("lattice") {
        return Err(Error::Parse("lattice file must start with `lattice`".into()));
    }
    let n: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse("bad N in lattice header".into()))?;
    let eps: f64 = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse("bad eps in lattice header".into()))?;
    let mut w = Vec::with_capacity(n * n);
    for (j, line) in lines.take(n).enumerate() {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|tk| tk.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("row {j}: {e}")))?;
        if row.len() != n {
            return Err(Error::Parse(format!(
                "row {j} has {} weights, expected {n}",
                row.len()
            )));
        }
        w.extend(row);
    }
    Lattice::new(n, w, eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut state = seed;
        move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    fn random_lattice(n: usize, lo: f64, hi: f64, seed: u64) -> Lattice {
        let mut rng = lcg(seed);
        let w = (0..n * n).map(|_| lo + (hi - lo) * rng()).collect();
        Lattice::new(n, w, 1.0).unwrap()
    }

    #[test]
    fn potential_weight_maps() {
        assert!(w_from_potential(&[0.0], 1, 1.0).is_err()); // w = 1 rejected
        let l = w_from_potential(&[4.0], 1, 1.0).unwrap();
        assert!((l.w[0] - 0.5).abs() < 1e-15);

        let mut rng = lcg(5);
        for _ in 0..100 {
            let n = 3;
            let w0: Vec<f64> = (0..9).map(|_| 0.05 + 0.9 * rng()).collect();
            let l = Lattice::new(n, w0.clone(), 0.7).unwrap();
            let v = potential_from_w(&l);
            let l2 = w_from_potential(&v, n, 0.7).unwrap();
            for (a, b) in w0.iter().zip(&l2.w) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn effective_weight_values() {
        assert!((effective_weight(0.5) - 3.0 / 7.0).abs() < 1e-15);
        assert!(effective_weight(1.0 - 1e-12) < 1.0);
        assert!(effective_weight(1e-12) > 0.0 && effective_weight(1e-12) < 1e-11);
    }

    #[test]
    fn single_site_hand_solves() {
        // all four neighbors Dirichlet, impulse on the right
        let layout = LatticeLayout {
            left: SideKind::DirichletZero,
            right: SideKind::DirichletDetector,
            bottom: SideKind::DirichletZero,
            top: SideKind::DirichletZero,
        };
        let l = Lattice::new(1, vec![0.6], 1.0).unwrap();
        let sol = lattice_solve(&l, &layout, (2, 1)).unwrap();
        assert!((sol.at(1, 1) - 0.6 / 4.0).abs() < 1e-14);

        // left neighbor Neumann: z = w / (4 - w)
        let layout_n = LatticeLayout {
            left: SideKind::Neumann,
            ..layout
        };
        let sol = lattice_solve(&l, &layout_n, (2, 1)).unwrap();
        assert!((sol.at(1, 1) - 0.6 / 3.4).abs() < 1e-14);
    }

    #[test]
    fn solve_matches_dense_oracle() {
        let layout = LatticeLayout::default();
        let l = random_lattice(6, 0.2, 0.8, 99);
        let d = (7, 4);
        let sol = lattice_solve(&l, &layout, d).unwrap();
        let sys = assemble_lattice(&l, &layout, d, false).unwrap();
        let oracle = dense_solve(&sys.to_dense(), &sys.rhs).unwrap();
        for (a, b) in sol.z.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn probabilistic_range_and_monotonicity() {
        let layout = LatticeLayout::default();
        let l = random_lattice(5, 0.1, 0.9, 3);
        let sol = lattice_solve(&l, &layout, (6, 5)).unwrap();
        assert!(sol.z.iter().all(|&z| (0.0..=1.0).contains(&z)));
        // increasing one weight does not decrease any value
        let mut w2 = l.w.clone();
        w2[7] = (w2[7] + 0.05).min(0.95);
        let l2 = Lattice::new(5, w2, 1.0).unwrap();
        let sol2 = lattice_solve(&l2, &layout, (6, 5)).unwrap();
        for (a, b) in sol.z.iter().zip(&sol2.z) {
            assert!(b >= &(a - 1e-15));
        }
    }

    #[test]
    fn neumann_equivalence() {
        let layout = LatticeLayout::default();
        for seed in 0..20 {
            let l = random_lattice(5, 0.05, 0.95, 1000 + seed);
            let d = (6, 3);
            let a = lattice_solve(&l, &layout, d).unwrap();
            let b = lattice_solve_weff(&l, &layout, d).unwrap();
            for (x, y) in a.z.iter().zip(&b.z) {
                assert!((x - y).abs() <= 1e-14, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn measurement_extraction() {
        let layout = LatticeLayout::default();
        let l = random_lattice(4, 0.3, 0.7, 11);
        let sol = lattice_solve(&l, &layout, (5, 4)).unwrap();
        let ms = measurements(&sol, &layout);
        assert_eq!(ms.len(), 2 * 4);
        assert!(ms.iter().all(|&(_, v)| v > 0.0));
        // detector adjacent to the top-right: the nearest measured sites are
        // still strictly positive (connectivity)
        let zero = Lattice::new_relaxed(4, vec![0.0; 16], 1.0).unwrap();
        let sol0 = lattice_solve(&zero, &layout, (5, 4)).unwrap();
        assert!(sol0.z.iter().all(|&z| z == 0.0));
    }

    #[test]
    fn path_counts() {
        assert_eq!(min_path_length((2, 3), (2, 3)), 0);
        assert_eq!(path_count((2, 3), (2, 3)), 1);
        assert_eq!(path_count((1, 1), (2, 3)), 3); // offset (1,2): C(3,1)
        assert_eq!(path_count((1, 1), (3, 3)), 6); // offset (2,2): C(4,2)
        // exhaustive enumeration oracle for offsets up to (3,3)
        fn enumerate(di: usize, dj: usize) -> u128 {
            if di == 0 && dj == 0 {
                return 1;
            }
            let mut c = 0;
            if di > 0 {
                c += enumerate(di - 1, dj);
            }
            if dj > 0 {
                c += enumerate(di, dj - 1);
            }
            c
        }
        for di in 0..=3 {
            for dj in 0..=3 {
                assert_eq!(path_count((0, 0), (di, dj)), enumerate(di, dj));
            }
        }
    }

    #[test]
    fn path_sum_converges_to_solve() {
        let layout = LatticeLayout::default();
        let l = Lattice::new(5, vec![0.3; 25], 1.0).unwrap();
        let d = (6, 5);
        let zero = path_sum_partial(&l, &layout, d, 0).unwrap();
        assert!(zero.iter().all(|&z| z == 0.0));
        let truncated = path_sum_partial(&l, &layout, d, 400).unwrap();
        let sol = lattice_solve(&l, &layout, d).unwrap();
        for (a, b) in truncated.iter().zip(&sol.z) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn small_rho_asymptotics() {
        let layout = LatticeLayout::default();
        let n = 6;
        let rho = 1e-3;
        let l = Lattice::new(n, vec![rho; n * n], 1.0).unwrap();
        let d = (n + 1, n); // adjacent interior site (n, n)
        let sol = lattice_solve(&l, &layout, d).unwrap();
        let entry = (n, n);
        for j in 1..=n {
            for i in 1..=n {
                let ell = min_path_length((i, j), entry);
                if ell > 6 {
                    continue;
                }
                let expected = path_count((i, j), entry) as f64;
                let scaled = sol.at(i, j) * (4.0 / rho).powi(ell as i32 + 1);
                let rel = (scaled - expected).abs() / expected;
                assert!(rel <= 0.01, "site ({i},{j}): {scaled} vs {expected}");
            }
        }
    }

    #[test]
    fn asymptotic_slope() {
        let layout = LatticeLayout::default();
        let n = 5;
        let site = (2, 3);
        let d = (n + 1, n);
        let ell = min_path_length(site, (n, n));
        let mut values = Vec::new();
        for &rho in &[1e-2, 1e-3, 1e-4] {
            let l = Lattice::new(n, vec![rho; n * n], 1.0).unwrap();
            let sol = lattice_solve(&l, &layout, d).unwrap();
            values.push((rho as f64, sol.at(site.0, site.1)));
        }
        for w in values.windows(2) {
            let slope = (w[1].1.ln() - w[0].1.ln()) / (w[1].0.ln() - w[0].0.ln());
            assert!(
                (slope - (ell as f64 + 1.0)).abs() < 0.05,
                "slope {slope}, expected {}",
                ell + 1
            );
        }
    }

    #[test]
    fn sweep_determinant_cases() {
        let z = vec![vec![0.37]];
        assert_eq!(sweep_determinant(&z), 0.37);
        let a = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert!((sweep_determinant(&a) - (1.0 * 4.0 - 2.0 * 3.0)).abs() < 1e-14);
        // duplicated detector columns
        let dup = vec![vec![1.3, 1.3], vec![0.4, 0.4]];
        assert!(sweep_determinant(&dup).abs() < 1e-15);
        // the p = 2 closed form
        let mut rng = lcg(8);
        let m = vec![vec![rng(), rng()], vec![rng(), rng()]];
        let direct = m[0][0] * m[1][1] - m[1][0] * m[0][1];
        assert!((sweep_determinant(&m) - direct).abs() < 1e-14);
    }

    #[test]
    fn recover_first_diagonal() {
        let layout = LatticeLayout::default();
        let l = random_lattice(5, 0.2, 0.8, 21);
        let data = simulate_sweep_data(&l, &layout, 1).unwrap();
        let rec = recover_diagonals(&data, 1, 5).unwrap();
        assert_eq!(rec.w.len(), 1);
        let ((i, j), w) = rec.w[0];
        assert_eq!((i, j), (1, 1));
        assert!((w - l.weight(1, 1)).abs() < 1e-10, "{w}");
        // hand formula: V = (z12 + z21) / z11
        let sol = lattice_solve(&l, &layout, (6, 5)).unwrap();
        let v = (sol.at(1, 2) + sol.at(2, 1)) / sol.at(1, 1);
        assert!((rec.v_hat[0].1 - v).abs() < 1e-10);
    }

    #[test]
    fn exact_recovery_n7() {
        let layout = LatticeLayout::default();
        for seed in 0..5 {
            let l = random_lattice(7, 0.2, 0.8, 4242 + seed);
            let data = simulate_sweep_data(&l, &layout, 3).unwrap();
            let rec = recover_diagonals(&data, 3, 7).unwrap();
            assert_eq!(rec.w.len(), 1 + 2 + 3);
            for &((i, j), w) in &rec.w {
                assert!(
                    (w - l.weight(i, j)).abs() <= 1e-8,
                    "seed {seed}: site ({i},{j}) {w} vs {}",
                    l.weight(i, j)
                );
            }
        }
    }

    #[test]
    fn perturbed_data_conditioning_bound() {
        let layout = LatticeLayout::default();
        let l = random_lattice(7, 0.2, 0.8, 77);
        let mut data = simulate_sweep_data(&l, &layout, 3).unwrap();
        let pert = 1e-10;
        let mut rng = lcg(3);
        for dd in &mut data {
            for (k, v) in dd.table.iter_mut().enumerate() {
                if dd.known[k] {
                    *v += pert * (2.0 * rng() - 1.0);
                }
            }
        }
        let clean = recover_diagonals(&simulate_sweep_data(&l, &layout, 3).unwrap(), 3, 7).unwrap();
        let noisy = recover_diagonals(&data, 3, 7).unwrap();
        let cond_product: f64 = noisy.steps.iter().map(|s| s.cond).product();
        let max_err = clean
            .w
            .iter()
            .zip(&noisy.w)
            .map(|(a, b)| (a.1 - b.1).abs())
            .fold(0.0_f64, f64::max);
        assert!(max_err > 0.0);
        // loose amplification bound: error within 10x the accumulated
        // conditioning of the sweep systems
        assert!(
            max_err <= 10.0 * cond_product * pert,
            "err {max_err}, cond {cond_product}"
        );
    }

    #[test]
    fn recovery_rejects_bad_setup() {
        let layout = LatticeLayout::default();
        let l = random_lattice(5, 0.2, 0.8, 1);
        let data = simulate_sweep_data(&l, &layout, 2).unwrap();
        assert!(recover_diagonals(&data, 3, 5).is_err()); // too few detectors
        assert!(recover_diagonals(&data, 4, 5).is_err()); // 2p' > N+1
    }

    #[test]
    fn lattice_file_roundtrip() {
        let l = random_lattice(4, 0.2, 0.8, 12);
        let s = write_lattice_string(&l);
        let l2 = read_lattice_string(&s).unwrap();
        assert_eq!(l.n, l2.n);
        assert_eq!(l.w, l2.w);
        assert_eq!(l.eps, l2.eps);
    }
}
