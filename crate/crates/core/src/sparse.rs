//! Sparse linear algebra for the 5-point systems: a row-compressed system
//! container, a banded Cholesky direct path, Jacobi-preconditioned CG and a
//! Gauss-Seidel sweep for the (nonsymmetric) lattice systems. A dense
//! Gaussian-elimination routine doubles as the oracle path in tests.

use crate::error::{Error, Result};

/// Linear system in per-row coordinate form.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub n: usize,
    /// Per-row list of (column, coefficient). The diagonal entry must be present.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
}

/// Solver selection. `Auto` takes the banded Cholesky path for systems up to
/// a direct-size cap and falls back to preconditioned CG above it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Auto,
    Direct,
    Cg,
}

const DIRECT_CAP: usize = 20_000;

impl SparseSystem {
    pub fn new(n: usize) -> Self {
        SparseSystem {
            n,
            rows: vec![Vec::new(); n],
            rhs: vec![0.0; n],
        }
    }

    pub fn add(&mut self, row: usize, col: usize, coef: f64) {
        if let Some(e) = self.rows[row].iter_mut().find(|(c, _)| *c == col) {
            e.1 += coef;
        } else {
            self.rows[row].push((col, coef));
        }
    }

    pub fn diag(&self, row: usize) -> f64 {
        self.rows[row]
            .iter()
            .find(|(c, _)| *c == row)
            .map(|&(_, v)| v)
            .unwrap_or(0.0)
    }

    /// Asserts weak diagonal dominance in every row with strict dominance in
    /// at least one row.
    pub fn check_diagonally_dominant(&self) -> Result<()> {
        let mut strict = false;
        for r in 0..self.n {
            let mut diag = 0.0;
            let mut off = 0.0;
            for &(c, v) in &self.rows[r] {
                if c == r {
                    diag += v;
                } else {
                    off += v.abs();
                }
            }
            if diag.abs() < off - 1e-13 * (diag.abs() + off) {
                return Err(Error::DominanceViolation {
                    row: r,
                    diag: diag.abs(),
                    offdiag: off,
                });
            }
            if diag.abs() > off + 1e-13 * (diag.abs() + off) {
                strict = true;
            }
        }
        if !strict && self.n > 0 {
            return Err(Error::DominanceViolation {
                row: 0,
                diag: self.diag(0).abs(),
                offdiag: self.diag(0).abs(),
            });
        }
        Ok(())
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for &(c, v) in &self.rows[r] {
                acc += v * x[c];
            }
            out[r] = acc;
        }
    }

    pub fn residual_norm(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.n];
        self.matvec(x, &mut ax);
        ax.iter()
            .zip(&self.rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    fn rhs_norm(&self) -> f64 {
        self.rhs.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn bandwidth(&self) -> usize {
        let mut b = 0;
        for r in 0..self.n {
            for &(c, _) in &self.rows[r] {
                b = b.max(r.abs_diff(c));
            }
        }
        b
    }

    /// Solves the system to relative residual <= tol.
    pub fn solve(&self, tol: f64, kind: SolverKind) -> Result<Vec<f64>> {
        if tol <= 0.0 {
            return Err(Error::InvalidInput("solver tolerance must be > 0".into()));
        }
        if self.rhs_norm() == 0.0 {
            return Ok(vec![0.0; self.n]);
        }
        let direct = match kind {
            SolverKind::Direct => true,
            SolverKind::Cg => false,
            SolverKind::Auto => self.n <= DIRECT_CAP,
        };
        if direct {
            self.solve_banded_cholesky()
        } else {
            self.solve_pcg(tol, None)
        }
    }

    /// Banded Cholesky factorization (SPD systems). Exact up to roundoff.
    pub fn solve_banded_cholesky(&self) -> Result<Vec<f64>> {
        let n = self.n;
        let b = self.bandwidth();
        let w = b + 1;
        // lower band storage: band[r][k] = A[r][r - b + k], k = 0..=b
        let mut band = vec![0.0; n * w];
        for r in 0..n {
            for &(c, v) in &self.rows[r] {
                if c <= r {
                    band[r * w + (c + b - r)] += v;
                }
            }
        }
        for r in 0..n {
            let start = r.saturating_sub(b);
            for c in start..=r {
                let mut s = band[r * w + (c + b - r)];
                let kstart = start.max(c.saturating_sub(b));
                for k in kstart..c {
                    s -= band[r * w + (k + b - r)] * band[c * w + (k + b - c)];
                }
                if c == r {
                    if s <= 0.0 {
                        return Err(Error::InvalidInput(format!(
                            "matrix not positive definite at row {r} (pivot {s:.3e})"
                        )));
                    }
                    band[r * w + b] = s.sqrt();
                } else {
                    band[r * w + (c + b - r)] = s / band[c * w + b];
                }
            }
        }
        // forward then backward substitution
        let mut y = self.rhs.clone();
        for r in 0..n {
            let start = r.saturating_sub(b);
            let mut s = y[r];
            for k in start..r {
                s -= band[r * w + (k + b - r)] * y[k];
            }
            y[r] = s / band[r * w + b];
        }
        for r in (0..n).rev() {
            let mut s = y[r];
            let end = (r + b).min(n - 1);
            for k in r + 1..=end {
                s -= band[k * w + (r + b - k)] * y[k];
            }
            y[r] = s / band[r * w + b];
        }
        Ok(y)
    }

    /// Jacobi-preconditioned conjugate gradients with optional warm start.
    pub fn solve_pcg(&self, tol: f64, x0: Option<&[f64]>) -> Result<Vec<f64>> {
        let n = self.n;
        let bnorm = self.rhs_norm();
        let inv_diag: Vec<f64> = (0..n).map(|r| 1.0 / self.diag(r)).collect();
        let mut x = match x0 {
            Some(v) => v.to_vec(),
            None => vec![0.0; n],
        };
        let mut r = vec![0.0; n];
        self.matvec(&x, &mut r);
        for i in 0..n {
            r[i] = self.rhs[i] - r[i];
        }
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let max_iter = 40 * n + 200;
        let mut ap = vec![0.0; n];
        for it in 0..max_iter {
            let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rnorm <= tol * bnorm {
                return Ok(x);
            }
            self.matvec(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                return Err(Error::NoConvergence {
                    iterations: it,
                    residual: rnorm / bnorm,
                    tol,
                });
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual: self.residual_norm(&x) / bnorm,
            tol,
        })
    }

    /// Gauss-Seidel sweeps; converges for (strictly) diagonally dominant
    /// systems, symmetric or not.
    pub fn solve_gauss_seidel(&self, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let n = self.n;
        let bnorm = self.rhs_norm();
        if bnorm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut x = vec![0.0; n];
        for it in 0..max_iter {
            for r in 0..n {
                let mut s = self.rhs[r];
                let mut d = 0.0;
                for &(c, v) in &self.rows[r] {
                    if c == r {
                        d = v;
                    } else {
                        s -= v * x[c];
                    }
                }
                x[r] = s / d;
            }
            if it % 4 == 3 || it == max_iter - 1 {
                if self.residual_norm(&x) <= tol * bnorm {
                    return Ok(x);
                }
            }
        }
        let res = self.residual_norm(&x) / bnorm;
        if res <= tol {
            return Ok(x);
        }
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual: res,
            tol,
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for r in 0..self.n {
            for &(c, v) in &self.rows[r] {
                a[r][c] += v;
            }
        }
        a
    }
}

/// Dense Gaussian elimination with partial pivoting. Used as the
/// independent oracle path and for the small dense systems of the lattice
/// diagonal sweep.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
    let mut x = b.to_vec();
    for col in 0..n {
        let (piv, pv) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .fold((col, -1.0), |acc, it| if it.1 > acc.1 { it } else { acc });
        if pv <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "singular matrix at column {col}"
            )));
        }
        m.swap(col, piv);
        x.swap(col, piv);
        let d = m[col][col];
        for r in col + 1..n {
            let f = m[r][col] / d;
            if f != 0.0 {
                for c in col..n {
                    let v = m[col][c];
                    m[r][c] -= f * v;
                }
                x[r] -= f * x[col];
            }
        }
    }
    for r in (0..n).rev() {
        let mut s = x[r];
        for c in r + 1..n {
            s -= m[r][c] * x[c];
        }
        x[r] = s / m[r][r];
    }
    Ok(x)
}

/// Determinant by LU with partial pivoting.
pub fn dense_det(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let (piv, pv) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .fold((col, -1.0), |acc, it| if it.1 > acc.1 { it } else { acc });
        if pv == 0.0 {
            return 0.0;
        }
        if piv != col {
            m.swap(col, piv);
            det = -det;
        }
        det *= m[col][col];
        let d = m[col][col];
        for r in col + 1..n {
            let f = m[r][col] / d;
            if f != 0.0 {
                for c in col..n {
                    let v = m[col][c];
                    m[r][c] -= f * v;
                }
            }
        }
    }
    det
}
