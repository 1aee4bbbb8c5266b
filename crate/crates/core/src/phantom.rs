//! Ground-truth conductivity phantoms: a P-N junction described by a curve
//! y = c(x) splitting the unit square into gamma = 1 (below) and gamma = 2
//! (above), plus arbitrary custom fields.

use crate::elliptic::FaceCoefficients;
use crate::error::{Error, Result};
use crate::mesh::{Grid, ScalarField};

pub const GAMMA_P: f64 = 1.0;
pub const GAMMA_N: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub enum PhantomSpec {
    /// Junction along the straight line from (0, ya) to (1, yb).
    LinearJunction { ya: f64, yb: f64 },
    /// Junction along y = c0 + c1 sin(2 pi x).
    AnalyticJunction { c0: f64, c1: f64 },
    /// Explicit conductivity field, used as-is.
    CustomField(ScalarField),
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PhantomSpec::LinearJunction { ya, yb } => {
                for v in [ya, yb] {
                    if !(0.0 < *v && *v < 1.0) {
                        return Err(Error::InvalidInput(format!(
                            "junction endpoint {v} outside (0,1)"
                        )));
                    }
                }
                Ok(())
            }
            PhantomSpec::AnalyticJunction { c0, c1 } => {
                if c0 - c1.abs() <= 0.0 || c0 + c1.abs() >= 1.0 {
                    return Err(Error::InvalidInput(format!(
                        "curve range [{}, {}] leaves (0,1)",
                        c0 - c1.abs(),
                        c0 + c1.abs()
                    )));
                }
                Ok(())
            }
            PhantomSpec::CustomField(f) => f.check_finite(),
        }
    }

    /// Junction height above x, when the phantom is curve-described.
    pub fn curve(&self, x: f64) -> Option<f64> {
        match self {
            PhantomSpec::LinearJunction { ya, yb } => Some(ya + (yb - ya) * x),
            PhantomSpec::AnalyticJunction { c0, c1 } => {
                Some(c0 + c1 * (2.0 * std::f64::consts::PI * x).sin())
            }
            PhantomSpec::CustomField(_) => None,
        }
    }

    /// Nodal conductivity: 1 below the curve, 2 above, 1.5 on it.
    pub fn gamma_field(&self, grid: Grid) -> Result<ScalarField> {
        self.validate()?;
        match self {
            PhantomSpec::CustomField(f) => {
                if f.grid != grid {
                    return Err(Error::GridMismatch(format!(
                        "custom field is {}x{}, requested {}x{}",
                        f.grid.nx, f.grid.ny, grid.nx, grid.ny
                    )));
                }
                Ok(f.clone())
            }
            _ => Ok(ScalarField::from_fn(grid, |x, y| {
                let c = self.curve(x).unwrap();
                if y > c {
                    GAMMA_N
                } else if y < c {
                    GAMMA_P
                } else {
                    0.5 * (GAMMA_P + GAMMA_N)
                }
            })),
        }
    }

    /// Level-set representation of the truth, phi = y - c(x) (negative in
    /// the P region). None for custom fields.
    pub fn phi_field(&self, grid: Grid) -> Option<ScalarField> {
        match self {
            PhantomSpec::CustomField(_) => None,
            _ => Some(ScalarField::from_fn(grid, |x, y| {
                y - self.curve(x).unwrap()
            })),
        }
    }

    /// Exact face conductivities: on each face segment the series
    /// (harmonic) average gamma_f = L / int ds / gamma, with the junction
    /// crossings located exactly. Reproduces the analytic layered solution
    /// to solver precision when the junction lies on a grid line. None for
    /// custom fields (nodal harmonic means apply).
    pub fn face_coefficients(&self, grid: Grid) -> Option<FaceCoefficients> {
        self.curve(0.0)?;
        let (nx, ny) = (grid.nx, grid.ny);
        let mut x_faces = Vec::with_capacity((nx - 1) * ny);
        for j in 0..ny {
            let y = grid.y(j);
            for i in 0..nx - 1 {
                // gamma along the segment is 1 where c(x) > y, 2 where
                // c(x) < y
                let f = |x: f64| self.curve(x).unwrap() - y;
                x_faces.push(segment_harmonic(grid.x(i), grid.x(i + 1), f));
            }
        }
        let mut y_faces = Vec::with_capacity(nx * (ny - 1));
        for j in 0..ny - 1 {
            for i in 0..nx {
                let c = self.curve(grid.x(i)).unwrap();
                let f = move |y: f64| c - y;
                y_faces.push(segment_harmonic(grid.y(j), grid.y(j + 1), f));
            }
        }
        Some(FaceCoefficients::Explicit { x_faces, y_faces })
    }
}

/// Harmonic average of gamma(t) = 1 where f(t) > 0, 2 where f(t) < 0 over
/// [a, b]: crossings of f are bracketed on a fine sampling and refined by
/// bisection, then the resistance integral is summed per constant piece.
fn segment_harmonic(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    const SAMPLES: usize = 32;
    let mut cuts = vec![a];
    let mut t0 = a;
    let mut f0 = f(a);
    for k in 1..=SAMPLES {
        let t1 = a + (b - a) * k as f64 / SAMPLES as f64;
        let f1 = f(t1);
        if f0 != 0.0 && f1 != 0.0 && f0.signum() != f1.signum() {
            cuts.push(bisect(t0, t1, &f));
        }
        t0 = t1;
        f0 = f1;
    }
    cuts.push(b);
    let mut resistance = 0.0;
    for pair in cuts.windows(2) {
        let mid = 0.5 * (pair[0] + pair[1]);
        let g = if f(mid) > 0.0 { GAMMA_P } else { GAMMA_N };
        resistance += (pair[1] - pair[0]) / g;
    }
    (b - a) / resistance
}

fn bisect(mut lo: f64, mut hi: f64, f: &impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
