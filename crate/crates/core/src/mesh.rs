//! Rectangular-grid geometry, boundary labeling and field containers shared
//! by all solvers. The domain is fixed to the unit square [0,1]^2 with
//! node-centered uniform spacing.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Node-centered uniform grid on the unit square.
///
/// Node (i, j) sits at (i*hx, j*hy) with 0 <= i < nx, 0 <= j < ny.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidInput(format!(
                "grid must be at least 3x3, got {nx}x{ny}"
            )));
        }
        Ok(Grid {
            nx,
            ny,
            hx: 1.0 / (nx - 1) as f64,
            hy: 1.0 / (ny - 1) as f64,
        })
    }

    /// Square grid shortcut.
    pub fn square(n: usize) -> Result<Self> {
        Grid::new(n, n)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Dual-cell width in x associated with node column i (h/2 at the ends).
    #[inline]
    pub fn cell_wx(&self, i: usize) -> f64 {
        if i == 0 || i == self.nx - 1 {
            0.5 * self.hx
        } else {
            self.hx
        }
    }

    /// Dual-cell width in y associated with node row j.
    #[inline]
    pub fn cell_wy(&self, j: usize) -> f64 {
        if j == 0 || j == self.ny - 1 {
            0.5 * self.hy
        } else {
            self.hy
        }
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }
}

/// The four edges of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Bottom,
    Top,
    Left,
    Right,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Bottom, Edge::Top, Edge::Left, Edge::Right];
}

/// Boundary role carried by a boundary node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryLabel {
    /// Source contact (Dirichlet, applied voltage U).
    SourceContact,
    /// Measurement contact (Dirichlet, current read, U = 0).
    MeasureContact,
    /// Insulating part (homogeneous Neumann).
    Insulating,
}

impl BoundaryLabel {
    pub fn is_dirichlet(self) -> bool {
        !matches!(self, BoundaryLabel::Insulating)
    }

    /// Corner precedence rank: higher wins. Dirichlet beats Neumann; the
    /// measurement contact beats the source contact so that U = 0 on
    /// shared corners is preserved.
    fn rank(self) -> u8 {
        match self {
            BoundaryLabel::MeasureContact => 2,
            BoundaryLabel::SourceContact => 1,
            BoundaryLabel::Insulating => 0,
        }
    }
}

/// Per-edge boundary assignment with an optional sub-interval restriction
/// (in the natural edge coordinate, a subset of [0,1]); nodes outside the
/// interval fall back to the insulating label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSpec {
    pub label: BoundaryLabel,
    pub interval: Option<(f64, f64)>,
}

impl EdgeSpec {
    pub fn full(label: BoundaryLabel) -> Self {
        EdgeSpec {
            label,
            interval: None,
        }
    }
}

/// Partition of the boundary into source contact, measurement contact and
/// insulating segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySpec {
    pub bottom: EdgeSpec,
    pub top: EdgeSpec,
    pub left: EdgeSpec,
    pub right: EdgeSpec,
}

impl BoundarySpec {
    /// Default contact assignment: source at y = 1, measurement at y = 0,
    /// insulating sides.
    pub fn source_top_measure_bottom() -> Self {
        BoundarySpec {
            bottom: EdgeSpec::full(BoundaryLabel::MeasureContact),
            top: EdgeSpec::full(BoundaryLabel::SourceContact),
            left: EdgeSpec::full(BoundaryLabel::Insulating),
            right: EdgeSpec::full(BoundaryLabel::Insulating),
        }
    }

    pub fn edge(&self, e: Edge) -> EdgeSpec {
        match e {
            Edge::Bottom => self.bottom,
            Edge::Top => self.top,
            Edge::Left => self.left,
            Edge::Right => self.right,
        }
    }

    /// Raw label an edge assigns to one of its nodes, before corner
    /// precedence is applied.
    pub fn edge_label_at(&self, e: Edge, t: f64) -> BoundaryLabel {
        let spec = self.edge(e);
        match spec.interval {
            Some((a, b)) if t < a - 1e-12 || t > b + 1e-12 => BoundaryLabel::Insulating,
            _ => spec.label,
        }
    }

    /// Resolved label of a boundary node. Corner nodes belong to two edges
    /// and resolve by fixed precedence (Dirichlet over Neumann, measurement
    /// over source).
    pub fn node_label(&self, grid: &Grid, i: usize, j: usize) -> Option<BoundaryLabel> {
        if !grid.is_boundary(i, j) {
            return None;
        }
        let mut best: Option<BoundaryLabel> = None;
        let mut consider = |lab: BoundaryLabel| {
            best = Some(match best {
                Some(b) if b.rank() >= lab.rank() => b,
                _ => lab,
            });
        };
        if j == 0 {
            consider(self.edge_label_at(Edge::Bottom, grid.x(i)));
        }
        if j == grid.ny - 1 {
            consider(self.edge_label_at(Edge::Top, grid.x(i)));
        }
        if i == 0 {
            consider(self.edge_label_at(Edge::Left, grid.y(j)));
        }
        if i == grid.nx - 1 {
            consider(self.edge_label_at(Edge::Right, grid.y(j)));
        }
        best
    }

    /// Ordered node indices on edges carrying `label`, in the natural
    /// parametrization of each edge (coordinate increasing), edges visited
    /// bottom, top, left, right. Every boundary node appears under exactly
    /// one label.
    pub fn boundary_nodes(&self, grid: &Grid, label: BoundaryLabel) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let push = |i: usize, j: usize, out: &mut Vec<(usize, usize)>| {
            if self.node_label(grid, i, j) == Some(label) && !out.contains(&(i, j)) {
                out.push((i, j));
            }
        };
        for i in 0..grid.nx {
            push(i, 0, &mut out);
        }
        for i in 0..grid.nx {
            push(i, grid.ny - 1, &mut out);
        }
        for j in 0..grid.ny {
            push(0, j, &mut out);
        }
        for j in 0..grid.ny {
            push(grid.nx - 1, j, &mut out);
        }
        out
    }

    /// Checks that both contacts are nonempty on the given grid.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        for (lab, name) in [
            (BoundaryLabel::SourceContact, "source contact"),
            (BoundaryLabel::MeasureContact, "measurement contact"),
        ] {
            if self.boundary_nodes(grid, lab).is_empty() {
                return Err(Error::InvalidInput(format!("{name} is empty")));
            }
        }
        Ok(())
    }
}

/// Real-valued field on the nodes of a grid, row-major (j outer, i inner).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn constant(grid: Grid, c: f64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(grid.x(i), grid.y(j)));
            }
        }
        ScalarField { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        let f = ScalarField { grid, values };
        f.check_finite()?;
        Ok(f)
    }

    pub fn check_finite(&self) -> Result<()> {
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at node {} ({}, {})",
                k,
                k % self.grid.nx,
                k / self.grid.nx
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.idx(i, j);
        self.values[k] = v;
    }

    pub fn same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{}x{} vs {}x{}",
                self.grid.nx, self.grid.ny, other.grid.nx, other.grid.ny
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.same_grid(other)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn axpy(&mut self, a: f64, other: &ScalarField) -> Result<()> {
        self.same_grid(other)?;
        for (v, &o) in self.values.iter_mut().zip(&other.values) {
            *v += a * o;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Discrete L2 inner product with dual-cell quadrature weights
    /// (weights sum to the domain area).
    pub fn inner_l2(&self, other: &ScalarField) -> Result<f64> {
        self.same_grid(other)?;
        let g = &self.grid;
        let mut acc = 0.0;
        for j in 0..g.ny {
            let wy = g.cell_wy(j);
            for i in 0..g.nx {
                acc += g.cell_wx(i) * wy * self.at(i, j) * other.at(i, j);
            }
        }
        Ok(acc)
    }
}

/// Discrete norms of a field: L2 norm, H1 gradient seminorm (forward
/// differences) and anisotropic total variation of the field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h1_semi: f64,
    pub bv: f64,
}

pub fn norms(f: &ScalarField) -> Result<Norms> {
    f.check_finite()?;
    let g = &f.grid;
    let mut l2 = 0.0;
    for j in 0..g.ny {
        let wy = g.cell_wy(j);
        for i in 0..g.nx {
            let v = f.at(i, j);
            l2 += g.cell_wx(i) * wy * v * v;
        }
    }
    let mut h1 = 0.0;
    let mut bv = 0.0;
    // x-differences live on horizontal edges, weighted by hx * cell_wy
    for j in 0..g.ny {
        let wy = g.cell_wy(j);
        for i in 0..g.nx - 1 {
            let d = (f.at(i + 1, j) - f.at(i, j)) / g.hx;
            h1 += d * d * g.hx * wy;
            bv += d.abs() * g.hx * wy;
        }
    }
    // y-differences on vertical edges
    for j in 0..g.ny - 1 {
        for i in 0..g.nx {
            let wx = g.cell_wx(i);
            let d = (f.at(i, j + 1) - f.at(i, j)) / g.hy;
            h1 += d * d * wx * g.hy;
            bv += d.abs() * wx * g.hy;
        }
    }
    Ok(Norms {
        l2: l2.sqrt(),
        h1_semi: h1.sqrt(),
        bv,
    })
}

/// Writes a field in the text format: `field <nx> <ny>` then ny rows of nx
/// floats, bottom row first. Round-trips to 17 significant digits.
pub fn write_field_string(f: &ScalarField) -> String {
    let g = &f.grid;
    let mut s = String::new();
    let _ = writeln!(s, "field {} {}", g.nx, g.ny);
    for j in 0..g.ny {
        for i in 0..g.nx {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{:.16e}", f.at(i, j));
        }
        s.push('\n');
    }
    s
}

pub fn write_field(f: &ScalarField, path: &Path) -> Result<()> {
    std::fs::write(path, write_field_string(f))?;
    Ok(())
}

pub fn read_field_string(s: &str) -> Result<ScalarField> {
    let mut lines = s.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty field file".into()))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("field") {
        return Err(Error::Parse("field file must start with `field`".into()));
    }
    let nx: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse("bad nx in field header".into()))?;
    let ny: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse("bad ny in field header".into()))?;
    let grid = Grid::new(nx, ny)?;
    let mut values = Vec::with_capacity(nx * ny);
    for (j, line) in lines.take(ny).enumerate() {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("row {j}: {e}")))?;
        if row.len() != nx {
            return Err(Error::Parse(format!(
                "row {j} has {} values, expected {nx}",
                row.len()
            )));
        }
        values.extend(row);
    }
    ScalarField::from_values(grid, values)
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    read_field_string(&std::fs::read_to_string(path)?)
}
