//! Cell-centered tensor grids in 1D/2D with homogeneous-Neumann discrete
//! operators and the discrete integrals/norms used by the estimate auditor.
//!
//! The Laplacian uses the second-order central stencil with reflected ghost
//! cells, so zero flux through the boundary is exact: the operator is
//! symmetric, annihilates constants and has vanishing row/column sums.

use crate::error::{KymoError, Result};
use serde::{Deserialize, Serialize};

/// Which discrete norm to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    L1,
    L2,
    Linf,
    Lp(f64),
}

/// A uniform cell-centered grid on a product of intervals.
///
/// 1D grids are stored with `cells[1] == 1` and `lengths[1] == 1.0` so the
/// cell volume is `h[0]`; all loops are written over the 2D index space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpecRepr", into = "GridSpecRepr")]
pub struct GridSpec {
    pub dim: usize,
    pub cells: [usize; 2],
    pub lengths: [f64; 2],
}

/// Wire form of [`GridSpec`]: per-axis vectors with exactly `dim` entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpecRepr {
    pub dim: usize,
    pub cells: Vec<usize>,
    pub lengths: Vec<f64>,
}

impl TryFrom<GridSpecRepr> for GridSpec {
    type Error = KymoError;

    fn try_from(r: GridSpecRepr) -> Result<Self> {
        if r.cells.len() != r.dim || r.lengths.len() != r.dim {
            return Err(KymoError::ConfigInvalid {
                violations: vec![format!(
                    "grid: cells and lengths must each have dim = {} entries",
                    r.dim
                )],
            });
        }
        match r.dim {
            1 => Self::new_1d(r.cells[0], r.lengths[0]),
            2 => Self::new_2d(r.cells[0], r.cells[1], r.lengths[0], r.lengths[1]),
            d => Err(KymoError::ConfigInvalid {
                violations: vec![format!("grid: dim must be 1 or 2, got {d}")],
            }),
        }
    }
}

impl From<GridSpec> for GridSpecRepr {
    fn from(g: GridSpec) -> Self {
        GridSpecRepr {
            dim: g.dim,
            cells: g.cells[..g.dim].to_vec(),
            lengths: g.lengths[..g.dim].to_vec(),
        }
    }
}

impl GridSpec {
    pub fn new_1d(n: usize, length: f64) -> Result<Self> {
        Self::build(1, [n, 1], [length, 1.0])
    }

    pub fn new_2d(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        Self::build(2, [nx, ny], [lx, ly])
    }

    fn build(dim: usize, cells: [usize; 2], lengths: [f64; 2]) -> Result<Self> {
        let mut violations = Vec::new();
        if dim != 1 && dim != 2 {
            violations.push(format!("dim must be 1 or 2, got {dim}"));
        }
        for a in 0..dim {
            if cells[a] < 2 {
                violations.push(format!("cells_per_axis[{a}] = {} < 2", cells[a]));
            }
            if !(lengths[a] > 0.0) || !lengths[a].is_finite() {
                violations.push(format!("lengths_per_axis[{a}] = {} not positive", lengths[a]));
            }
        }
        if violations.is_empty() {
            Ok(Self { dim, cells, lengths })
        } else {
            Err(KymoError::ConfigInvalid { violations })
        }
    }

    #[inline]
    pub fn h(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.cells[axis] as f64
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    /// Volume of a single cell (all cells are identical on a uniform grid).
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h(0) * if self.dim == 2 { self.h(1) } else { 1.0 }
    }

    /// measure(Omega)
    #[inline]
    pub fn domain_measure(&self) -> f64 {
        self.lengths[0] * if self.dim == 2 { self.lengths[1] } else { 1.0 }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.cells[0] + i
    }

    /// Coordinates of the center of cell (i, j).
    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            (i as f64 + 0.5) * self.h(0),
            if self.dim == 2 { (j as f64 + 0.5) * self.h(1) } else { 0.0 },
        ]
    }
}

/// A scalar field of cell averages on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(KymoError::ConfigInvalid {
                violations: vec![format!(
                    "field has {} values but grid has {} cells",
                    values.len(),
                    grid.cell_count()
                )],
            });
        }
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(KymoError::ConfigInvalid {
                violations: vec![format!("non-finite value {value} in cell {cell}")],
            });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self { grid, values: vec![c; grid.cell_count()] }
    }

    /// Fill from a function of the cell-center coordinates.
    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 2]) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.cell_count());
        for j in 0..grid.cells[1] {
            for i in 0..grid.cells[0] {
                values.push(f(grid.cell_center(i, j)));
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pointwise map into a new field.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(self.grid, other.grid, "fields on different grids");
        Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// Matrix-free application of the Neumann Laplacian to a raw slice.
///
/// Boundary faces carry zero flux (reflected ghost), so for every cell the
/// stencil sums `(neighbor - center)/h^2` over the neighbors that exist.
pub fn laplacian_apply(grid: &GridSpec, src: &[f64], dst: &mut [f64]) {
    let (nx, ny) = (grid.cells[0], grid.cells[1]);
    let ihx2 = 1.0 / (grid.h(0) * grid.h(0));
    let ihy2 = if grid.dim == 2 { 1.0 / (grid.h(1) * grid.h(1)) } else { 0.0 };
    for j in 0..ny {
        for i in 0..nx {
            let c = grid.idx(i, j);
            let mut acc = 0.0;
            if i > 0 {
                acc += (src[c - 1] - src[c]) * ihx2;
            }
            if i + 1 < nx {
                acc += (src[c + 1] - src[c]) * ihx2;
            }
            if grid.dim == 2 {
                if j > 0 {
                    acc += (src[c - nx] - src[c]) * ihy2;
                }
                if j + 1 < ny {
                    acc += (src[c + nx] - src[c]) * ihy2;
                }
            }
            dst[c] = acc;
        }
    }
}

/// Discrete Neumann Laplacian of a field.
pub fn laplacian_neumann(f: &Field) -> Field {
    let mut out = vec![0.0; f.grid.cell_count()];
    laplacian_apply(&f.grid, f.values(), &mut out);
    Field { grid: f.grid, values: out }
}

/// Integral over the domain: sum of values times cell volume.
pub fn integrate(f: &Field) -> f64 {
    let vol = f.grid.cell_volume();
    f.values().iter().sum::<f64>() * vol
}

/// Mean value over the domain.
pub fn mean(f: &Field) -> f64 {
    integrate(f) / f.grid.domain_measure()
}

/// Discrete Lp/Linf norm with cell-volume weights.
pub fn norm(f: &Field, which: NormKind) -> f64 {
    let vol = f.grid.cell_volume();
    match which {
        NormKind::L1 => f.values().iter().map(|v| v.abs()).sum::<f64>() * vol,
        NormKind::L2 => (f.values().iter().map(|v| v * v).sum::<f64>() * vol).sqrt(),
        NormKind::Linf => f.values().iter().fold(0.0f64, |m, v| m.max(v.abs())),
        NormKind::Lp(p) => {
            assert!(p >= 1.0, "Lp norm requires p >= 1, got {p}");
            (f.values().iter().map(|v| v.abs().powf(p)).sum::<f64>() * vol).powf(1.0 / p)
        }
    }
}

/// Volume-weighted inner product of two fields.
pub fn inner(f: &Field, g: &Field) -> f64 {
    assert_eq!(f.grid, g.grid, "fields on different grids");
    f.values()
        .iter()
        .zip(g.values())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        * f.grid.cell_volume()
}

/// Visit every interior face: callback gets the two adjacent cell indices and
/// the one-sided difference quotient across the face. Boundary faces have zero
/// flux and are skipped. Face "volume" equals the cell volume.
pub fn for_each_face(grid: &GridSpec, values: &[f64], mut visit: impl FnMut(usize, usize, f64)) {
    let (nx, ny) = (grid.cells[0], grid.cells[1]);
    let hx = grid.h(0);
    for j in 0..ny {
        for i in 0..nx - 1 {
            let a = grid.idx(i, j);
            let b = grid.idx(i + 1, j);
            visit(a, b, (values[b] - values[a]) / hx);
        }
    }
    if grid.dim == 2 {
        let hy = grid.h(1);
        for j in 0..ny - 1 {
            for i in 0..nx {
                let a = grid.idx(i, j);
                let b = grid.idx(i, j + 1);
                visit(a, b, (values[b] - values[a]) / hy);
            }
        }
    }
}

/// Lp aggregate of the face-based gradient magnitude with face-volume weights.
pub fn grad_norm(f: &Field, p: f64) -> f64 {
    assert!(p >= 1.0, "grad_norm requires p >= 1, got {p}");
    let vol = f.grid.cell_volume();
    let mut acc = 0.0;
    for_each_face(&f.grid, f.values(), |_, _, d| {
        acc += d.abs().powf(p) * vol;
    });
    acc.powf(1.0 / p)
}

/// Entropy integral of a nonnegative field with the convention 0 log 0 := 0.
///
/// Rejects any negative value: a negative input signals loss of positivity
/// upstream, not a modeling event.
pub fn entropy(f: &Field) -> Result<f64> {
    if let Some((cell, &value)) = f.values().iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(KymoError::NegativeInput { cell, value });
    }
    let vol = f.grid.cell_volume();
    Ok(f
        .values()
        .iter()
        .map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 })
        .sum::<f64>()
        * vol)
}
