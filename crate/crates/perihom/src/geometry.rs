//! Unit-cell geometry and its ε-tilings.
//!
//! The reference cell is Y = (0,1)² containing an axis-aligned open box
//! inclusion Y₂ whose closure stays strictly inside Y; the matrix phase is
//! Y₁ = Y \ closure(Y₂) and the interface Σ = ∂Y₂. The macro domain
//! Ω = (0,1)² is covered by n×n copies of the cell scaled by ε = 1/n, so the
//! inclusion pattern, its interface Σ^ε, and the phase indicator all repeat
//! with period ε.
//!
//! Everything here is exact integer bookkeeping on a structured grid: the
//! inclusion bounds must land on grid lines (aᵢ·m and bᵢ·m integer), every
//! interface facet is a full grid edge, and measures are computed as one
//! integer count divided once by the exact denominator. That makes the
//! scaling identity ε·|Σ^ε| = |Ω|·|Σ|_Y hold to the last bit, which the
//! convergence harness uses as a canary.

use crate::error::{Error, Result};

/// Hard cap on cells per grid side; beyond this a resource error is raised
/// before any allocation. The finest grid exercised by the standard sweep is
/// 512 cells per side.
pub const MAX_CELLS_PER_SIDE: usize = 4096;

/// Tolerance for deciding that a scaled inclusion bound hits a grid line.
const ALIGNMENT_TOL: f64 = 1e-9;

/// Phase label of a point or cell: the connected matrix or the inclusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Y₁, the matrix phase surrounding the inclusion.
    Matrix,
    /// Y₂, the strictly interior inclusion.
    Inclusion,
}

/// One interface facet: a full grid edge lying on Σ (or Σ^ε), together with
/// its endpoints, midpoint, unit normal, and the two cells it separates.
/// The normal points out of the matrix phase, into the inclusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    /// Endpoint node indices on the owning grid.
    pub nodes: [usize; 2],
    /// Facet midpoint in the owning domain's coordinates.
    pub midpoint: [f64; 2],
    /// Unit normal, out of Y₁ into Y₂. Axis-aligned: ±e₁ or ±e₂.
    pub normal: [f64; 2],
    /// Adjacent cell on the matrix side.
    pub cell_matrix: usize,
    /// Adjacent cell on the inclusion side.
    pub cell_inclusion: usize,
}

/// The two-phase reference cell: an axis-aligned box inclusion inside the
/// unit square, plus the resolution hint m (cells per cell side) used when a
/// discrete measure is needed and no explicit resolution is given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    dim: usize,
    inclusion_min: [f64; 2],
    inclusion_max: [f64; 2],
    m_hint: usize,
}

/// Integer bounds of the inclusion on an m-grid: cell index ranges
/// [ix0,ix1) × [iy0,iy1) are inclusion cells.
#[derive(Debug, Clone, Copy)]
struct GridBox {
    lo: [usize; 2],
    hi: [usize; 2],
}

impl CellGeometry {
    /// Validates and builds a cell geometry. The inclusion must keep a
    /// positive distance from ∂Y in every direction.
    pub fn new(
        dim: usize,
        inclusion_min: [f64; 2],
        inclusion_max: [f64; 2],
        m_hint: usize,
    ) -> Result<CellGeometry> {
        if dim != 2 {
            return Err(Error::Config(format!(
                "geometry.dim: only dim = 2 is supported (got {dim})"
            )));
        }
        if m_hint < 2 {
            return Err(Error::Config(format!(
                "geometry resolution hint m must be at least 2 (got {m_hint})"
            )));
        }
        for axis in 0..2 {
            let (a, b) = (inclusion_min[axis], inclusion_max[axis]);
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::Config(format!(
                    "geometry.inclusion: bounds on axis {axis} must be finite"
                )));
            }
            if !(0.0 < a && a < b && b < 1.0) {
                return Err(Error::Config(format!(
                    "geometry.inclusion: need 0 < min < max < 1 on axis {axis} \
                     (got [{a}, {b}]); the inclusion closure must stay inside the open cell"
                )));
            }
        }
        Ok(CellGeometry { dim, inclusion_min, inclusion_max, m_hint })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inclusion_min(&self) -> [f64; 2] {
        self.inclusion_min
    }

    pub fn inclusion_max(&self) -> [f64; 2] {
        self.inclusion_max
    }

    /// Resolution hint used by measure computations that take no explicit m.
    pub fn m_hint(&self) -> usize {
        self.m_hint
    }

    /// Phase of a point of the half-open cell [0,1)². Points exactly on Σ
    /// report the matrix phase (tie-break toward Y₁, consistent with the
    /// open-inclusion convention).
    pub fn phase_indicator(&self, y: [f64; 2]) -> Result<Phase> {
        for axis in 0..2 {
            if !(0.0 <= y[axis] && y[axis] < 1.0) || y[axis].is_nan() {
                return Err(Error::Domain(format!(
                    "point ({}, {}) lies outside the half-open unit cell [0,1)^2",
                    y[0], y[1]
                )));
            }
        }
        let inside = (0..2).all(|axis| {
            self.inclusion_min[axis] < y[axis] && y[axis] < self.inclusion_max[axis]
        });
        Ok(if inside { Phase::Inclusion } else { Phase::Matrix })
    }

    /// Integer inclusion bounds at resolution m, or a configuration error if
    /// a scaled bound misses the grid or the discrete inclusion touches ∂Y.
    fn grid_box(&self, m: usize) -> Result<GridBox> {
        let mut lo = [0usize; 2];
        let mut hi = [0usize; 2];
        for axis in 0..2 {
            lo[axis] = aligned_index(self.inclusion_min[axis], m, axis, "min")?;
            hi[axis] = aligned_index(self.inclusion_max[axis], m, axis, "max")?;
            if !(1 <= lo[axis] && lo[axis] < hi[axis] && hi[axis] <= m - 1) {
                return Err(Error::Config(format!(
                    "geometry.inclusion: at resolution m = {m} the inclusion spans cell \
                     columns [{}, {}) on axis {axis}, which does not stay strictly inside \
                     the cell",
                    lo[axis], hi[axis]
                )));
            }
        }
        Ok(GridBox { lo, hi })
    }

    /// True when the inclusion bounds land on the m-grid.
    pub fn is_aligned(&self, m: usize) -> bool {
        self.grid_box(m).is_ok()
    }

    /// Number of interface facets at resolution m.
    pub fn facet_count(&self, m: usize) -> Result<usize> {
        let b = self.grid_box(m)?;
        Ok(2 * (b.hi[0] - b.lo[0]) + 2 * (b.hi[1] - b.lo[1]))
    }

    /// Discrete interface measure |Σ|: facet count times facet length,
    /// computed as a single division so it equals the analytic perimeter to
    /// the last bit whenever the bounds are exactly representable.
    pub fn sigma_measure(&self, m: usize) -> Result<f64> {
        Ok(self.facet_count(m)? as f64 / m as f64)
    }

    /// Analytic interface measure: the box perimeter 2·Σᵢ (bᵢ − aᵢ).
    pub fn sigma_measure_analytic(&self) -> f64 {
        2.0 * ((self.inclusion_max[0] - self.inclusion_min[0])
            + (self.inclusion_max[1] - self.inclusion_min[1]))
    }

    /// Volume fractions (|Y₁|, |Y₂|) from exact cell counts at resolution m.
    pub fn volume_fractions(&self, m: usize) -> Result<[f64; 2]> {
        let b = self.grid_box(m)?;
        let inclusion_cells = (b.hi[0] - b.lo[0]) * (b.hi[1] - b.lo[1]);
        let total = m * m;
        Ok([
            (total - inclusion_cells) as f64 / total as f64,
            inclusion_cells as f64 / total as f64,
        ])
    }

    /// Volume fractions at the stored resolution hint.
    pub fn volume_fractions_hint(&self) -> Result<[f64; 2]> {
        self.volume_fractions(self.m_hint)
    }

    /// Interface facets of the unit cell at resolution m, each a full grid
    /// edge of length 1/m. Equivalent to `tile(1, m).facets()`.
    pub fn interface_facets(&self, m: usize) -> Result<Vec<Facet>> {
        Ok(self.tile(1, m)?.facets)
    }

    /// Tiles Ω = (0,1)² with n×n copies of the cell at ε = 1/n, resolving
    /// each tile with m cells per side.
    pub fn tile(&self, n: usize, m: usize) -> Result<TiledDomain> {
        if n == 0 {
            return Err(Error::Domain(
                "tiling requires at least one tile per side (ε = 1/n with n ≥ 1)".into(),
            ));
        }
        let cells = n
            .checked_mul(m)
            .filter(|&c| c <= MAX_CELLS_PER_SIDE)
            .ok_or_else(|| {
                Error::Resource(format!(
                    "grid of {n}×{m} cells per side exceeds the maximum of \
                     {MAX_CELLS_PER_SIDE}"
                ))
            })?;
        let b = self.grid_box(m)?;

        let mut phase = vec![Phase::Matrix; cells * cells];
        for cy in 0..cells {
            let ly = cy % m;
            let row_inside = b.lo[1] <= ly && ly < b.hi[1];
            if !row_inside {
                continue;
            }
            for cx in 0..cells {
                let lx = cx % m;
                if b.lo[0] <= lx && lx < b.hi[0] {
                    phase[cy * cells + cx] = Phase::Inclusion;
                }
            }
        }

        let h = 1.0 / cells as f64;
        let nodes_per_side = cells + 1;
        let node = |ix: usize, iy: usize| iy * nodes_per_side + ix;
        let cell = |cx: usize, cy: usize| cy * cells + cx;
        let mut facets =
            Vec::with_capacity(n * n * (2 * (b.hi[0] - b.lo[0]) + 2 * (b.hi[1] - b.lo[1])));
        for ty in 0..n {
            for tx in 0..n {
                let (ox, oy) = (tx * m, ty * m);
                // Vertical sides: left (normal +e1), then right (normal -e1).
                for (gx, normal) in [(ox + b.lo[0], [1.0, 0.0]), (ox + b.hi[0], [-1.0, 0.0])] {
                    for gy in oy + b.lo[1]..oy + b.hi[1] {
                        let (inner, outer) = (cell(gx, gy), cell(gx - 1, gy));
                        let (cm, ci) = if normal[0] > 0.0 { (outer, inner) } else { (inner, outer) };
                        facets.push(Facet {
                            nodes: [node(gx, gy), node(gx, gy + 1)],
                            midpoint: [gx as f64 * h, (gy as f64 + 0.5) * h],
                            normal,
                            cell_matrix: cm,
                            cell_inclusion: ci,
                        });
                    }
                }
                // Horizontal sides: bottom (normal +e2), then top (normal -e2).
                for (gy, normal) in [(oy + b.lo[1], [0.0, 1.0]), (oy + b.hi[1], [0.0, -1.0])] {
                    for gx in ox + b.lo[0]..ox + b.hi[0] {
                        let (upper, lower) = (cell(gx, gy), cell(gx, gy - 1));
                        let (cm, ci) = if normal[1] > 0.0 { (lower, upper) } else { (upper, lower) };
                        facets.push(Facet {
                            nodes: [node(gx, gy), node(gx + 1, gy)],
                            midpoint: [(gx as f64 + 0.5) * h, gy as f64 * h],
                            normal,
                            cell_matrix: cm,
                            cell_inclusion: ci,
                        });
                    }
                }
            }
        }

        Ok(TiledDomain {
            geometry: *self,
            n,
            tile_cells: m,
            cells,
            phase,
            facets,
        })
    }
}

/// Checks that `coord`·m hits an integer grid index and returns it.
fn aligned_index(coord: f64, m: usize, axis: usize, side: &str) -> Result<usize> {
    let t = coord * m as f64;
    let i = t.round();
    if (t - i).abs() > ALIGNMENT_TOL * (m as f64) {
        return Err(Error::Config(format!(
            "geometry.inclusion.{side}[{axis}]: {coord} does not align with the grid at \
             resolution m = {m} ({coord}·{m} = {t} is not an integer)"
        )));
    }
    Ok(i as usize)
}

/// The macro domain Ω = (0,1)² tiled by n×n ε-cells, discretized with a
/// uniform structured grid of n·m cells per side. Owns the per-cell phase
/// labels and the full list of interface facets Σ^ε.
#[derive(Debug, Clone)]
pub struct TiledDomain {
    geometry: CellGeometry,
    n: usize,
    tile_cells: usize,
    cells: usize,
    phase: Vec<Phase>,
    facets: Vec<Facet>,
}

impl TiledDomain {
    pub fn geometry(&self) -> &CellGeometry {
        &self.geometry
    }

    /// Tiles per side; ε = 1/n.
    pub fn tiles_per_side(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Cells per tile side.
    pub fn tile_cells(&self) -> usize {
        self.tile_cells
    }

    /// Cells per domain side.
    pub fn cells_per_side(&self) -> usize {
        self.cells
    }

    pub fn cell_count(&self) -> usize {
        self.cells * self.cells
    }

    pub fn nodes_per_side(&self) -> usize {
        self.cells + 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_side() * self.nodes_per_side()
    }

    /// Grid spacing h = 1/(n·m).
    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn cell_index(&self, cx: usize, cy: usize) -> usize {
        cy * self.cells + cx
    }

    pub fn phase(&self, cell: usize) -> Phase {
        self.phase[cell]
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phase
    }

    /// Midpoint of a cell in macro coordinates.
    pub fn cell_midpoint(&self, cell: usize) -> [f64; 2] {
        let (cx, cy) = (cell % self.cells, cell / self.cells);
        let h = self.h();
        [(cx as f64 + 0.5) * h, (cy as f64 + 0.5) * h]
    }

    /// Midpoint of a cell mapped to unit-cell coordinates, i.e. the
    /// fractional part of midpoint/ε. Exact by construction: the local cell
    /// index inside the tile determines it directly.
    pub fn cell_y(&self, cell: usize) -> [f64; 2] {
        let (cx, cy) = (cell % self.cells, cell / self.cells);
        let m = self.tile_cells as f64;
        [
            ((cx % self.tile_cells) as f64 + 0.5) / m,
            ((cy % self.tile_cells) as f64 + 0.5) / m,
        ]
    }

    /// Interface facets of Σ^ε, each a full grid edge of length h.
    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    /// |Σ^ε| as a single exact division: facet count / (n·m).
    pub fn sigma_measure(&self) -> f64 {
        self.facets.len() as f64 / self.cells as f64
    }

    /// ε·|Σ^ε| as a single exact division: facet count / (n²·m). Bitwise
    /// equal to |Ω|·|Σ|_Y for every aligned geometry.
    pub fn eps_sigma_measure(&self) -> f64 {
        self.facets.len() as f64 / (self.n * self.cells) as f64
    }

    /// Volume fraction of each phase from exact cell counts.
    pub fn volume_fractions(&self) -> [f64; 2] {
        let inclusion = self.phase.iter().filter(|&&p| p == Phase::Inclusion).count();
        let total = self.cell_count();
        [(total - inclusion) as f64 / total as f64, inclusion as f64 / total as f64]
    }
}
