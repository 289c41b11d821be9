//! Q1 finite elements on structured square grids.
//!
//! Grids are uniform with `cells` cells per side and spacing h = 1/cells;
//! node (ix, iy) has index iy·(cells+1) + ix. Two boundary treatments are
//! supported: homogeneous Dirichlet (boundary DOFs eliminated) and periodic
//! (opposite faces identified, used by the cell problems together with a
//! zero-mean constraint in the solver).
//!
//! Quadrature choices are part of the discretization contract:
//!
//! * stiffness uses 2×2 Gauss per cell, exact for bilinear gradients with a
//!   cell-constant coefficient sampled at the cell midpoint;
//! * volume loads use trapezoid lumping, i.e. each cell sends
//!   f(midpoint)·h²/4 to each of its four corners;
//! * interface loads sample γ at the facet midpoint and split the facet
//!   integral ε·γ·h equally between the two endpoint nodes.
//!
//! Coefficients are sampled at cell midpoints. Inclusion boundaries land on
//! grid lines by construction, so no cell ever straddles the interface.

use crate::coeffs::{CoefficientSet, Tensor2};
use crate::error::{Error, Result};
use crate::geometry::TiledDomain;
use std::collections::BTreeMap;

/// Local corner order of a cell: (0,0), (1,0), (0,1), (1,1) in grid offsets.
pub(crate) const NODE_OFFSETS: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

/// 2-point Gauss abscissae on [0,1].
pub(crate) const GAUSS_PTS: [f64; 2] = [
    0.5 - 0.5 / 1.732_050_807_568_877_2,
    0.5 + 0.5 / 1.732_050_807_568_877_2,
];

/// Reference gradients of the Q1 shape functions at (ξ, η).
pub(crate) fn shape_grad(a: usize, xi: f64, eta: f64) -> [f64; 2] {
    match a {
        0 => [-(1.0 - eta), -(1.0 - xi)],
        1 => [1.0 - eta, -xi],
        2 => [-eta, 1.0 - xi],
        3 => [eta, xi],
        _ => unreachable!("Q1 cell has four shape functions"),
    }
}

/// Q1 shape function values at (ξ, η).
pub(crate) fn shape_value(a: usize, xi: f64, eta: f64) -> f64 {
    match a {
        0 => (1.0 - xi) * (1.0 - eta),
        1 => xi * (1.0 - eta),
        2 => (1.0 - xi) * eta,
        3 => xi * eta,
        _ => unreachable!("Q1 cell has four shape functions"),
    }
}

/// Element stiffness for a cell-constant tensor. In 2D the element matrix is
/// independent of h (the h² area factor cancels the two 1/h gradient
/// scalings). Computed on the upper triangle and mirrored, so it is
/// symmetric to the last bit.
pub(crate) fn element_stiffness(t: &Tensor2) -> [[f64; 4]; 4] {
    let mut k = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in a..4 {
            let mut acc = 0.0;
            for &xi in &GAUSS_PTS {
                for &eta in &GAUSS_PTS {
                    let ga = shape_grad(a, xi, eta);
                    let gb = t.apply(shape_grad(b, xi, eta));
                    acc += 0.25 * (ga[0] * gb[0] + ga[1] * gb[1]);
                }
            }
            k[a][b] = acc;
            k[b][a] = acc;
        }
    }
    k
}

/// Boundary treatment of a grid problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// Homogeneous Dirichlet: boundary nodes are eliminated.
    DirichletZero,
    /// Opposite faces identified; the constant nullspace is handled by the
    /// solver's zero-mean constraint.
    PeriodicZeroMean,
}

/// Mapping from grid nodes to equation indices for a boundary treatment.
#[derive(Debug, Clone)]
pub struct DofMap {
    bc: BoundaryCondition,
    cells: usize,
    node_to_eq: Vec<Option<usize>>,
    n_eq: usize,
}

impl DofMap {
    pub fn new(cells: usize, bc: BoundaryCondition) -> DofMap {
        let np = cells + 1;
        let mut node_to_eq = vec![None; np * np];
        let n_eq = match bc {
            BoundaryCondition::DirichletZero => {
                let interior = cells.saturating_sub(1);
                for iy in 1..cells {
                    for ix in 1..cells {
                        node_to_eq[iy * np + ix] = Some((iy - 1) * interior + (ix - 1));
                    }
                }
                interior * interior
            }
            BoundaryCondition::PeriodicZeroMean => {
                for iy in 0..np {
                    for ix in 0..np {
                        let (rx, ry) = (ix % cells, iy % cells);
                        node_to_eq[iy * np + ix] = Some(ry * cells + rx);
                    }
                }
                cells * cells
            }
        };
        DofMap { bc, cells, node_to_eq, n_eq }
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn n_equations(&self) -> usize {
        self.n_eq
    }

    pub fn eq_of_node(&self, node: usize) -> Option<usize> {
        self.node_to_eq[node]
    }

    /// Folds a per-node vector into equation space: identified nodes add up,
    /// eliminated nodes drop out.
    pub fn reduce(&self, nodal: &[f64]) -> Vec<f64> {
        assert_eq!(nodal.len(), self.node_to_eq.len(), "nodal vector length mismatch");
        let mut out = vec![0.0; self.n_eq];
        for (node, &eq) in self.node_to_eq.iter().enumerate() {
            if let Some(eq) = eq {
                out[eq] += nodal[node];
            }
        }
        out
    }

    /// Expands an equation vector to nodes: eliminated nodes become exact
    /// zeros, identified nodes copy their representative.
    pub fn scatter(&self, eq: &[f64]) -> Vec<f64> {
        assert_eq!(eq.len(), self.n_eq, "equation vector length mismatch");
        self.node_to_eq
            .iter()
            .map(|e| e.map_or(0.0, |i| eq[i]))
            .collect()
    }
}

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Freezes per-row maps (column → value) into CSR.
    pub fn from_rows(rows: Vec<BTreeMap<usize, f64>>) -> CsrMatrix {
        let n = rows.len();
        let nnz: usize = rows.iter().map(|r| r.len()).sum();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// y = K x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] = acc;
        }
    }

    /// Entry (i, j), zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.cols[lo..hi].binary_search(&j) {
            Ok(k) => self.vals[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// xᵀ K x.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut kx = vec![0.0; self.n];
        self.matvec(x, &mut kx);
        dot(x, &kx)
    }

    /// Checks K_ij = K_ji exactly on a deterministic sample of rows spread
    /// across the matrix. Full verification would double assembly cost; the
    /// sample catches the systematic asymmetries that matter in practice.
    pub fn spot_check_symmetric(&self, max_rows: usize) -> bool {
        if self.n == 0 {
            return true;
        }
        let stride = (self.n / max_rows.max(1)).max(1);
        for i in (0..self.n).step_by(stride) {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                if self.get(j, i) != self.vals[k] {
                    return false;
                }
            }
        }
        true
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A scalar field given by nodal values on a structured grid, tagged with
/// its boundary treatment.
#[derive(Debug, Clone)]
pub struct GridField {
    cells: usize,
    bc: BoundaryCondition,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(cells: usize, bc: BoundaryCondition) -> GridField {
        let np = cells + 1;
        GridField { cells, bc, values: vec![0.0; np * np] }
    }

    /// Builds the nodal field of an equation-space solution. Dirichlet
    /// boundary nodes come out as exact zeros; periodic wrap nodes copy
    /// their representative, so wrap equality holds to the last bit.
    pub fn from_equations(dofs: &DofMap, eq: &[f64]) -> GridField {
        GridField { cells: dofs.cells(), bc: dofs.bc(), values: dofs.scatter(eq) }
    }

    /// Wraps explicit nodal values.
    pub fn from_nodal(cells: usize, bc: BoundaryCondition, values: Vec<f64>) -> Result<GridField> {
        let np = cells + 1;
        if values.len() != np * np {
            return Err(Error::Contract(format!(
                "nodal vector has {} entries, grid with {cells} cells per side needs {}",
                values.len(),
                np * np
            )));
        }
        Ok(GridField { cells, bc, values })
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn nodes_per_side(&self) -> usize {
        self.cells + 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * (self.cells + 1) + ix]
    }

    pub fn node_coord(&self, node: usize) -> [f64; 2] {
        let np = self.cells + 1;
        let h = self.h();
        [(node % np) as f64 * h, (node / np) as f64 * h]
    }

    /// Corner values of a cell in local order.
    fn cell_values(&self, cx: usize, cy: usize) -> [f64; 4] {
        let np = self.cells + 1;
        let base = cy * np + cx;
        [
            self.values[base],
            self.values[base + 1],
            self.values[base + np],
            self.values[base + np + 1],
        ]
    }

    /// Bilinear gradient inside cell (cx, cy) at local coordinates (ξ, η).
    pub fn cell_gradient(&self, cx: usize, cy: usize, xi: f64, eta: f64) -> [f64; 2] {
        let v = self.cell_values(cx, cy);
        let inv_h = self.cells as f64;
        let mut g = [0.0, 0.0];
        for (a, &va) in v.iter().enumerate() {
            let ga = shape_grad(a, xi, eta);
            g[0] += va * ga[0];
            g[1] += va * ga[1];
        }
        [g[0] * inv_h, g[1] * inv_h]
    }

    /// Locates a point: cell indices plus local coordinates. Dirichlet
    /// fields clamp to the closed square, periodic fields wrap.
    fn locate(&self, x: [f64; 2]) -> (usize, usize, f64, f64) {
        let m = self.cells as f64;
        let map = |t: f64| -> (usize, f64) {
            let t = match self.bc {
                BoundaryCondition::DirichletZero => t.clamp(0.0, 1.0),
                BoundaryCondition::PeriodicZeroMean => t - t.floor(),
            };
            let scaled = (t * m).min(m - 1e-12);
            let c = (scaled.floor() as usize).min(self.cells - 1);
            (c, scaled - c as f64)
        };
        let (cx, xi) = map(x[0]);
        let (cy, eta) = map(x[1]);
        (cx, cy, xi, eta)
    }

    /// Bilinear interpolation at a point.
    pub fn sample(&self, x: [f64; 2]) -> f64 {
        let (cx, cy, xi, eta) = self.locate(x);
        let v = self.cell_values(cx, cy);
        (0..4).map(|a| v[a] * shape_value(a, xi, eta)).sum()
    }

    /// Bilinear gradient at a point (periodic fields wrap).
    pub fn sample_gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let (cx, cy, xi, eta) = self.locate(x);
        self.cell_gradient(cx, cy, xi, eta)
    }

    /// Trapezoid node weight (h²·¼ at corners, h²·½ on edges, h² inside).
    fn node_weight(&self, ix: usize, iy: usize) -> f64 {
        let h = self.h();
        let w1 = |i: usize| if i == 0 || i == self.cells { 0.5 * h } else { h };
        w1(ix) * w1(iy)
    }

    /// Mean value by trapezoid quadrature. For wrap-consistent periodic
    /// fields this equals the flat average over the unique torus nodes.
    pub fn mean(&self) -> f64 {
        let np = self.cells + 1;
        let mut acc = 0.0;
        for iy in 0..np {
            for ix in 0..np {
                acc += self.node_weight(ix, iy) * self.values[iy * np + ix];
            }
        }
        acc
    }

    /// L² norm by trapezoid (nodal) quadrature.
    pub fn l2_norm(&self) -> f64 {
        let np = self.cells + 1;
        let mut acc = 0.0;
        for iy in 0..np {
            for ix in 0..np {
                let v = self.values[iy * np + ix];
                acc += self.node_weight(ix, iy) * v * v;
            }
        }
        acc.sqrt()
    }

    /// Broken H¹ seminorm: element-wise L² norm of the bilinear gradient,
    /// integrated with 2×2 Gauss per cell.
    pub fn h1_broken_seminorm(&self) -> f64 {
        let h2 = self.h() * self.h();
        let mut acc = 0.0;
        for cy in 0..self.cells {
            for cx in 0..self.cells {
                for &xi in &GAUSS_PTS {
                    for &eta in &GAUSS_PTS {
                        let g = self.cell_gradient(cx, cy, xi, eta);
                        acc += 0.25 * h2 * (g[0] * g[0] + g[1] * g[1]);
                    }
                }
            }
        }
        acc.sqrt()
    }

    /// Full H¹ norm √(‖u‖² + ‖∇u‖²).
    pub fn h1_norm(&self) -> f64 {
        let l2 = self.l2_norm();
        let semi = self.h1_broken_seminorm();
        (l2 * l2 + semi * semi).sqrt()
    }
}

fn same_grid(a: &GridField, b: &GridField) -> Result<()> {
    if a.cells_per_side() != b.cells_per_side() {
        return Err(Error::Contract(format!(
            "fields live on different grids ({} vs {} cells per side)",
            a.cells_per_side(),
            b.cells_per_side()
        )));
    }
    Ok(())
}

/// L² norm of a − b by nodal quadrature; the fields must share a grid.
pub fn l2_error(a: &GridField, b: &GridField) -> Result<f64> {
    same_grid(a, b)?;
    let np = a.nodes_per_side();
    let mut acc = 0.0;
    for iy in 0..np {
        for ix in 0..np {
            let d = a.values[iy * np + ix] - b.values[iy * np + ix];
            acc += a.node_weight(ix, iy) * d * d;
        }
    }
    Ok(acc.sqrt())
}

/// L² distance from the field's bilinear interpolant to a pointwise
/// function, by 2×2 Gauss per cell. Used against manufactured solutions.
pub fn l2_error_to(a: &GridField, f: impl Fn([f64; 2]) -> f64) -> f64 {
    let h = a.h();
    let h2 = h * h;
    let mut acc = 0.0;
    for cy in 0..a.cells_per_side() {
        for cx in 0..a.cells_per_side() {
            let v = a.cell_values(cx, cy);
            for &xi in &GAUSS_PTS {
                for &eta in &GAUSS_PTS {
                    let interp: f64 = (0..4).map(|k| v[k] * shape_value(k, xi, eta)).sum();
                    let x = [(cx as f64 + xi) * h, (cy as f64 + eta) * h];
                    let d = interp - f(x);
                    acc += 0.25 * h2 * d * d;
                }
            }
        }
    }
    acc.sqrt()
}

/// Broken H¹ seminorm of a − b; the fields must share a grid.
pub fn h1_broken_error(a: &GridField, b: &GridField) -> Result<f64> {
    same_grid(a, b)?;
    let h2 = a.h() * a.h();
    let mut acc = 0.0;
    for cy in 0..a.cells_per_side() {
        for cx in 0..a.cells_per_side() {
            for &xi in &GAUSS_PTS {
                for &eta in &GAUSS_PTS {
                    let ga = a.cell_gradient(cx, cy, xi, eta);
                    let gb = b.cell_gradient(cx, cy, xi, eta);
                    let d = [ga[0] - gb[0], ga[1] - gb[1]];
                    acc += 0.25 * h2 * (d[0] * d[0] + d[1] * d[1]);
                }
            }
        }
    }
    Ok(acc.sqrt())
}

/// Assembles the stiffness matrix for an arbitrary per-cell tensor into
/// equation space, together with the DOF map that defines that space.
pub fn assemble_stiffness_with(
    cells: usize,
    bc: BoundaryCondition,
    tensor_of_cell: impl Fn(usize) -> Tensor2,
) -> (CsrMatrix, DofMap) {
    let dofs = DofMap::new(cells, bc);
    let np = cells + 1;
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); dofs.n_equations()];
    for cy in 0..cells {
        for cx in 0..cells {
            let k = element_stiffness(&tensor_of_cell(cy * cells + cx));
            let nodes = NODE_OFFSETS.map(|(dx, dy)| (cy + dy) * np + (cx + dx));
            for a in 0..4 {
                let Some(ea) = dofs.eq_of_node(nodes[a]) else { continue };
                for b in 0..4 {
                    let Some(eb) = dofs.eq_of_node(nodes[b]) else { continue };
                    *rows[ea].entry(eb).or_insert(0.0) += k[a][b];
                }
            }
        }
    }
    (CsrMatrix::from_rows(rows), dofs)
}

/// Stiffness of the two-phase problem on a tiled domain: the coefficient of
/// a cell is the tensor of its phase sampled at the cell midpoint mapped to
/// unit-cell coordinates.
pub fn assemble_stiffness(
    dom: &TiledDomain,
    coeffs: &CoefficientSet,
    bc: BoundaryCondition,
) -> Result<(CsrMatrix, DofMap)> {
    coeffs.ensure_validated()?;
    if bc == BoundaryCondition::PeriodicZeroMean && dom.tiles_per_side() != 1 {
        return Err(Error::Contract(
            "periodic assembly expects the unit-cell domain (one tile per side)".into(),
        ));
    }
    Ok(assemble_stiffness_with(dom.cells_per_side(), bc, |cell| {
        coeffs.tensor(dom.phase(cell), dom.cell_y(cell))
    }))
}

/// Volume load for an arbitrary per-midpoint source: trapezoid lumping
/// sends f(midpoint)·h²/4 to each corner. Returns the per-node vector;
/// reduce through a [`DofMap`] to get the equation-space right-hand side.
pub fn assemble_volume_load_with(cells: usize, f_at_cell: impl Fn(usize) -> f64) -> Vec<f64> {
    let np = cells + 1;
    let h2 = 1.0 / (cells * cells) as f64;
    let mut nodal = vec![0.0; np * np];
    for cy in 0..cells {
        for cx in 0..cells {
            let w = f_at_cell(cy * cells + cx) * h2 * 0.25;
            for (dx, dy) in NODE_OFFSETS {
                nodal[(cy + dy) * np + (cx + dx)] += w;
            }
        }
    }
    nodal
}

/// Two-phase volume load: the source of the cell's phase evaluated at the
/// macro midpoint.
pub fn assemble_volume_load(dom: &TiledDomain, coeffs: &CoefficientSet) -> Result<Vec<f64>> {
    coeffs.ensure_validated()?;
    Ok(assemble_volume_load_with(dom.cells_per_side(), |cell| {
        coeffs.source(dom.phase(cell), dom.cell_midpoint(cell))
    }))
}

/// Interface load ∫_{Σ^ε} ε·γ(x/ε)·v ds: per facet, γ is sampled at the
/// facet midpoint (mapped to the unit cell) and the facet integral
/// ε·γ·h splits equally between the endpoints. Interface nodes are interior
/// by construction; this is asserted, not handled.
pub fn assemble_interface_load(dom: &TiledDomain, coeffs: &CoefficientSet) -> Result<Vec<f64>> {
    coeffs.ensure_validated()?;
    let np = dom.nodes_per_side();
    let cells = dom.cells_per_side();
    let eps = dom.epsilon();
    let h = dom.h();
    let mut nodal = vec![0.0; np * np];
    let frac = |t: f64| t - t.floor();
    for facet in dom.facets() {
        let y = [
            frac(facet.midpoint[0] / eps),
            frac(facet.midpoint[1] / eps),
        ];
        let w = 0.5 * eps * coeffs.gamma().sample(y) * h;
        for node in facet.nodes {
            let (ix, iy) = (node % np, node / np);
            assert!(
                ix > 0 && ix < cells && iy > 0 && iy < cells,
                "interface facet endpoint on the outer boundary; the inclusion closure \
                 must stay inside the cell"
            );
            nodal[node] += w;
        }
    }
    Ok(nodal)
}

/// Cell-problem load for direction j: b_i = −∫_Y A e_j · ∇φ_i dy, assembled
/// per cell with the exact value of ∫ ∇φ over a cell.
pub fn assemble_gradient_load(
    dom: &TiledDomain,
    coeffs: &CoefficientSet,
    direction: usize,
) -> Result<Vec<f64>> {
    coeffs.ensure_validated()?;
    if direction >= 2 {
        return Err(Error::Domain(format!(
            "gradient load direction must be 0 or 1 (got {direction})"
        )));
    }
    let cells = dom.cells_per_side();
    let np = cells + 1;
    let h = dom.h();
    // ∫_cell ∇φ_a dx = h·∫_ref ∇N_a dξ = h·(±1/2, ±1/2), signed by which
    // corner the shape function sits on (local order (0,0),(1,0),(0,1),(1,1)).
    const REF_GRAD_INT: [[f64; 2]; 4] = [[-0.5, -0.5], [0.5, -0.5], [-0.5, 0.5], [0.5, 0.5]];
    let e = if direction == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
    let mut nodal = vec![0.0; np * np];
    for cy in 0..cells {
        for cx in 0..cells {
            let cell = cy * cells + cx;
            let ae = coeffs.tensor(dom.phase(cell), dom.cell_y(cell)).apply(e);
            for (a, (dx, dy)) in NODE_OFFSETS.iter().enumerate() {
                let g = REF_GRAD_INT[a];
                nodal[(cy + dy) * np + (cx + dx)] -= (ae[0] * g[0] + ae[1] * g[1]) * h;
            }
        }
    }
    Ok(nodal)
}

/// Relative gap of the discrete energy identity uᵀKu = bᵀu, a cheap
/// consistency audit attached to every solve.
pub fn energy_identity_gap(matrix: &CsrMatrix, x: &[f64], rhs: &[f64]) -> f64 {
    let lhs = matrix.quadratic_form(x);
    let rhs_dot = dot(rhs, x);
    (lhs - rhs_dot).abs() / rhs_dot.abs().max(f64::MIN_POSITIVE)
}
