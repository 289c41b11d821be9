//! Cell problems, the effective tensor, and the effective source.
//!
//! For each coordinate direction j the periodic corrector ω_j solves
//!
//! > −div_y( A(y) (∇_y ω_j + e_j) ) = 0 on Y,  ω_j Y-periodic, ∫_Y ω_j = 0,
//!
//! with A = A₁ on the matrix phase and A₂ on the inclusion; the flux jump
//! plays no role at this stage. The effective tensor is the energy pairing
//!
//! > a_ij = ∫_Y A (∇_y ω_i + e_i) · (∇_y ω_j + e_j) dy,
//!
//! symmetric and positive definite, with eigenvalues between the harmonic
//! and arithmetic means of the phase coefficients when both phases are
//! isotropic. The interfacial jump survives only in the effective source
//!
//! > F(x) = |Y₁| f₁(x) + |Y₂| f₂(x) + ∫_Σ γ ds,
//!
//! a plain additive constant because γ is scaled by ε in the micro model
//! while |Σ^ε| grows like 1/ε.

use crate::coeffs::{CoefficientSet, Tensor2, TensorField};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fem::{
    assemble_gradient_load, assemble_stiffness, energy_identity_gap, BoundaryCondition, GridField,
    GAUSS_PTS,
};
use crate::geometry::CellGeometry;
use crate::parallel;
use crate::solver::{cg_solve, Nullspace, SolveInfo, SolverOptions};

/// One solved cell problem: the zero-mean periodic corrector and the solve
/// audit.
#[derive(Debug, Clone)]
pub struct CellSolve {
    pub corrector: GridField,
    pub info: SolveInfo,
}

/// Everything the macro stage needs from the cell stage.
#[derive(Debug, Clone)]
pub struct HomogenizedData {
    /// Correctors ω₁, ω₂ on the m-grid of the unit cell.
    pub correctors: Vec<GridField>,
    pub a_hom: Tensor2,
    /// Interface integral I_γ = ∫_Σ γ ds.
    pub i_gamma: f64,
    /// (|Y₁|, |Y₂|) from exact cell counts at resolution m.
    pub vol_frac: [f64; 2],
    /// Cell-grid resolution the correctors were solved on.
    pub m: usize,
    /// Audit of the cell solves, in direction order.
    pub solve_info: Vec<SolveInfo>,
}

/// Solves the two periodic cell problems at resolution m. The correctors
/// come back with exactly zero mean (the solver pins the constant mode).
pub fn solve_cell_problems(
    geom: &CellGeometry,
    coeffs: &CoefficientSet,
    m: usize,
    opts: &SolverOptions,
) -> Result<Vec<CellSolve>> {
    coeffs.ensure_validated()?;
    let dom = geom.tile(1, m)?;
    let (matrix, dofs) =
        assemble_stiffness(&dom, coeffs, BoundaryCondition::PeriodicZeroMean)?;
    let cell_opts = opts.with_nullspace(Nullspace::Constants);
    let solves: Vec<Result<CellSolve>> = parallel::map_indexed(2, |direction| {
        let rhs = dofs.reduce(&assemble_gradient_load(&dom, coeffs, direction)?);
        let sol = cg_solve(&matrix, &rhs, &cell_opts)?;
        let info = SolveInfo {
            iterations: sol.iterations,
            residual: sol.residual,
            energy_gap: energy_identity_gap(&matrix, &sol.x, &rhs),
        };
        Ok(CellSolve { corrector: GridField::from_equations(&dofs, &sol.x), info })
    });
    solves.into_iter().collect()
}

/// Effective tensor from the solved correctors:
/// a_ij = ∫_Y A (∇ω_i + e_i) · (∇ω_j + e_j) dy, by 2×2 Gauss per cell. The
/// entries are computed independently, so the symmetry defect genuinely
/// measures solver tolerance rather than being zero by construction.
pub fn homogenized_tensor(
    geom: &CellGeometry,
    coeffs: &CoefficientSet,
    correctors: &[GridField],
    m: usize,
) -> Result<Tensor2> {
    coeffs.ensure_validated()?;
    if correctors.len() != 2 {
        return Err(Error::Contract(format!(
            "expected 2 correctors, got {}",
            correctors.len()
        )));
    }
    for (j, w) in correctors.iter().enumerate() {
        if w.cells_per_side() != m {
            return Err(Error::Contract(format!(
                "corrector {j} lives on a {}-cell grid, tensor assembly was asked for m = {m}",
                w.cells_per_side()
            )));
        }
        if w.bc() != BoundaryCondition::PeriodicZeroMean {
            return Err(Error::Contract(format!(
                "corrector {j} is not a periodic field"
            )));
        }
    }
    let dom = geom.tile(1, m)?;
    let basis = [[1.0, 0.0], [0.0, 1.0]];
    let h2 = dom.h() * dom.h();
    let mut a = [[0.0_f64; 2]; 2];
    for cy in 0..m {
        for cx in 0..m {
            let cell = cy * m + cx;
            let t = coeffs.tensor(dom.phase(cell), dom.cell_y(cell));
            for &xi in &GAUSS_PTS {
                for &eta in &GAUSS_PTS {
                    let mut v = [[0.0_f64; 2]; 2];
                    for i in 0..2 {
                        let g = correctors[i].cell_gradient(cx, cy, xi, eta);
                        v[i] = [g[0] + basis[i][0], g[1] + basis[i][1]];
                    }
                    for i in 0..2 {
                        let tv = t.apply(v[i]);
                        for j in 0..2 {
                            a[i][j] += 0.25 * h2 * (tv[0] * v[j][0] + tv[1] * v[j][1]);
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor2(a))
}

/// Interface integral I_γ = ∫_Σ γ ds by facet-midpoint quadrature, exact
/// for constant γ.
pub fn interface_integral(geom: &CellGeometry, coeffs: &CoefficientSet, m: usize) -> Result<f64> {
    coeffs.ensure_validated()?;
    let facets = geom.interface_facets(m)?;
    let sum: f64 = facets.iter().map(|f| coeffs.gamma().sample(f.midpoint)).sum();
    Ok(sum / m as f64)
}

/// The effective right-hand side F(x) = |Y₁| f₁(x) + |Y₂| f₂(x) + I_γ in a
/// form the macro assembly can evaluate pointwise.
#[derive(Debug, Clone)]
pub struct EffectiveSource {
    pub vol_frac: [f64; 2],
    pub f1: Expr,
    pub f2: Expr,
    pub i_gamma: f64,
}

impl EffectiveSource {
    /// Builds the effective source using the geometry's resolution hint for
    /// the exact volume fractions and the interface quadrature.
    pub fn new(geom: &CellGeometry, coeffs: &CoefficientSet) -> Result<EffectiveSource> {
        coeffs.ensure_validated()?;
        Ok(EffectiveSource {
            vol_frac: geom.volume_fractions(geom.m_hint())?,
            f1: coeffs.f1().clone(),
            f2: coeffs.f2().clone(),
            i_gamma: interface_integral(geom, coeffs, geom.m_hint())?,
        })
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.vol_frac[0] * self.f1.eval(x) + self.vol_frac[1] * self.f2.eval(x) + self.i_gamma
    }
}

/// Pointwise effective source, the one-shot form of [`EffectiveSource`].
pub fn effective_source(geom: &CellGeometry, coeffs: &CoefficientSet, x: [f64; 2]) -> Result<f64> {
    Ok(EffectiveSource::new(geom, coeffs)?.eval(x))
}

/// Runs the full cell stage: correctors, effective tensor, interface
/// integral, volume fractions.
pub fn homogenize(
    geom: &CellGeometry,
    coeffs: &CoefficientSet,
    m: usize,
    opts: &SolverOptions,
) -> Result<HomogenizedData> {
    let solves = solve_cell_problems(geom, coeffs, m, opts)?;
    let mut correctors = Vec::with_capacity(2);
    let mut solve_info = Vec::with_capacity(2);
    for s in solves {
        correctors.push(s.corrector);
        solve_info.push(s.info);
    }
    let a_hom = homogenized_tensor(geom, coeffs, &correctors, m)?;
    Ok(HomogenizedData {
        a_hom,
        i_gamma: interface_integral(geom, coeffs, m)?,
        vol_frac: geom.volume_fractions(m)?,
        m,
        correctors,
        solve_info,
    })
}

impl HomogenizedData {
    /// Checks the structural invariants of the effective data and returns
    /// human-readable violations (empty = all good): tensor symmetry at
    /// 1e-10 relative, positive definiteness, corrector mean zero, and the
    /// harmonic/arithmetic-mean eigenvalue bounds when both phases are
    /// constant isotropic.
    pub fn invariant_violations(&self, coeffs: &CoefficientSet) -> Vec<String> {
        let mut out = Vec::new();
        let a = &self.a_hom.0;
        let scale = self.a_hom.max_abs();
        if (a[0][1] - a[1][0]).abs() > 1e-10 * scale {
            out.push(format!(
                "effective tensor asymmetry |a12 - a21| = {:.3e} exceeds 1e-10 relative",
                (a[0][1] - a[1][0]).abs()
            ));
        }
        let [lo, hi] = self.a_hom.eigenvalues();
        if lo <= 0.0 {
            out.push(format!(
                "effective tensor is not positive definite (eigenvalues {lo:.6e}, {hi:.6e})"
            ));
        }
        for (j, w) in self.correctors.iter().enumerate() {
            let mean = w.mean();
            if mean.abs() > 1e-12 {
                out.push(format!("corrector {j} mean {mean:.3e} is not zero"));
            }
        }
        if let (TensorField::Constant(t1), TensorField::Constant(t2)) =
            (coeffs.a1(), coeffs.a2())
        {
            let iso = |t: &Tensor2| {
                (t.0[0][1] == 0.0 && t.0[1][0] == 0.0 && t.0[0][0] == t.0[1][1])
                    .then_some(t.0[0][0])
            };
            if let (Some(a1), Some(a2)) = (iso(t1), iso(t2)) {
                let [v1, v2] = self.vol_frac;
                let harmonic = 1.0 / (v1 / a1 + v2 / a2);
                let arithmetic = v1 * a1 + v2 * a2;
                let slack = 1e-10 * scale;
                if lo < harmonic - slack || hi > arithmetic + slack {
                    out.push(format!(
                        "effective eigenvalues [{lo:.6e}, {hi:.6e}] leave the \
                         harmonic/arithmetic bounds [{harmonic:.6e}, {arithmetic:.6e}]"
                    ));
                }
            }
        }
        out
    }
}
