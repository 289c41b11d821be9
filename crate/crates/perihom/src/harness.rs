//! ε-sweeps and limit functionals: the machinery that turns the solvers
//! into convergence evidence.
//!
//! A sweep runs the cell stage once, solves the effective problem once, and
//! solves the oscillating problem for every ε in the list. All solves share
//! one grid — the finest micro grid of the sweep — so micro, macro, and
//! reconstruction can be compared field-to-field with no interpolation
//! bias; a coarser ε simply resolves each of its tiles with proportionally
//! more cells. The limit functionals evaluate ∫ v^ε(x)φ(x, x/ε)dx and its
//! interface counterpart ε∫_{Σ^ε} v^ε φ ds against analytic or
//! macro-quadrature references.

use std::time::Instant;

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fem::{h1_broken_error, l2_error, GridField};
use crate::geometry::{CellGeometry, MAX_CELLS_PER_SIDE};
use crate::homogenize::{homogenize, EffectiveSource, HomogenizedData};
use crate::parallel;
use crate::problems::{corrector_reconstruct, solve_macro, solve_micro, MacroSolution};
use crate::solver::{SolveInfo, SolverOptions};

/// One ε row of a sweep. The first eight fields are the report columns.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub eps: f64,
    pub h: f64,
    pub l2_err: f64,
    pub l2_rel: f64,
    pub h1_corr_err: f64,
    pub h1_norm: f64,
    pub iters: usize,
    pub seconds: f64,
    /// 1/ε as the exact integer.
    pub n: usize,
    /// Broken H¹ error against the plain macro field, no corrector. Kept
    /// off the report; it exists to show the corrector pulls the gradient
    /// error down.
    pub h1_plain_err: f64,
    /// Full audit of the micro solve behind this row.
    pub info: SolveInfo,
}

/// Audit trail entry: which solve, and how it went.
#[derive(Debug, Clone)]
pub struct SolveAudit {
    pub label: String,
    pub info: SolveInfo,
}

/// Everything a sweep produces.
#[derive(Debug)]
pub struct SweepOutcome {
    /// Rows in decreasing-ε order.
    pub rows: Vec<SweepRow>,
    pub hom: HomogenizedData,
    pub source: EffectiveSource,
    pub macro_solution: MacroSolution,
    /// One entry per linear solve the sweep ran, in deterministic order.
    pub audits: Vec<SolveAudit>,
}

fn validate_eps_list(eps_ns: &[usize]) -> Result<usize> {
    if eps_ns.is_empty() {
        return Err(Error::Config("sweep.eps: the list is empty".into()));
    }
    for pair in eps_ns.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::Config(format!(
                "sweep.eps: values must be strictly decreasing (1/{} before 1/{})",
                pair[0], pair[1]
            )));
        }
    }
    let n_max = *eps_ns.last().unwrap();
    for &n in eps_ns {
        if n == 0 {
            return Err(Error::Config("sweep.eps: ε = 1/0 is not a value".into()));
        }
        if n_max % n != 0 {
            return Err(Error::Config(format!(
                "sweep.eps: 1/{n} does not align with the finest grid (1/{n_max} must be \
                 an integer multiple so all solves share one grid)"
            )));
        }
    }
    Ok(n_max)
}

/// Runs cell stage → macro solve → one micro solve per ε, all on the grid
/// of the finest ε (n_max·m cells per side).
pub fn run_sweep(
    geom: &CellGeometry,
    coeffs: &CoefficientSet,
    eps_ns: &[usize],
    m: usize,
    opts: &SolverOptions,
) -> Result<SweepOutcome> {
    let n_max = validate_eps_list(eps_ns)?;
    let hom = homogenize(geom, coeffs, m, opts)?;
    let mut audits: Vec<SolveAudit> = hom
        .solve_info
        .iter()
        .enumerate()
        .map(|(j, info)| SolveAudit { label: format!("cell corrector {}", j + 1), info: *info })
        .collect();
    let source = EffectiveSource {
        vol_frac: hom.vol_frac,
        f1: coeffs.f1().clone(),
        f2: coeffs.f2().clone(),
        i_gamma: hom.i_gamma,
    };
    let macro_solution = solve_macro(hom.a_hom, &source, n_max * m, opts)?;
    audits.push(SolveAudit { label: "macro".into(), info: macro_solution.info });
    let macro_l2 = macro_solution.field.l2_norm();

    let row_results = parallel::map_indexed(eps_ns.len(), |i| -> Result<SweepRow> {
        let n = eps_ns[i];
        let clock = Instant::now();
        let micro = solve_micro(geom, coeffs, n, (n_max / n) * m, opts)?;
        let recon = corrector_reconstruct(&macro_solution, &hom, micro.eps)?;
        let l2 = l2_error(&micro.field, &macro_solution.field)?;
        Ok(SweepRow {
            eps: micro.eps,
            h: micro.h,
            l2_err: l2,
            // Relative to the macro solution; falls back to the absolute
            // error when the macro field is identically zero so the entry
            // stays finite.
            l2_rel: if macro_l2 > 0.0 { l2 / macro_l2 } else { l2 },
            h1_corr_err: h1_broken_error(&micro.field, &recon)?,
            h1_norm: micro.h1_norm,
            iters: micro.info.iterations,
            seconds: clock.elapsed().as_secs_f64(),
            n,
            h1_plain_err: h1_broken_error(&micro.field, &macro_solution.field)?,
            info: micro.info,
        })
    });
    let mut rows = Vec::with_capacity(eps_ns.len());
    for row in row_results {
        rows.push(row?);
    }
    // Micro audit entries come from the ordered rows, not worker order.
    for row in &rows {
        audits.push(SolveAudit { label: format!("micro 1/{}", row.n), info: row.info });
    }
    Ok(SweepOutcome { rows, hom, source, macro_solution, audits })
}

impl SweepOutcome {
    /// Structural checks on the report rows: ordering, finiteness, and sign.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.rows.is_empty() {
            out.push("sweep produced no rows".into());
        }
        for pair in self.rows.windows(2) {
            if pair[1].eps >= pair[0].eps {
                out.push(format!(
                    "rows out of order: ε = {} before ε = {}",
                    pair[0].eps, pair[1].eps
                ));
            }
        }
        for row in &self.rows {
            for (name, v) in [
                ("l2_err", row.l2_err),
                ("l2_rel", row.l2_rel),
                ("h1_corr_err", row.h1_corr_err),
                ("h1_norm", row.h1_norm),
                ("seconds", row.seconds),
            ] {
                if !v.is_finite() || v < 0.0 {
                    out.push(format!("row ε = 1/{}: {name} = {v} is not a valid entry", row.n));
                }
            }
        }
        out
    }
}

/// The oscillating sequence of a two-scale functional.
pub enum Sequence<'a> {
    /// v^ε(x) = cos(2πx₁/ε).
    Oscillate,
    /// Pre-solved fields, one per ε in the same order as the ε list.
    Fields(&'a [GridField]),
}

/// Admissible test functions φ(x, y). All entries separate into g(x)·ψ(y),
/// which is what makes the Ω×Y references cheap.
pub enum TestFn {
    /// φ = 1.
    One,
    /// φ = g(x).
    Macro(Expr),
    /// φ = g(x)·cos(2πy₁).
    CosY1Macro(Expr),
}

impl TestFn {
    fn eval(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        match self {
            TestFn::One => 1.0,
            TestFn::Macro(g) => g.eval(x),
            TestFn::CosY1Macro(g) => g.eval(x) * (2.0 * std::f64::consts::PI * y[0]).cos(),
        }
    }

    /// ∫_Y ψ(y) dy for the y-factor: 1 for the first two, 0 for cos(2πy₁).
    fn y_mean(&self) -> f64 {
        match self {
            TestFn::One | TestFn::Macro(_) => 1.0,
            TestFn::CosY1Macro(_) => 0.0,
        }
    }
}

/// Result of a limit functional evaluated along an ε list.
#[derive(Debug, Clone)]
pub struct LimitTestResult {
    pub id: String,
    /// ε values, decreasing.
    pub eps: Vec<f64>,
    /// Functional value per ε.
    pub values: Vec<f64>,
    /// First-order Richardson extrapolation from the last two values.
    pub extrapolated: f64,
    pub reference: f64,
    /// |value at the smallest ε − reference|.
    pub gap: f64,
    /// False when the quadrature grid is too coarse for the finest ε.
    pub reliable: bool,
}

impl LimitTestResult {
    /// Finiteness plus the convergence invariant: the per-ε gap must not
    /// grow over the final two entries.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for v in self.values.iter().chain([&self.extrapolated, &self.reference, &self.gap]) {
            if !v.is_finite() {
                out.push(format!("{}: non-finite entry {v}", self.id));
            }
        }
        let k = self.values.len();
        if k >= 2 {
            let prev = (self.values[k - 2] - self.reference).abs();
            let last = (self.values[k - 1] - self.reference).abs();
            if last > prev + 1e-12 * (1.0 + self.reference.abs()) {
                out.push(format!(
                    "{}: gap grew over the final two ε ({prev:.3e} → {last:.3e})",
                    self.id
                ));
            }
        }
        out
    }
}

fn finish(
    id: &str,
    eps_ns: &[usize],
    values: Vec<f64>,
    reference: f64,
    reliable: bool,
) -> LimitTestResult {
    let k = values.len();
    let extrapolated =
        if k >= 2 { 2.0 * values[k - 1] - values[k - 2] } else { values[k - 1] };
    LimitTestResult {
        id: id.to_string(),
        eps: eps_ns.iter().map(|&n| 1.0 / n as f64).collect(),
        gap: (values[k - 1] - reference).abs(),
        values,
        extrapolated,
        reference,
        reliable,
    }
}

/// Evaluates ∫_Ω v^ε(x) φ(x, x/ε) dx per ε by midpoint quadrature on a
/// `quad_cells`² grid and reports the gap against the limit value. A
/// `reference` of None selects the analytic limit, which exists for the
/// oscillating sequence (Riemann–Lebesgue); field sequences must bring a
/// reference from macro quadrature (see [`macro_reference`]).
pub fn two_scale_test(
    id: &str,
    seq: &Sequence,
    tf: &TestFn,
    eps_ns: &[usize],
    quad_cells: usize,
    reference: Option<f64>,
) -> Result<LimitTestResult> {
    let n_max = validate_eps_list(eps_ns)?;
    if quad_cells == 0 {
        return Err(Error::Config("two-scale quadrature needs at least one cell".into()));
    }
    if quad_cells > MAX_CELLS_PER_SIDE {
        return Err(Error::Resource(format!(
            "quadrature grid of {quad_cells} cells per side exceeds the budget of \
             {MAX_CELLS_PER_SIDE}"
        )));
    }
    if let Sequence::Fields(fields) = seq {
        if fields.len() != eps_ns.len() {
            return Err(Error::Contract(format!(
                "{} fields supplied for {} ε values",
                fields.len(),
                eps_ns.len()
            )));
        }
    }
    let reference = match (reference, seq) {
        (Some(v), _) => v,
        (None, Sequence::Oscillate) => match tf {
            // Riemann–Lebesgue: the oscillation averages against any fixed
            // macro-scale test function to its y-mean, which is 0; paired
            // with cos(2πy₁) it resonates to ∫cos² = ½ times ∫g.
            TestFn::One => 0.0,
            TestFn::Macro(_) => 0.0,
            TestFn::CosY1Macro(g) => 0.5 * g.integral_unit_square(),
        },
        (None, Sequence::Fields(_)) => {
            return Err(Error::Contract(
                "field sequences need an explicit reference value".into(),
            ))
        }
    };
    let q = quad_cells as f64;
    let values: Vec<f64> = eps_ns
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let nf = n as f64;
            let mut acc = 0.0;
            for iy in 0..quad_cells {
                for ix in 0..quad_cells {
                    let x = [(ix as f64 + 0.5) / q, (iy as f64 + 0.5) / q];
                    let y = [(x[0] * nf).fract(), (x[1] * nf).fract()];
                    let v = match seq {
                        Sequence::Oscillate => {
                            (2.0 * std::f64::consts::PI * x[0] * nf).cos()
                        }
                        Sequence::Fields(fields) => fields[k].sample(x),
                    };
                    acc += v * tf.eval(x, y);
                }
            }
            acc / (q * q)
        })
        .collect();
    Ok(finish(id, eps_ns, values, reference, quad_cells >= 4 * n_max))
}

/// Reference value ∫_Ω∫_Y u(x)φ(x,y) dy dx for a field sequence whose limit
/// is the macro solution: midpoint quadrature of u·g times the y-mean of φ.
pub fn macro_reference(field: &GridField, tf: &TestFn, quad_cells: usize) -> f64 {
    let q = quad_cells as f64;
    let mut acc = 0.0;
    for iy in 0..quad_cells {
        for ix in 0..quad_cells {
            let x = [(ix as f64 + 0.5) / q, (iy as f64 + 0.5) / q];
            let g = match tf {
                TestFn::One => 1.0,
                TestFn::Macro(g) | TestFn::CosY1Macro(g) => g.eval(x),
            };
            acc += field.sample(x) * g;
        }
    }
    tf.y_mean() * acc / (q * q)
}

/// The trace sequence of an interface functional.
pub enum InterfaceSequence<'a> {
    /// v^ε = 1.
    One,
    /// Traces of pre-solved fields, one per ε.
    Fields(&'a [GridField]),
}

/// Evaluates ε·∫_{Σ^ε} v^ε(x) φ(x, x/ε) ds per ε by facet-midpoint
/// quadrature on the tiling at `m_quad` cells per tile, against the product
/// reference ∫_Ω v₀·g dx · ∫_Σ ψ ds. With v = φ = 1 both sides reduce to
/// single integer divisions, so the identity ε|Σ^ε| = |Ω||Σ| holds with
/// zero gap — the geometry canary.
pub fn interface_limit_test(
    id: &str,
    geom: &CellGeometry,
    seq: &InterfaceSequence,
    tf: &TestFn,
    eps_ns: &[usize],
    m_quad: usize,
    reference: Option<f64>,
) -> Result<LimitTestResult> {
    validate_eps_list(eps_ns)?;
    if let InterfaceSequence::Fields(fields) = seq {
        if fields.len() != eps_ns.len() {
            return Err(Error::Contract(format!(
                "{} fields supplied for {} ε values",
                fields.len(),
                eps_ns.len()
            )));
        }
    }
    let reference = match (reference, seq) {
        (Some(v), _) => v,
        (None, InterfaceSequence::One) => {
            // ∫_Σ ψ ds by facet quadrature on the unit cell, times ∫_Ω g dx.
            let facets = geom.interface_facets(m_quad)?;
            let psi_sum: f64 = facets
                .iter()
                .map(|f| match tf {
                    TestFn::One | TestFn::Macro(_) => 1.0,
                    TestFn::CosY1Macro(_) => {
                        (2.0 * std::f64::consts::PI * f.midpoint[0]).cos()
                    }
                })
                .sum();
            let g_int = match tf {
                TestFn::One => 1.0,
                TestFn::Macro(g) | TestFn::CosY1Macro(g) => g.integral_unit_square(),
            };
            g_int * (psi_sum / m_quad as f64)
        }
        (None, InterfaceSequence::Fields(_)) => {
            return Err(Error::Contract(
                "field sequences need an explicit reference value".into(),
            ))
        }
    };
    let values: Vec<f64> = eps_ns
        .iter()
        .enumerate()
        .map(|(k, &n)| -> Result<f64> {
            let dom = geom.tile(n, m_quad)?;
            let nf = n as f64;
            let mut acc = 0.0;
            for f in dom.facets() {
                let x = f.midpoint;
                let y = [(x[0] * nf).fract(), (x[1] * nf).fract()];
                let v = match seq {
                    InterfaceSequence::One => 1.0,
                    InterfaceSequence::Fields(fields) => fields[k].sample(x),
                };
                acc += v * tf.eval(x, y);
            }
            // ε·h_facet = 1/(n·n·m_quad), applied as one division so the
            // all-ones case stays an exact integer-count identity.
            Ok(acc / (n * n * m_quad) as f64)
        })
        .collect::<Result<_>>()?;
    Ok(finish(id, eps_ns, values, reference, m_quad >= 4))
}
