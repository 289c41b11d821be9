//! Coefficient data for the two-phase transmission model.
//!
//! The model assumptions are enforced at construction time:
//!
//! * each phase tensor is symmetric and uniformly elliptic (positive
//!   definite, with a strictly positive lower bound over the cell);
//! * the jump density γ on the interface is a strictly positive constant;
//! * the phase sources come from the fixed expression catalog and are finite
//!   everywhere by construction.
//!
//! Assembly routines refuse to consume a [`CoefficientSet`] that has not
//! passed validation, so an unchecked set can only enter the pipeline
//! through the explicitly named escape hatch.

use crate::error::{Error, Result};
use crate::expr::Expr;

/// A symmetric 2×2 tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tensor2(pub [[f64; 2]; 2]);

impl Tensor2 {
    pub fn identity() -> Self {
        Tensor2([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn isotropic(a: f64) -> Self {
        Tensor2([[a, 0.0], [0.0, a]])
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    pub fn scale(&self, s: f64) -> Tensor2 {
        Tensor2([
            [s * self.0[0][0], s * self.0[0][1]],
            [s * self.0[1][0], s * self.0[1][1]],
        ])
    }

    /// Eigenvalues of the symmetric tensor, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let a = self.0[0][0];
        let b = 0.5 * (self.0[0][1] + self.0[1][0]);
        let d = self.0[1][1];
        let mid = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        [mid - rad, mid + rad]
    }

    pub fn is_symmetric(&self) -> bool {
        self.0[0][1] == self.0[1][0]
    }

    /// Largest absolute entry, used to scale symmetry tolerances.
    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, &v| acc.max(v.abs()))
    }
}

/// A per-phase diffusion tensor: either constant on the phase, or sampled at
/// cell midpoints for coefficients that vary inside a phase.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorField {
    Constant(Tensor2),
    /// Isotropic two-band profile along one axis of the unit cell:
    /// `below`·I where y[axis] < split, `above`·I elsewhere.
    Layered { axis: usize, split: f64, below: f64, above: f64 },
}

impl TensorField {
    /// Samples the tensor at a point of the unit cell.
    pub fn sample(&self, y: [f64; 2]) -> Tensor2 {
        match *self {
            TensorField::Constant(t) => t,
            TensorField::Layered { axis, split, below, above } => {
                Tensor2::isotropic(if y[axis] < split { below } else { above })
            }
        }
    }

    /// Validates symmetry and uniform ellipticity; `key` names the config
    /// entry in error messages.
    fn validate(&self, key: &str) -> Result<()> {
        match *self {
            TensorField::Constant(t) => {
                for row in t.0.iter().flatten() {
                    if !row.is_finite() {
                        return Err(Error::Config(format!("{key}: entries must be finite")));
                    }
                }
                if !t.is_symmetric() {
                    return Err(Error::Config(format!("{key}: tensor must be symmetric")));
                }
                let [lo, _] = t.eigenvalues();
                if lo <= 0.0 {
                    return Err(Error::Config(format!(
                        "{key}: tensor must be positive definite (smallest eigenvalue {lo:.3e})"
                    )));
                }
            }
            TensorField::Layered { axis, split, below, above } => {
                if axis >= 2 {
                    return Err(Error::Config(format!("{key}.layered.axis: must be 0 or 1")));
                }
                if !(split.is_finite() && split > 0.0 && split < 1.0) {
                    return Err(Error::Config(format!(
                        "{key}.layered.split: must lie strictly inside (0,1)"
                    )));
                }
                for (name, v) in [("below", below), ("above", above)] {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(Error::Config(format!(
                            "{key}.layered.{name}: must be finite and positive"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// The interfacial flux-jump density γ, sampled at facet midpoints. The run
/// configuration only admits constants; the sampling interface keeps the
/// quadrature path uniform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaField(pub f64);

impl GammaField {
    pub fn sample(&self, _y: [f64; 2]) -> f64 {
        self.0
    }
}

/// The full coefficient data of one run: phase tensors A₁/A₂, jump density
/// γ, and phase sources f₁/f₂.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    a1: TensorField,
    a2: TensorField,
    gamma: GammaField,
    f1: Expr,
    f2: Expr,
    validated: bool,
}

impl CoefficientSet {
    /// Builds and validates a coefficient set. Error messages name the
    /// offending entry using the configuration keys.
    pub fn new(
        a1: TensorField,
        a2: TensorField,
        gamma: f64,
        f1: Expr,
        f2: Expr,
    ) -> Result<CoefficientSet> {
        a1.validate("coefficients.A1")?;
        a2.validate("coefficients.A2")?;
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::Config(
                "coefficients.gamma: must be finite and nonnegative".into(),
            ));
        }
        Ok(CoefficientSet { a1, a2, gamma: GammaField(gamma), f1, f2, validated: true })
    }

    /// Builds a set without validation. Assembly will reject it; intended
    /// for tests that exercise the rejection path.
    pub fn new_unchecked(
        a1: TensorField,
        a2: TensorField,
        gamma: f64,
        f1: Expr,
        f2: Expr,
    ) -> CoefficientSet {
        CoefficientSet { a1, a2, gamma: GammaField(gamma), f1, f2, validated: false }
    }

    /// Convenience constructor for the common constant-isotropic case.
    pub fn isotropic(a1: f64, a2: f64, gamma: f64, f1: Expr, f2: Expr) -> Result<CoefficientSet> {
        CoefficientSet::new(
            TensorField::Constant(Tensor2::isotropic(a1)),
            TensorField::Constant(Tensor2::isotropic(a2)),
            gamma,
            f1,
            f2,
        )
    }

    /// Errors unless the set went through [`CoefficientSet::new`].
    pub fn ensure_validated(&self) -> Result<()> {
        if self.validated {
            Ok(())
        } else {
            Err(Error::Contract(
                "coefficient set was constructed unchecked; validate it before assembly".into(),
            ))
        }
    }

    /// Diffusion tensor of the given phase at a unit-cell point.
    pub fn tensor(&self, phase: crate::geometry::Phase, y: [f64; 2]) -> Tensor2 {
        match phase {
            crate::geometry::Phase::Matrix => self.a1.sample(y),
            crate::geometry::Phase::Inclusion => self.a2.sample(y),
        }
    }

    /// Source of the given phase at a macro point.
    pub fn source(&self, phase: crate::geometry::Phase, x: [f64; 2]) -> f64 {
        match phase {
            crate::geometry::Phase::Matrix => self.f1.eval(x),
            crate::geometry::Phase::Inclusion => self.f2.eval(x),
        }
    }

    pub fn gamma(&self) -> &GammaField {
        &self.gamma
    }

    pub fn f1(&self) -> &Expr {
        &self.f1
    }

    pub fn f2(&self) -> &Expr {
        &self.f2
    }

    pub fn a1(&self) -> &TensorField {
        &self.a1
    }

    pub fn a2(&self) -> &TensorField {
        &self.a2
    }

    /// Returns a copy with both phase tensors scaled by `s` (sources and γ
    /// untouched). Used by scaling-covariance checks.
    pub fn with_tensors_scaled(&self, s: f64) -> Result<CoefficientSet> {
        let scale = |tf: &TensorField| match *tf {
            TensorField::Constant(t) => TensorField::Constant(t.scale(s)),
            TensorField::Layered { axis, split, below, above } => {
                TensorField::Layered { axis, split, below: s * below, above: s * above }
            }
        };
        CoefficientSet::new(
            scale(&self.a1),
            scale(&self.a2),
            self.gamma.0,
            self.f1.clone(),
            self.f2.clone(),
        )
    }
}
