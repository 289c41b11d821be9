//! Fixed catalog of scalar source expressions on the macro domain.
//!
//! Run configurations refer to sources by name rather than by arbitrary
//! formula, which keeps runs reproducible and lets tests pin down exact
//! integrals. Three forms are supported:
//!
//! * `const:c` — the constant c;
//! * `sinpi2` — 2π² sin(πx₁) sin(πx₂), the right-hand side whose exact
//!   homogeneous-Dirichlet solution for the unit Laplacian is
//!   sin(πx₁) sin(πx₂);
//! * `poly:c00,c10,c01` — the affine function c00 + c10·x₁ + c01·x₂.

use crate::error::{Error, Result};
use std::f64::consts::PI;
use std::fmt;

/// A scalar expression from the fixed catalog, evaluated on the unit square.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// 2π² sin(πx₁) sin(πx₂).
    SinPi2,
    /// c00 + c10·x₁ + c01·x₂.
    Poly { c00: f64, c10: f64, c01: f64 },
}

impl Expr {
    /// Parses a catalog name as used in run configurations.
    pub fn parse(text: &str) -> Result<Expr> {
        let bad = |msg: String| Error::Config(msg);
        if text == "sinpi2" {
            return Ok(Expr::SinPi2);
        }
        if let Some(rest) = text.strip_prefix("const:") {
            let c: f64 = rest
                .trim()
                .parse()
                .map_err(|_| bad(format!("expression `{text}`: `{rest}` is not a number")))?;
            if !c.is_finite() {
                return Err(bad(format!("expression `{text}`: constant must be finite")));
            }
            return Ok(Expr::Const(c));
        }
        if let Some(rest) = text.strip_prefix("poly:") {
            let parts: Vec<&str> = rest.split(',').collect();
            if parts.len() != 3 {
                return Err(bad(format!(
                    "expression `{text}`: poly takes exactly three coefficients c00,c10,c01"
                )));
            }
            let mut c = [0.0_f64; 3];
            for (slot, part) in c.iter_mut().zip(&parts) {
                let v: f64 = part.trim().parse().map_err(|_| {
                    bad(format!("expression `{text}`: `{part}` is not a number"))
                })?;
                if !v.is_finite() {
                    return Err(bad(format!(
                        "expression `{text}`: coefficients must be finite"
                    )));
                }
                *slot = v;
            }
            return Ok(Expr::Poly { c00: c[0], c10: c[1], c01: c[2] });
        }
        Err(bad(format!(
            "unknown expression `{text}` (expected `const:c`, `sinpi2`, or `poly:c00,c10,c01`)"
        )))
    }

    /// Evaluates the expression at a point of the unit square.
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match *self {
            Expr::Const(c) => c,
            Expr::SinPi2 => 2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin(),
            Expr::Poly { c00, c10, c01 } => c00 + c10 * x[0] + c01 * x[1],
        }
    }

    /// Exact integral over the unit square, used as a quadrature reference.
    pub fn integral_unit_square(&self) -> f64 {
        match *self {
            Expr::Const(c) => c,
            // 2π² (∫₀¹ sin(πt) dt)² = 2π² (2/π)² = 8.
            Expr::SinPi2 => 8.0,
            Expr::Poly { c00, c10, c01 } => c00 + 0.5 * c10 + 0.5 * c01,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Expr::Const(c) => write!(f, "const:{c}"),
            Expr::SinPi2 => write!(f, "sinpi2"),
            Expr::Poly { c00, c10, c01 } => write!(f, "poly:{c00},{c10},{c01}"),
        }
    }
}
