//! Variable exponent fields p(x) with certified grid bounds.
//!
//! An [`ExponentField`] pairs a closed-form expression with the bounds that
//! the rest of the crate relies on: `p_minus`/`p_plus` (grid min/max of p)
//! and `kappa` (grid max of |Dp|, from the symbolic gradient). Bounds are the
//! raw grid values, which the classification rules use directly; certificate
//! constants that stand in for continuum suprema apply the stored safety
//! factor on top and are clamped where a hypothesis needs them above 1.

use serde::Serialize;

use crate::error::Error;
use crate::expr::{self, Expr};
use crate::grid::Grid;
use crate::linalg::{Vector, MAX_DIM};
use crate::Result;

/// Regime of the exponent range: degenerate (p >= 2 everywhere), singular
/// (p < 2 everywhere) or mixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseTag {
    Degenerate,
    Singular,
    Mixed,
}

/// Classifies an exponent range.
pub fn classify_case(p_minus: f64, p_plus: f64) -> CaseTag {
    if p_minus >= 2.0 {
        CaseTag::Degenerate
    } else if p_plus < 2.0 {
        CaseTag::Singular
    } else {
        CaseTag::Mixed
    }
}

/// Default multiplicative headroom applied to certificate constants.
pub const DEFAULT_SAFETY_FACTOR: f64 = 1.05;

/// Smallest admissible distance of p above 1.
pub const MIN_EXPONENT_GAP: f64 = 1e-9;

/// Exponent field with closed-form gradient and certified grid bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentField {
    expr: Expr,
    grad: [Expr; MAX_DIM],
    p_minus: f64,
    p_plus: f64,
    kappa: f64,
    safety: f64,
}

impl ExponentField {
    /// Constant exponent; no grid needed since the bounds are trivial.
    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 1.0 + MIN_EXPONENT_GAP) {
            return Err(Error::ExponentTooSmall { node: 0, value: c });
        }
        Ok(ExponentField {
            expr: Expr::Num(c),
            grad: [Expr::Num(0.0), Expr::Num(0.0), Expr::Num(0.0)],
            p_minus: c,
            p_plus: c,
            kappa: 0.0,
            safety: DEFAULT_SAFETY_FACTOR,
        })
    }

    /// Binds an expression to a grid: validates p > 1 at every node, checks
    /// the coordinates used fit the dimension, and computes the bounds.
    pub fn from_expr(expr: Expr, grid: &Grid) -> Result<Self> {
        if let Some(axis) = expr.max_coord() {
            if axis >= grid.dim() {
                return Err(Error::CoordOutOfRange(format!("x{}", axis + 1), grid.dim()));
            }
        }
        let grad = [expr.diff(0), expr.diff(1), expr.diff(2)];
        let mut field = ExponentField {
            expr,
            grad,
            p_minus: f64::INFINITY,
            p_plus: f64::NEG_INFINITY,
            kappa: 0.0,
            safety: DEFAULT_SAFETY_FACTOR,
        };
        let (p_minus, p_plus, kappa) = exponent_bounds(&field, grid)?;
        field.p_minus = p_minus;
        field.p_plus = p_plus;
        field.kappa = kappa;
        Ok(field)
    }

    /// Parses the expression language and binds the result to `grid`.
    pub fn parse(src: &str, grid: &Grid) -> Result<Self> {
        Self::from_expr(expr::parse(src)?, grid)
    }

    pub fn with_safety_factor(mut self, safety: f64) -> Self {
        self.safety = safety;
        self
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// p(x); errors when the value drops to 1 or below.
    pub fn eval(&self, x: &Vector) -> Result<f64> {
        let p = self.expr.eval(x);
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::ExponentTooSmall { node: 0, value: p });
        }
        Ok(p)
    }

    /// Closed-form gradient Dp(x).
    pub fn gradient(&self, x: &Vector) -> Vector {
        let mut g = Vector::zero(x.dim());
        for axis in 0..x.dim() {
            g.set(axis, self.grad[axis].eval(x));
        }
        g
    }

    /// (p_minus, p_plus, kappa) as stored.
    pub fn bounds(&self) -> (f64, f64, f64) {
        (self.p_minus, self.p_plus, self.kappa)
    }

    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }

    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn safety_factor(&self) -> f64 {
        self.safety
    }

    pub fn case(&self) -> CaseTag {
        classify_case(self.p_minus, self.p_plus)
    }

    pub fn is_constant(&self) -> bool {
        self.kappa == 0.0 && self.p_minus == self.p_plus
    }

    /// Conjugate exponent field q(x) = p(x) / (p(x) - 1), bound to `grid`.
    pub fn conjugate(&self, grid: &Grid) -> Result<ExponentField> {
        let q = Expr::Div(
            Box::new(self.expr.clone()),
            Box::new(Expr::Sub(Box::new(self.expr.clone()), Box::new(Expr::Num(1.0)))),
        );
        Ok(ExponentField::from_expr(q, grid)?.with_safety_factor(self.safety))
    }

    /// Max of |Dp| over an explicit node set, for support-local certificate
    /// constants.
    pub fn kappa_over<'a>(&self, grid: &Grid, nodes: impl Iterator<Item = &'a usize>) -> f64 {
        nodes
            .map(|&i| self.gradient(&grid.coord(i)).norm())
            .fold(0.0, f64::max)
    }
}

/// Grid min/max of p and grid max of |Dp|. These populate the field's bounds;
/// the safety factor is applied downstream, not here.
pub fn exponent_bounds(p: &ExponentField, grid: &Grid) -> Result<(f64, f64, f64)> {
    let mut p_minus = f64::INFINITY;
    let mut p_plus = f64::NEG_INFINITY;
    let mut kappa = 0.0f64;
    for i in grid.node_ids() {
        let x = grid.coord(i);
        let v = p.expr.eval(&x);
        if !(v > 1.0 + MIN_EXPONENT_GAP) || !v.is_finite() {
            return Err(Error::ExponentTooSmall { node: i, value: v });
        }
        p_minus = p_minus.min(v);
        p_plus = p_plus.max(v);
        kappa = kappa.max(p.gradient(&x).norm());
    }
    Ok((p_minus, p_plus, kappa))
}
