//! Modulars and Luxemburg norms of variable-exponent Lebesgue and Sobolev
//! spaces, with the norm-modular comparison machinery.
//!
//! The modular is the trapezoid quadrature of |u(x)|^p(x). The Luxemburg norm
//! is the unique lambda with modular(u/lambda) = 1, found by bisection inside
//! the bracket [min, max] of modular^(1/p_plus) and modular^(1/p_minus);
//! that bracket is valid for any discrete modular whose node exponents stay
//! within the field's grid bounds.

use serde::Serialize;

use crate::error::Error;
use crate::exponent::ExponentField;
use crate::grid::ScalarField;
use crate::Result;

/// Outcome of a Luxemburg norm computation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormReport {
    pub norm: f64,
    pub modular: f64,
    pub bisection_iters: usize,
    pub bracket_width: f64,
}

/// Two-sided norm-modular comparison at a field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub lhs: f64,
    pub modular: f64,
    pub rhs: f64,
    pub norm: f64,
    pub slack: f64,
    pub holds: bool,
}

/// Trapezoid quadrature of |u(x)|^p(x).
pub fn modular(u: &ScalarField, p: &ExponentField) -> Result<f64> {
    scaled_modular(u, p, 1.0)
}

fn scaled_modular(u: &ScalarField, p: &ExponentField, lambda: f64) -> Result<f64> {
    let g = u.grid();
    let mut acc = 0.0;
    for i in g.node_ids() {
        let px = p.eval(&g.coord(i))?;
        let term = (u.value(i).abs() / lambda).powf(px);
        if !term.is_finite() {
            return Err(Error::ModularOverflow { node: i, value: u.value(i).abs(), p: px });
        }
        acc += g.quad_weight(i) * term;
    }
    Ok(acc)
}

/// Luxemburg norm by bisection to relative bracket width `tol`.
///
/// The zero field has norm zero with no iterations.
pub fn luxemburg_norm(u: &ScalarField, p: &ExponentField, tol: f64) -> Result<NormReport> {
    let m = modular(u, p)?;
    if m == 0.0 {
        return Ok(NormReport { norm: 0.0, modular: 0.0, bisection_iters: 0, bracket_width: 0.0 });
    }
    let (p_minus, p_plus, _) = p.bounds();
    let a = m.powf(1.0 / p_plus);
    let b = m.powf(1.0 / p_minus);
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    // The bracket is mathematically valid; guard against float slip at the ends.
    let mut guard = 0;
    while scaled_modular(u, p, lo)? < 1.0 {
        lo *= 0.5;
        guard += 1;
        if guard > 64 {
            return Err(Error::BracketFailure(m));
        }
    }
    guard = 0;
    while scaled_modular(u, p, hi)? > 1.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 64 {
            return Err(Error::BracketFailure(m));
        }
    }
    let mut iters = 0;
    while (hi - lo) > tol * 0.5 * (hi + lo) && iters < 200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if scaled_modular(u, p, mid)? >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
    }
    Ok(NormReport {
        norm: 0.5 * (lo + hi),
        modular: m,
        bisection_iters: iters,
        bracket_width: hi - lo,
    })
}

/// Checks min(norm^p_plus, norm^p_minus) <= modular <= max(...), with slack
/// 1e-9 * (1 + modular).
pub fn check_sandwich(u: &ScalarField, p: &ExponentField, norm_tol: f64) -> Result<SandwichReport> {
    let report = luxemburg_norm(u, p, norm_tol)?;
    let (p_minus, p_plus, _) = p.bounds();
    let a = report.norm.powf(p_plus);
    let b = report.norm.powf(p_minus);
    let (lhs, rhs) = (a.min(b), a.max(b));
    let slack = 1e-9 * (1.0 + report.modular);
    let holds = lhs <= report.modular + slack && report.modular <= rhs + slack;
    Ok(SandwichReport { lhs, modular: report.modular, rhs, norm: report.norm, slack, holds })
}

/// Pair (integral of |u v|, 2 * ||u||_p * ||v||_q) with q the conjugate
/// exponent field; the first never exceeds the second.
pub fn holder_pairing(
    u: &ScalarField,
    v: &ScalarField,
    p: &ExponentField,
    norm_tol: f64,
) -> Result<(f64, f64)> {
    let g = u.grid();
    if v.grid() != g {
        return Err(Error::Config("holder pairing needs both fields on one grid".into()));
    }
    let mut lhs = 0.0;
    for i in g.node_ids() {
        lhs += g.quad_weight(i) * (u.value(i) * v.value(i)).abs();
    }
    let q = p.conjugate(g)?;
    let nu = luxemburg_norm(u, p, norm_tol)?.norm;
    let nv = luxemburg_norm(v, &q, norm_tol)?.norm;
    Ok((lhs, 2.0 * nu * nv))
}

/// |Du| sampled at every node: centered differences inside, second-order
/// one-sided stencils on the boundary.
pub fn gradient_magnitude_field(u: &ScalarField) -> ScalarField {
    let g = u.grid().clone();
    let values: Vec<f64> = g.node_ids().map(|i| u.gradient_one_sided(i).norm()).collect();
    ScalarField::from_raw(g, values)
}

/// Sobolev norm ||u||_p + || |Du| ||_p.
pub fn sobolev_norm(u: &ScalarField, p: &ExponentField, tol: f64) -> Result<f64> {
    let du = gradient_magnitude_field(u);
    Ok(luxemburg_norm(u, p, tol)?.norm + luxemburg_norm(&du, p, tol)?.norm)
}
