//! Pointwise and weak-form evaluation of the variable-exponent Laplacian:
//! the nondivergence expansion with its three components, the
//! delta-regularized form that stays defined at critical points, weak
//! residuals against bump test functions, and the lower-bound certificates
//! for both exponent regimes.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::Error;
use crate::exponent::ExponentField;
use crate::grid::{ScalarField, TestFunction};
use crate::infconv::{InfConvResult, KernelVariant};
use crate::linalg::{SymMatrix, Vector};
use crate::Result;

/// Nondivergence evaluation split into its three components.
///
/// total = -(trace_term + infinity_term + log_term).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatorEval {
    pub total: f64,
    pub trace_term: f64,
    pub infinity_term: f64,
    pub log_term: f64,
    pub grad_norm: f64,
}

/// How the regularized form writes the gradient logarithm.
///
/// `Sqrt` uses log((|Du|^2+delta)^{1/2}), which recovers the nondivergence
/// form as delta -> 0. `Squared` uses log(|Du|^2+delta), the normalization
/// the singular-regime certificate compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogNormalization {
    Sqrt,
    Squared,
}

/// Outcome of a lower-bound check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub bound: f64,
    pub observed_min: f64,
    pub holds: bool,
    pub constants: BTreeMap<String, f64>,
    /// Set when a hypothesis of the underlying claim was violated; `holds`
    /// is false in that case regardless of the numeric comparison.
    pub violation: Option<String>,
}

fn jet(u: &ScalarField, x: usize) -> Result<(Vector, SymMatrix)> {
    Ok((u.gradient_fd(x)?, u.hessian_fd(x)?))
}

/// Nondivergence evaluation on an explicit second-order jet. The `node` is
/// only used to attribute a zero-gradient error.
pub fn nondiv_eval_jet(
    grad: &Vector,
    hess: &SymMatrix,
    px: f64,
    dp: &Vector,
    node: usize,
) -> Result<OperatorEval> {
    let gn = grad.norm();
    if gn == 0.0 {
        return Err(Error::UndefinedAtCriticalPoint { node });
    }
    let pw = gn.powf(px - 2.0);
    let dir = grad.scale(1.0 / gn);
    let trace_term = pw * hess.trace();
    let infinity_term = (px - 2.0) * pw * hess.quad(&dir);
    let log_term = pw * gn.ln() * dp.dot(grad);
    Ok(OperatorEval {
        total: -(trace_term + infinity_term + log_term),
        trace_term,
        infinity_term,
        log_term,
        grad_norm: gn,
    })
}

/// Nondivergence evaluation from finite-difference jets at an interior node.
pub fn nondiv_eval(u: &ScalarField, p: &ExponentField, x: usize) -> Result<OperatorEval> {
    let (g, h) = jet(u, x)?;
    let coord = u.grid().coord(x);
    nondiv_eval_jet(&g, &h, p.eval(&coord)?, &p.gradient(&coord), x)
}

/// Delta-regularized evaluation, defined at critical points.
pub fn regularized_eval(
    u: &ScalarField,
    p: &ExponentField,
    x: usize,
    delta: f64,
    norm: LogNormalization,
) -> Result<f64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Config(format!("delta must be positive and finite, got {delta}")));
    }
    let (g, hess) = jet(u, x)?;
    let coord = u.grid().coord(x);
    let px = p.eval(&coord)?;
    let dp = p.gradient(&coord);
    let s = g.dot(&g) + delta;
    let a = s.powf(0.5 * (px - 2.0));
    let main = a * (hess.trace() + ((px - 2.0) / s) * hess.quad(&g));
    let log_factor = match norm {
        LogNormalization::Sqrt => 0.5 * s.ln(),
        LogNormalization::Squared => s.ln(),
    };
    Ok(-main - a * log_factor * dp.dot(&g))
}

fn check_bump(psi: &TestFunction) -> Result<()> {
    if psi.height() < 0.0 {
        return Err(Error::Config("test functions must be nonnegative".into()));
    }
    Ok(())
}

/// Quadrature of <|Du|^{p-2} Du, D psi> with the analytic bump gradient.
///
/// At nodes where p(x) < 2 and the gradient is below one spacing, the
/// prefactor switches to (|Du|^2 + h^2)^{(p-2)/2} so the singular weight
/// cannot blow up on the critical set; a vanishing gradient contributes
/// nothing in either regime.
pub fn weak_residual(u: &ScalarField, p: &ExponentField, psi: &TestFunction) -> Result<f64> {
    check_bump(psi)?;
    let g = u.grid();
    let h = g.h_max();
    let mut acc = 0.0;
    for x in psi.support_nodes(g) {
        if !g.is_interior(x) {
            continue;
        }
        let du = u.gradient_fd(x)?;
        let gn = du.norm();
        if gn == 0.0 {
            continue;
        }
        let coord = g.coord(x);
        let px = p.eval(&coord)?;
        let factor = if px < 2.0 && gn < h {
            (gn * gn + h * h).powf(0.5 * (px - 2.0))
        } else {
            gn.powf(px - 2.0)
        };
        acc += g.quad_weight(x) * factor * du.dot(&psi.gradient(&coord));
    }
    Ok(acc)
}

/// Quadrature of <(|Du|^2+delta)^{(p-2)/2} Du, D psi>.
pub fn regularized_weak_residual(
    u: &ScalarField,
    p: &ExponentField,
    psi: &TestFunction,
    delta: f64,
) -> Result<f64> {
    check_bump(psi)?;
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Config(format!("delta must be positive and finite, got {delta}")));
    }
    let g = u.grid();
    let mut acc = 0.0;
    for x in psi.support_nodes(g) {
        if !g.is_interior(x) {
            continue;
        }
        let du = u.gradient_fd(x)?;
        let coord = g.coord(x);
        let px = p.eval(&coord)?;
        let factor = (du.dot(&du) + delta).powf(0.5 * (px - 2.0));
        acc += g.quad_weight(x) * factor * du.dot(&psi.gradient(&coord));
    }
    Ok(acc)
}

/// Finite-difference divergence of the flux |Du|^{p-2} Du, negated. An
/// independent route to the same value as [`nondiv_eval`], assembled only
/// from neighbor gradients; needs a two-deep interior node.
pub fn flux_divergence_fd(u: &ScalarField, p: &ExponentField, x: usize) -> Result<f64> {
    let g = u.grid();
    let flux_component = |node: usize, axis: usize| -> Result<f64> {
        let du = u.gradient_fd(node)?;
        let gn = du.norm();
        if gn == 0.0 {
            return Ok(0.0);
        }
        let px = p.eval(&g.coord(node))?;
        Ok(gn.powf(px - 2.0) * du.get(axis))
    };
    let mut div = 0.0;
    for axis in 0..g.dim() {
        let up = g.neighbor(x, axis, 1).ok_or(Error::BoundaryNode { node: x })?;
        let dn = g.neighbor(x, axis, -1).ok_or(Error::BoundaryNode { node: x })?;
        if !g.is_interior(up) || !g.is_interior(dn) {
            return Err(Error::BoundaryNode { node: x });
        }
        div += (flux_component(up, axis)? - flux_component(dn, axis)?) / (2.0 * g.spacing(axis));
    }
    Ok(-div)
}

/// Both sides of the integration-by-parts identity together with the
/// observed constant |weak - strong| / (h * height(psi)).
pub fn integration_by_parts_gap(
    u: &ScalarField,
    p: &ExponentField,
    psi: &TestFunction,
) -> Result<(f64, f64, f64)> {
    let weak = weak_residual(u, p, psi)?;
    let g = u.grid();
    let h = g.h_max();
    let mut strong = 0.0;
    for x in psi.support_nodes(g) {
        if !g.is_interior(x) {
            continue;
        }
        let value = match nondiv_eval(u, p, x) {
            Ok(ev) => ev.total,
            Err(Error::UndefinedAtCriticalPoint { .. }) => {
                regularized_eval(u, p, x, h * h, LogNormalization::Sqrt)?
            }
            Err(e) => return Err(e),
        };
        strong += g.quad_weight(x) * value * psi.value(&g.coord(x));
    }
    let c_obs = (weak - strong).abs() / (h * psi.height().max(f64::MIN_POSITIVE));
    Ok((weak, strong, c_obs))
}

/// Lower bound for the degenerate regime:
/// -C^{p_plus-2} n (p_plus + tau - 1) / eps with tau = eps ln(C) kappa C.
pub fn lower_bound_degenerate(
    c_tilde: f64,
    kappa: f64,
    eps: f64,
    p_plus: f64,
    n: usize,
) -> Result<f64> {
    if !(c_tilde > 1.0) {
        return Err(Error::ConstantNotAboveOne { name: "C_tilde", value: c_tilde });
    }
    if !(kappa > 1.0) {
        return Err(Error::ConstantNotAboveOne { name: "kappa", value: kappa });
    }
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    if p_plus < 2.0 {
        return Err(Error::Config(format!(
            "the degenerate bound needs p_plus >= 2, got {p_plus}"
        )));
    }
    let tau = eps * c_tilde.ln() * kappa * c_tilde;
    Ok(-c_tilde.powf(p_plus - 2.0) * n as f64 * (p_plus + tau - 1.0) / eps)
}

const CONSTANT_CLAMP: f64 = 1.0 + 1e-6;

/// Sweeps the nondivergence evaluation over `nodes` and compares the minimum
/// against the degenerate lower bound, with slack 10 h (1 + |bound|).
///
/// `scale` is the claim's epsilon: the reciprocal of the mollified Hessian
/// cap. For fields built from our kernels that is the kernel weight, not the
/// kernel's eps parameter.
///
/// C defaults to the gradient sup over the sweep scaled by the exponent
/// field's safety factor; passing an override below that sup records a
/// hypothesis violation and the certificate cannot hold.
pub fn certify_degenerate(
    u: &ScalarField,
    p: &ExponentField,
    scale: f64,
    nodes: &[usize],
    c_tilde_override: Option<f64>,
) -> Result<Certificate> {
    let g = u.grid();
    let interior: Vec<usize> = nodes.iter().copied().filter(|&x| g.is_interior(x)).collect();
    if interior.is_empty() {
        return Err(Error::Config("certificate sweep needs interior nodes".into()));
    }
    let (_, p_plus, kappa_raw) = p.bounds();
    let mut sup_grad = 0.0f64;
    let mut observed_min = f64::INFINITY;
    let mut n_skipped = 0usize;
    for &x in &interior {
        match nondiv_eval(u, p, x) {
            Ok(ev) => {
                sup_grad = sup_grad.max(ev.grad_norm);
                observed_min = observed_min.min(ev.total);
            }
            Err(Error::UndefinedAtCriticalPoint { .. }) => n_skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if observed_min == f64::INFINITY {
        return Err(Error::Config("certificate sweep found no node with nonzero gradient".into()));
    }
    let safety = p.safety_factor();
    let c_tilde = c_tilde_override.unwrap_or((safety * sup_grad).max(CONSTANT_CLAMP));
    let kappa = (safety * kappa_raw).max(CONSTANT_CLAMP);
    let bound = lower_bound_degenerate(c_tilde, kappa, scale, p_plus, g.dim())?;
    let slack = 10.0 * g.h_max() * (1.0 + bound.abs());
    let mut violation = None;
    if c_tilde < sup_grad {
        violation = Some(format!(
            "C_tilde = {c_tilde} is below the gradient sup {sup_grad} on the sweep"
        ));
    }
    let tau = scale * c_tilde.ln() * kappa * c_tilde;
    let mut constants = BTreeMap::new();
    constants.insert("C_tilde".into(), c_tilde);
    constants.insert("kappa".into(), kappa);
    constants.insert("tau".into(), tau);
    constants.insert("scale".into(), scale);
    constants.insert("p_plus".into(), p_plus);
    constants.insert("n".into(), g.dim() as f64);
    constants.insert("sup_grad".into(), sup_grad);
    constants.insert("nodes_skipped".into(), n_skipped as f64);
    Ok(Certificate {
        bound,
        observed_min,
        holds: violation.is_none() && observed_min >= bound - slack,
        constants,
        violation,
    })
}

/// Singular-regime certificate at one node of an infimal convolution.
///
/// Away from the critical set it compares the regularized evaluation
/// (squared log normalization) against the singular lower bound and checks
/// the companion Hessian eigenvalue bound. Where |Du_eps| <= h it instead
/// asserts the near-critical Hessian inequality lambda_max <= 10 h.
pub fn certify_singular(
    r: &InfConvResult,
    p: &ExponentField,
    x: usize,
    delta: f64,
    kappa_hat: f64,
) -> Result<Certificate> {
    if r.kernel.variant() != KernelVariant::Singular {
        return Err(Error::Config("the singular certificate needs a singular kernel".into()));
    }
    if !(kappa_hat > 1.0) {
        return Err(Error::ConstantNotAboveOne { name: "kappa_hat", value: kappa_hat });
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Config(format!("delta must be positive and finite, got {delta}")));
    }
    let (_, p_plus, _) = p.bounds();
    r.kernel.validate_for(p_plus)?;
    let u = &r.field;
    let g = u.grid();
    let h = g.h_max();
    let (du, hess) = jet(u, x)?;
    let gn = du.norm();
    let q = r.kernel.q();
    let eps = r.kernel.eps();
    let n = g.dim() as f64;
    let mut constants = BTreeMap::new();
    constants.insert("q".into(), q);
    constants.insert("eps".into(), eps);
    constants.insert("delta".into(), delta);
    constants.insert("kappa_hat".into(), kappa_hat);
    constants.insert("grad_norm".into(), gn);
    let eig = hess.max_eigenvalue();
    if gn <= h {
        // Near-critical branch: the Hessian upper bound alone.
        constants.insert("hessiangeq".into(), 1.0);
        constants.insert("max_eig".into(), eig);
        return Ok(Certificate {
            bound: 0.0,
            observed_min: 10.0 * h - eig,
            holds: eig <= 10.0 * h,
            constants,
            violation: None,
        });
    }
    let c0 = eps * (gn * gn + delta).ln();
    // The gradient power combines |Du|^{p_plus-2} from the coefficient with
    // |Du|^{(q-2)/(q-1)} from the Hessian cap; they do not share a denominator.
    let expo = p_plus - 2.0 + (q - 2.0) / (q - 1.0);
    let factor = gn.powf(expo);
    let bound =
        -(n / eps) * factor * (q - 1.0 + p_plus - 2.0 + c0 * kappa_hat * gn.powf(1.0 / (q - 1.0)));
    let observed = regularized_eval(u, p, x, delta, LogNormalization::Squared)?;
    let slack = 10.0 * h * (1.0 + bound.abs());
    let hess_bound = ((q - 1.0) / eps) * gn.powf((q - 2.0) / (q - 1.0));
    let hess_slack = 10.0 * h * (1.0 + hess_bound.abs());
    let hess_ok = eig <= hess_bound + hess_slack;
    constants.insert("C0".into(), c0);
    constants.insert("exponent".into(), expo);
    constants.insert("hess_bound".into(), hess_bound);
    constants.insert("max_eig".into(), eig);
    Ok(Certificate {
        bound,
        observed_min: observed,
        holds: observed >= bound - slack && hess_ok,
        constants,
        violation: None,
    })
}
