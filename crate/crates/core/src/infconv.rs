//! Infimal convolution of sampled fields with power kernels, plus the
//! regularity certificates that make the construction useful: effective
//! radius, minimizer sets, semiconcavity, gradient bounds, and the mollified
//! approximating sequence.
//!
//! The minimization at each node is restricted to the window |x-y| <= r_eps;
//! any candidate outside pays a penalty of at least osc(u) and so can never
//! beat y = x. The window minimum therefore equals the global minimum on the
//! same nodes with the same arithmetic, which check_window_identity-style
//! tests assert bitwise.
//!
//! Distances are taken from index deltas, never from absolute coordinates,
//! so the transform commutes with lattice shifts exactly.

use crate::error::Error;
use crate::grid::{Grid, ScalarField};
use crate::linalg::MAX_DIM;
use crate::verify::Verdict;
use crate::Result;

/// Scale for the minimizer-set tie tolerance, per node: scale * (1 + |u_eps|).
pub const TIE_TOL_SCALE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelVariant {
    Degenerate,
    Singular,
}

/// Power kernel |x-y|^q / (q w).
///
/// The two variants differ only in how the weight is derived from eps:
/// w = eps^q for the degenerate family (which is pinned to q = 2) and
/// w = eps^{q-1} for the singular family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    q: f64,
    eps: f64,
    variant: KernelVariant,
    w: f64,
}

impl Kernel {
    pub fn degenerate(eps: f64) -> Result<Kernel> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::BadKernel(format!("eps must be positive and finite, got {eps}")));
        }
        Ok(Kernel { q: 2.0, eps, variant: KernelVariant::Degenerate, w: eps * eps })
    }

    pub fn singular(eps: f64, q: f64) -> Result<Kernel> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::BadKernel(format!("eps must be positive and finite, got {eps}")));
        }
        if !(q >= 2.0) || !q.is_finite() {
            return Err(Error::BadKernel(format!("kernel exponent must be at least 2, got {q}")));
        }
        Ok(Kernel { q, eps, variant: KernelVariant::Singular, w: eps.powf(q - 1.0) })
    }

    /// The singular family needs q > p_plus/(p_plus - 1) to dominate the
    /// operator's own degeneracy; the degenerate family has no p-condition.
    pub fn validate_for(&self, p_plus: f64) -> Result<()> {
        if self.variant == KernelVariant::Singular {
            let threshold = p_plus / (p_plus - 1.0);
            if self.q <= threshold {
                return Err(Error::BadKernel(format!(
                    "singular kernel needs q > {threshold} for p_plus = {p_plus}, got q = {}",
                    self.q
                )));
            }
        }
        Ok(())
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn weight(&self) -> f64 {
        self.w
    }

    pub fn variant(&self) -> KernelVariant {
        self.variant
    }

    pub fn penalty(&self, d: f64) -> f64 {
        self.penalty_sq(d * d)
    }

    // q = 2 avoids powf so that equal index deltas give bitwise-equal
    // penalties.
    fn penalty_sq(&self, d2: f64) -> f64 {
        if self.q == 2.0 {
            d2 / (2.0 * self.w)
        } else {
            d2.powf(0.5 * self.q) / (self.q * self.w)
        }
    }
}

/// Radius at which the kernel penalty alone reaches the oscillation of u,
/// so that the minimization may be restricted to |x-y| <= r.
pub fn effective_radius(k: &Kernel, osc: f64) -> Result<f64> {
    if !osc.is_finite() || osc < 0.0 {
        return Err(Error::Numeric(format!("oscillation must be finite and nonnegative, got {osc}")));
    }
    Ok((k.q * k.w * osc).powf(1.0 / k.q))
}

/// Largest constant with u_eps(x) - C|x|^2 concave.
pub fn semiconcavity_constant(k: &Kernel) -> f64 {
    1.0 / (2.0 * k.w)
}

/// The same constant in the eps normalization 1/(2 eps); coincides with
/// [`semiconcavity_constant`] exactly when w = eps.
pub fn semiconcavity_constant_eps(k: &Kernel) -> f64 {
    1.0 / (2.0 * k.eps)
}

/// Infimal convolution of a sampled field, defined on the nodes farther
/// than r_eps from the boundary.
#[derive(Debug, Clone)]
pub struct InfConvResult {
    /// u_eps on the effective-domain subgrid.
    pub field: ScalarField,
    /// Index offset of the subgrid origin in the source grid.
    pub offset: [usize; MAX_DIM],
    pub kernel: Kernel,
    pub r_eps: f64,
    /// Minimizer nodes per subgrid node, as source-grid flat ids, ascending.
    pub y_sets: Vec<Vec<usize>>,
    /// Semiconcavity constant 1/(2w).
    pub c: f64,
    /// The field that was convolved.
    pub source: ScalarField,
}

impl InfConvResult {
    /// Source-grid flat id of a subgrid node.
    pub fn source_flat(&self, child_flat: usize) -> usize {
        self.source.grid().parent_flat(self.field.grid(), &self.offset, child_flat)
    }
}

struct Window {
    half: [isize; MAX_DIM],
    r_sq: f64,
}

impl Window {
    fn new(g: &Grid, r: f64) -> Window {
        let mut half = [0isize; MAX_DIM];
        for axis in 0..g.dim() {
            let h = g.spacing(axis);
            let mut k = (r / h).floor() as isize;
            // Float guard: the window must contain every offset with |dz| <= r.
            while ((k + 1) as f64 * h).powi(2) <= r * r {
                k += 1;
            }
            half[axis] = k;
        }
        Window { half, r_sq: r * r }
    }

    fn for_each(&self, g: &Grid, centre: &[usize; MAX_DIM], mut f: impl FnMut(usize, f64)) {
        let dim = g.dim();
        let mut dz = [0isize; MAX_DIM];
        for a in 0..dim {
            dz[a] = -self.half[a];
        }
        loop {
            let mut d2 = 0.0;
            for a in 0..dim {
                let step = dz[a] as f64 * g.spacing(a);
                d2 += step * step;
            }
            if d2 <= self.r_sq {
                let mut idx = [0usize; MAX_DIM];
                for a in 0..dim {
                    idx[a] = (centre[a] as isize + dz[a]) as usize;
                }
                f(g.flat(&idx[..dim]), d2);
            }
            // Odometer over the offset box, last axis fastest.
            let mut axis = dim;
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                if dz[axis] < self.half[axis] {
                    dz[axis] += 1;
                    break;
                }
                dz[axis] = -self.half[axis];
            }
        }
    }
}

fn window_min(u: &ScalarField, k: &Kernel, win: &Window, centre: &[usize; MAX_DIM]) -> f64 {
    let mut best = f64::INFINITY;
    win.for_each(u.grid(), centre, |y, d2| {
        let val = u.value(y) + k.penalty_sq(d2);
        if val < best {
            best = val;
        }
    });
    best
}

fn window_argmin(
    u: &ScalarField,
    k: &Kernel,
    win: &Window,
    centre: &[usize; MAX_DIM],
    u_eps: f64,
    tie_tol: f64,
) -> Vec<usize> {
    let mut set = Vec::new();
    win.for_each(u.grid(), centre, |y, d2| {
        if u.value(y) + k.penalty_sq(d2) <= u_eps + tie_tol {
            set.push(y);
        }
    });
    set.sort_unstable();
    set
}

/// Computes u_eps(x) = min_y [u(y) + |x-y|^q/(q w)] at every node of the
/// effective domain, together with the minimizer sets.
pub fn inf_convolve(u: &ScalarField, k: &Kernel) -> Result<InfConvResult> {
    let g = u.grid();
    let r_eps = effective_radius(k, u.oscillation())?;
    let (child, offset) = g.crop_by_distance(r_eps)?;
    let win = Window::new(g, r_eps);
    let n = child.node_count();
    let mut values = Vec::with_capacity(n);
    let mut y_sets = Vec::with_capacity(n);
    for cf in child.node_ids() {
        let ci = child.unflat(cf);
        let mut centre = [0usize; MAX_DIM];
        for a in 0..g.dim() {
            centre[a] = ci[a] + offset[a];
        }
        let best = window_min(u, k, &win, &centre);
        let tie_tol = TIE_TOL_SCALE * (1.0 + best.abs());
        values.push(best);
        y_sets.push(window_argmin(u, k, &win, &centre, best, tie_tol));
    }
    Ok(InfConvResult {
        field: ScalarField::from_raw(child, values),
        offset,
        kernel: *k,
        r_eps,
        y_sets,
        c: semiconcavity_constant(k),
        source: u.clone(),
    })
}

/// Minimizer set at one source-grid node with an explicit tie tolerance.
pub fn argmin_set(u: &ScalarField, k: &Kernel, x: usize, tie_tol: f64) -> Result<Vec<usize>> {
    let g = u.grid();
    let r_eps = effective_radius(k, u.oscillation())?;
    if g.boundary_distance(x) <= r_eps {
        return Err(Error::Config(format!(
            "node {x} is within the effective radius {r_eps} of the boundary"
        )));
    }
    let win = Window::new(g, r_eps);
    let centre = g.unflat(x);
    let best = window_min(u, k, &win, &centre);
    Ok(window_argmin(u, k, &win, &centre, best, tie_tol))
}

fn quadratic_norm_sq(g: &Grid, flat: usize) -> f64 {
    let x = g.coord(flat);
    x.dot(&x)
}

/// Largest eigenvalue of the finite-difference Hessian of u_eps - C|x|^2
/// over the interior of the effective domain; holds iff it stays below 10 h.
pub fn check_semiconcave(r: &InfConvResult) -> (f64, bool) {
    let g = r.field.grid();
    let phi = ScalarField::from_raw(
        g.clone(),
        g.node_ids().map(|i| r.field.value(i) - r.c * quadratic_norm_sq(g, i)).collect(),
    );
    let mut max_eig = f64::NEG_INFINITY;
    for i in g.node_ids().filter(|&i| g.is_interior(i)) {
        let eig = phi.hessian_fd(i).expect("interior node").max_eigenvalue();
        if eig > max_eig {
            max_eig = eig;
        }
    }
    (max_eig, max_eig <= 10.0 * g.h_max())
}

/// Checks the minimizer-distance gradient bound (|x-y|/eps)^{q-1} <= |Du_eps|
/// at every node where the gradient is finite-difference stable, and the
/// contact identity u_eps = u where the gradient vanishes.
pub fn check_gradient_bound(r: &InfConvResult) -> Verdict {
    let g = r.field.grid();
    let src = &r.source;
    let h = g.h_max();
    let stable_tol = 10.0 * h * r.c;
    // One-node kernel slip plus the worst kernel slope over the window times
    // one spacing: the discretization error of the contact identity.
    let contact_slack = r.kernel.penalty(h)
        + h * if r.r_eps > 0.0 { r.r_eps.powf(r.kernel.q() - 1.0) / r.kernel.weight() } else { 0.0 };
    let mut margin = f64::INFINITY;
    let mut witness = None;
    let mut n_checked = 0usize;
    for i in g.node_ids().filter(|&i| g.is_interior(i)) {
        let mut stable = true;
        let mut grad_sq = 0.0;
        for axis in 0..g.dim() {
            let up = r.field.value(g.neighbor(i, axis, 1).expect("interior"));
            let dn = r.field.value(g.neighbor(i, axis, -1).expect("interior"));
            let ha = g.spacing(axis);
            let fwd = (up - r.field.value(i)) / ha;
            let bwd = (r.field.value(i) - dn) / ha;
            if (fwd - bwd).abs() > stable_tol {
                stable = false;
                break;
            }
            let central = 0.5 * (fwd + bwd);
            grad_sq += central * central;
        }
        if !stable {
            continue;
        }
        n_checked += 1;
        let grad = grad_sq.sqrt();
        let parent = r.source_flat(i);
        let mut local = f64::INFINITY;
        for &y in &r.y_sets[i] {
            let d = src.grid().node_distance(parent, y);
            let demand = (d / r.kernel.eps()).powf(r.kernel.q() - 1.0);
            local = local.min(grad + 10.0 * h - demand);
        }
        if grad <= h {
            let gap = src.value(parent) - r.field.value(i);
            local = local.min(contact_slack - gap);
        }
        if local < margin {
            margin = local;
            witness = Some(format!("source node {parent}"));
        }
    }
    Verdict { passed: margin >= 0.0, margin, witness, n_checked }
}

/// Discrete proxy for upper semicontinuity of x -> max_{y in Y(x)} |x-y|:
/// the map may not drop by more than 2(h + tie radius) from any node to its
/// neighbor.
pub fn check_upper_semicontinuity(r: &InfConvResult) -> Verdict {
    let g = r.field.grid();
    let src_grid = r.source.grid();
    let reach: Vec<f64> = g
        .node_ids()
        .map(|i| {
            let parent = r.source_flat(i);
            r.y_sets[i]
                .iter()
                .map(|&y| src_grid.node_distance(parent, y))
                .fold(0.0, f64::max)
        })
        .collect();
    let max_abs = r.field.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tie_radius = (r.kernel.q() * r.kernel.weight() * TIE_TOL_SCALE * (1.0 + max_abs))
        .powf(1.0 / r.kernel.q());
    let slack = 2.0 * (g.h_max() + tie_radius);
    let mut margin = f64::INFINITY;
    let mut witness = None;
    let mut n_checked = 0usize;
    for i in g.node_ids() {
        for axis in 0..g.dim() {
            for step in [-1isize, 1] {
                let Some(j) = g.neighbor(i, axis, step) else { continue };
                n_checked += 1;
                let local = reach[i] - reach[j] + slack;
                if local < margin {
                    margin = local;
                    witness = Some(format!("source node {}", r.source_flat(i)));
                }
            }
        }
    }
    Verdict { passed: margin >= 0.0, margin, witness, n_checked }
}

/// Mollification of u_eps with a normalized bump of radius 1/j, defined on
/// the nodes at least 1/j inside the effective domain.
///
/// The concave-split construction u_{eps,j} = (u_eps - C|x|^2) * eta + C|x|^2
/// is realized with the quadratic mollified by the same stencil, so the two
/// quadratic terms cancel and the whole reduces to convolving u_eps itself.
/// Subtracting the raw quadratic instead would shift every output by the
/// stencil's second moment and a constant input would not come back fixed.
pub fn mollify_concave_part(r: &InfConvResult, j: u32) -> Result<ScalarField> {
    let g = r.field.grid();
    let radius = 1.0 / f64::from(j.max(1));
    if j == 0 || radius < 2.0 * g.h_max() {
        return Err(Error::MollifierTooNarrow { j, two_h: 2.0 * g.h_max() });
    }
    let dim = g.dim();
    let mut half = [0usize; MAX_DIM];
    for a in 0..dim {
        let mut k = 0usize;
        while (k + 1) as f64 * g.spacing(a) < radius {
            k += 1;
        }
        half[a] = k;
    }
    // Stencil weights over the offset box, bump-shaped and normalized.
    let mut offsets: Vec<([isize; MAX_DIM], f64)> = Vec::new();
    let mut total = 0.0;
    let mut dz = [0isize; MAX_DIM];
    for a in 0..dim {
        dz[a] = -(half[a] as isize);
    }
    'outer: loop {
        let mut s2 = 0.0;
        for a in 0..dim {
            let t = dz[a] as f64 * g.spacing(a) / radius;
            s2 += t * t;
        }
        if s2 < 1.0 {
            let w = (1.0 - 1.0 / (1.0 - s2)).exp();
            offsets.push((dz, w));
            total += w;
        }
        let mut axis = dim;
        loop {
            if axis == 0 {
                break 'outer;
            }
            axis -= 1;
            if dz[axis] < half[axis] as isize {
                dz[axis] += 1;
                break;
            }
            dz[axis] = -(half[axis] as isize);
        }
    }
    for o in &mut offsets {
        o.1 /= total;
    }
    let (child, offset) = g.crop(&half[..dim], &half[..dim])?;
    let mut values = Vec::with_capacity(child.node_count());
    for cf in child.node_ids() {
        let ci = child.unflat(cf);
        let mut acc = 0.0;
        for (dz, w) in &offsets {
            let mut idx = [0usize; MAX_DIM];
            for a in 0..dim {
                idx[a] = (ci[a] as isize + offset[a] as isize + dz[a]) as usize;
            }
            acc += w * r.field.value(g.flat(&idx[..dim]));
        }
        values.push(acc);
    }
    Ok(ScalarField::from_raw(child, values))
}
