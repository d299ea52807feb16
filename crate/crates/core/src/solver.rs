//! Dirichlet solver for the homogeneous equation, by direct minimization of
//! the variable-exponent energy, plus an independent 1D oracle.
//!
//! The minimized objective is assembled per cell: the mean over the 2^d cell
//! corners of (1/p(corner)) |v(corner)|^p(corner) times the cell volume, where
//! v(corner) collects the one-sided edge differences meeting that corner. A
//! node-based central-difference energy decouples the odd and even sublattices
//! (adding a constant to every other node leaves it unchanged), so its
//! minimizer is not unique; the cell form has no such null modes, reduces to
//! the standard 5-point Laplacian at p == 2, and its 1D stationarity is exact
//! per-cell flux constancy, the same structure the oracle integrates.
//!
//! Where p(corner) < 2 the corner term is spliced below |v| = h to the C^1
//! quadratic extension (flux h^{p-2} v), so descent stays differentiable on
//! the critical set without perturbing minimizers whose gradient stays above
//! one spacing.

use crate::error::Error;
use crate::exponent::ExponentField;
use crate::grid::{Grid, ScalarField};
use crate::linalg::MAX_DIM;
use crate::Result;

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: u32 = 60;
/// Float-plateau allowance in the Armijo acceptance; keeps the energy trace
/// nonincreasing to well under 1e-12 per step.
const PLATEAU_SLACK: f64 = 1e-15;

/// Step-size policy for the descent loop. Both are safeguarded by Armijo
/// backtracking; they only choose the trial step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Barzilai-Borwein trial step from the previous iterate pair.
    Auto,
    /// Fixed trial step each iteration.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub step_rule: StepRule,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { max_iters: 50_000, tol: 1e-8, step_rule: StepRule::Auto }
    }
}

/// Outcome of a Dirichlet solve on the finest grid.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub u: ScalarField,
    /// (iteration, objective) per accepted step, starting at the initial
    /// iterate; nonincreasing.
    pub energy_trace: Vec<(usize, f64)>,
    /// Sup over interior nodes of |grad E| / node volume.
    pub final_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Energy quadrature: sum over nodes of w(x) (1/p(x)) |Du(x)|^p(x), with
/// central differences at interior nodes and one-sided at the boundary.
pub fn energy(u: &ScalarField, p: &ExponentField) -> Result<f64> {
    let g = u.grid();
    let mut acc = 0.0;
    for i in g.node_ids() {
        let du = if g.is_interior(i) { u.gradient_fd(i)? } else { u.gradient_one_sided(i) };
        let gn = du.norm();
        if gn == 0.0 {
            continue;
        }
        let px = p.eval(&g.coord(i))?;
        acc += g.quad_weight(i) * gn.powf(px) / px;
    }
    Ok(acc)
}

/// The cell-based objective and its exact gradient.
struct CellObjective {
    grid: Grid,
    p_vals: Vec<f64>,
    is_bnd: Vec<bool>,
    /// 1 / quad_weight at interior nodes, 0 at boundary nodes.
    inv_vol: Vec<f64>,
    /// h^{p-2} per node, for the spliced flux below the threshold.
    splice_flux: Vec<f64>,
    /// Constant part of the spliced corner term per node.
    splice_base: Vec<f64>,
    /// Splice threshold on |v|^2.
    h2: f64,
    /// Cell volume over 2^dim.
    corner_weight: f64,
    /// Flat offset of each of the 2^dim corners from the cell base node.
    corner_off: Vec<usize>,
    /// Per (corner, axis): flat offsets of the edge endpoints and 1/h.
    edge: Vec<(usize, usize, f64)>,
}

impl CellObjective {
    fn new(grid: Grid, p: &ExponentField) -> Result<Self> {
        let d = grid.dim();
        let n = grid.node_count();
        let h = grid.h_max();
        let h2 = h * h;
        let mut p_vals = Vec::with_capacity(n);
        let mut is_bnd = Vec::with_capacity(n);
        let mut inv_vol = Vec::with_capacity(n);
        let mut splice_flux = Vec::with_capacity(n);
        let mut splice_base = Vec::with_capacity(n);
        for i in grid.node_ids() {
            let px = p.eval(&grid.coord(i))?;
            p_vals.push(px);
            let bnd = grid.is_boundary(i);
            is_bnd.push(bnd);
            inv_vol.push(if bnd { 0.0 } else { 1.0 / grid.quad_weight(i) });
            // Continuity at |v|^2 = h2: base + (f/2) h2 = h^p / p.
            let f = if px < 2.0 { h.powf(px - 2.0) } else { 0.0 };
            splice_flux.push(f);
            splice_base.push(if px < 2.0 { h.powf(px) / px - 0.5 * f * h2 } else { 0.0 });
        }
        let mut stride = [0usize; MAX_DIM];
        for a in 0..d {
            let mut unit = [0usize; MAX_DIM];
            unit[a] = 1;
            stride[a] = grid.flat(&unit[..d]);
        }
        let corners = 1usize << d;
        let mut corner_off = Vec::with_capacity(corners);
        for m in 0..corners {
            let mut off = 0;
            for a in 0..d {
                if m & (1 << a) != 0 {
                    off += stride[a];
                }
            }
            corner_off.push(off);
        }
        let mut edge = Vec::with_capacity(corners * d);
        for m in 0..corners {
            for a in 0..d {
                let m0 = m & !(1usize << a);
                let m1 = m | (1usize << a);
                edge.push((corner_off[m0], corner_off[m1], 1.0 / grid.spacing(a)));
            }
        }
        let mut vol = 1.0;
        for a in 0..d {
            vol *= grid.spacing(a);
        }
        let corner_weight = vol / corners as f64;
        Ok(CellObjective {
            grid,
            p_vals,
            is_bnd,
            inv_vol,
            splice_flux,
            splice_base,
            h2,
            corner_weight,
            corner_off,
            edge,
        })
    }

    fn cell_bases(&self) -> impl Iterator<Item = usize> + '_ {
        let d = self.grid.dim();
        self.grid.node_ids().filter(move |&i| {
            let idx = self.grid.unflat(i);
            (0..d).all(|a| idx[a] < self.grid.n_cells(a))
        })
    }

    fn energy(&self, u: &[f64]) -> f64 {
        let d = self.grid.dim();
        let corners = self.corner_off.len();
        let mut acc = 0.0;
        for base in self.cell_bases() {
            let mut cell = 0.0;
            for m in 0..corners {
                let mut s = 0.0;
                for (o0, o1, inv_h) in &self.edge[m * d..(m + 1) * d] {
                    let diff = (u[base + o1] - u[base + o0]) * inv_h;
                    s += diff * diff;
                }
                let node = base + self.corner_off[m];
                let px = self.p_vals[node];
                cell += if px < 2.0 && s < self.h2 {
                    self.splice_base[node] + 0.5 * self.splice_flux[node] * s
                } else if px == 2.0 {
                    0.5 * s
                } else {
                    s.powf(0.5 * px) / px
                };
            }
            acc += self.corner_weight * cell;
        }
        acc
    }

    fn gradient(&self, u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let d = self.grid.dim();
        let corners = self.corner_off.len();
        for base in self.cell_bases() {
            for m in 0..corners {
                let edges = &self.edge[m * d..(m + 1) * d];
                let mut diffs = [0.0f64; MAX_DIM];
                let mut s = 0.0;
                for (a, (o0, o1, inv_h)) in edges.iter().enumerate() {
                    let diff = (u[base + o1] - u[base + o0]) * inv_h;
                    diffs[a] = diff;
                    s += diff * diff;
                }
                let node = base + self.corner_off[m];
                let px = self.p_vals[node];
                let coef = if px < 2.0 && s < self.h2 {
                    self.splice_flux[node]
                } else if px == 2.0 {
                    1.0
                } else if s == 0.0 {
                    0.0
                } else {
                    s.powf(0.5 * px - 1.0)
                };
                let w = self.corner_weight * coef;
                for (a, (o0, o1, inv_h)) in edges.iter().enumerate() {
                    let dd = w * diffs[a] * inv_h;
                    out[base + o1] += dd;
                    out[base + o0] -= dd;
                }
            }
        }
        for (i, bnd) in self.is_bnd.iter().enumerate() {
            if *bnd {
                out[i] = 0.0;
            }
        }
    }

    fn residual_sup(&self, grad: &[f64]) -> f64 {
        grad.iter().zip(&self.inv_vol).map(|(g, iv)| (g * iv).abs()).fold(0.0, f64::max)
    }
}

/// Armijo-safeguarded descent on the cell objective. Returns the final
/// density-normalized residual and the accepted-step count; pushes
/// (iteration, objective) pairs when a trace is supplied.
fn descend(
    obj: &CellObjective,
    u: &mut Vec<f64>,
    opts: &SolveOptions,
    mut trace: Option<&mut Vec<(usize, f64)>>,
) -> (f64, usize) {
    let n = u.len();
    let mut g = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut u_trial = vec![0.0; n];
    obj.gradient(u, &mut g);
    let mut e = obj.energy(u);
    if let Some(t) = trace.as_deref_mut() {
        t.push((0, e));
    }
    let mut res = obj.residual_sup(&g);
    let mut iters = 0usize;
    let mut bb_step: Option<f64> = None;
    while res > opts.tol && iters < opts.max_iters {
        let trial = match opts.step_rule {
            StepRule::Fixed(a) => a,
            StepRule::Auto => bb_step.unwrap_or(1.0),
        };
        let gg: f64 = g.iter().map(|v| v * v).sum();
        if gg == 0.0 {
            break;
        }
        let mut alpha = trial;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..n {
                u_trial[i] = u[i] - alpha * g[i];
            }
            let e_t = obj.energy(&u_trial);
            if e_t <= e - ARMIJO_C1 * alpha * gg + PLATEAU_SLACK * (1.0 + e.abs()) {
                accepted = Some(e_t);
                break;
            }
            alpha *= 0.5;
        }
        let Some(e_t) = accepted else { break };
        std::mem::swap(u, &mut u_trial);
        e = e_t;
        obj.gradient(u, &mut g_new);
        let cross: f64 = g.iter().zip(&g_new).map(|(a, b)| a * b).sum();
        // BB1 on s = -alpha g_old, y = g_new - g_old.
        let denom = gg - cross;
        bb_step = Some(if denom > 0.0 {
            (alpha * gg / denom).clamp(1e-16, 1e16)
        } else {
            (alpha * 2.0).clamp(1e-16, 1e16)
        });
        std::mem::swap(&mut g, &mut g_new);
        iters += 1;
        if let Some(t) = trace.as_deref_mut() {
            t.push((iters, e));
        }
        res = obj.residual_sup(&g);
    }
    (res, iters)
}

fn same_box(a: &Grid, b: &Grid) -> bool {
    a.dim() == b.dim()
        && (0..a.dim()).all(|ax| {
            a.lo(ax) == b.lo(ax) && a.hi(ax) == b.hi(ax) && a.n_cells(ax) == b.n_cells(ax)
        })
}

/// Halved grid, when every axis has an even cell count of at least 8.
fn coarsen(g: &Grid) -> Option<Grid> {
    let mut cells = Vec::with_capacity(g.dim());
    for a in 0..g.dim() {
        let n = g.n_cells(a);
        if n % 2 != 0 || n < 8 {
            return None;
        }
        cells.push(n / 2);
    }
    Grid::new(&g.bounds(), &cells).ok()
}

/// Samples a fine-grid field at the nodes of a nested coarser grid.
fn inject(values: &[f64], fine: &Grid, coarse: &Grid) -> Vec<f64> {
    let ratio: Vec<usize> = (0..fine.dim()).map(|a| fine.n_cells(a) / coarse.n_cells(a)).collect();
    coarse
        .node_ids()
        .map(|i| {
            let ci = coarse.unflat(i);
            let mut fi = [0usize; MAX_DIM];
            for a in 0..fine.dim() {
                fi[a] = ci[a] * ratio[a];
            }
            values[fine.flat(&fi[..fine.dim()])]
        })
        .collect()
}

/// Multilinear prolongation from a grid to its 2x refinement.
fn prolong(values: &[f64], coarse: &Grid, fine: &Grid) -> Vec<f64> {
    let d = fine.dim();
    let mut out = Vec::with_capacity(fine.node_count());
    for i in fine.node_ids() {
        let fi = fine.unflat(i);
        // Per axis: the coarse index, and whether the node sits mid-edge.
        let mut base = [0usize; MAX_DIM];
        let mut odd = [false; MAX_DIM];
        for a in 0..d {
            base[a] = fi[a] / 2;
            odd[a] = fi[a] % 2 == 1;
        }
        let mut acc = 0.0;
        let mut count = 0u32;
        let combos = 1usize << d;
        for m in 0..combos {
            let mut ok = true;
            let mut ci = [0usize; MAX_DIM];
            for a in 0..d {
                let up = m & (1 << a) != 0;
                if up && !odd[a] {
                    ok = false;
                    break;
                }
                ci[a] = base[a] + up as usize;
            }
            if ok {
                acc += values[coarse.flat(&ci[..d])];
                count += 1;
            }
        }
        out.push(acc / count as f64);
    }
    out
}

/// Minimizes the energy over interior nodes at fixed boundary values.
///
/// Only the boundary nodes of `boundary` are read. The initial iterate is the
/// discrete-harmonic (p = 2) extension computed at the coarsest level of a
/// nested-halving cascade, carried up by multilinear prolongation with a
/// descent pass per level; the report traces the finest level only.
pub fn solve_dirichlet(
    p: &ExponentField,
    boundary: &ScalarField,
    g: &Grid,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if !same_box(boundary.grid(), g) {
        return Err(Error::Config("boundary field must live on the solve grid".into()));
    }
    if !(opts.tol > 0.0) || opts.max_iters == 0 {
        return Err(Error::Config("solve needs tol > 0 and max_iters >= 1".into()));
    }
    let (p_minus, _, _) = p.bounds();
    if !(p_minus > 1.0) {
        return Err(Error::ExponentTooSmall { node: 0, value: p_minus });
    }
    let mut levels = vec![g.clone()];
    while let Some(c) = coarsen(levels.last().expect("nonempty")) {
        levels.push(c);
    }
    let n_levels = levels.len();
    let mut u: Vec<f64> = Vec::new();
    let mut trace = Vec::new();
    let mut final_residual = f64::INFINITY;
    let mut iterations = 0;
    for li in (0..n_levels).rev() {
        let level = &levels[li];
        let b_level = inject(boundary.values(), g, level);
        if li == n_levels - 1 {
            let mut sum = 0.0;
            let mut count = 0usize;
            for i in level.node_ids().filter(|&i| level.is_boundary(i)) {
                sum += b_level[i];
                count += 1;
            }
            u = vec![sum / count as f64; level.node_count()];
            for i in level.node_ids().filter(|&i| level.is_boundary(i)) {
                u[i] = b_level[i];
            }
            let harmonic = CellObjective::new(level.clone(), &ExponentField::constant(2.0)?)?;
            descend(&harmonic, &mut u, opts, None);
        } else {
            u = prolong(&u, &levels[li + 1], level);
            for i in level.node_ids().filter(|&i| level.is_boundary(i)) {
                u[i] = b_level[i];
            }
        }
        let obj = CellObjective::new(level.clone(), p)?;
        if li == 0 {
            let (res, iters) = descend(&obj, &mut u, opts, Some(&mut trace));
            final_residual = res;
            iterations = iters;
        } else {
            descend(&obj, &mut u, opts, None);
        }
    }
    let converged = final_residual <= opts.tol;
    Ok(SolveReport {
        u: ScalarField::new(g.clone(), u)?,
        energy_trace: trace,
        final_residual,
        iterations,
        converged,
    })
}

/// Exact 1D solution by flux constancy: finds the constant c with
/// ua + int_a^b sign(c)|c|^{1/(p(t)-1)} dt = ub by bisection and returns its
/// cumulative integral sampled on an n-cell grid, per-cell Simpson throughout.
pub fn solve_1d_oracle(
    p: &ExponentField,
    a: f64,
    b: f64,
    ua: f64,
    ub: f64,
    n: usize,
) -> Result<ScalarField> {
    if !ua.is_finite() || !ub.is_finite() {
        return Err(Error::Config("oracle boundary values must be finite".into()));
    }
    let grid = Grid::new(&[[a, b]], &[n])?;
    if ua == ub {
        return ScalarField::constant(grid, ua);
    }
    let h = grid.spacing(0);
    // Exponents 1/(p(t)-1) at the nodes and cell midpoints.
    let eval_e = |t: f64| -> Result<f64> {
        let mut x = crate::linalg::Vector::zero(1);
        x.set(0, t);
        Ok(1.0 / (p.eval(&x)? - 1.0))
    };
    let mut e_node = Vec::with_capacity(n + 1);
    let mut e_mid = Vec::with_capacity(n);
    for k in 0..=n {
        e_node.push(eval_e(a + k as f64 * h)?);
    }
    for k in 0..n {
        e_mid.push(eval_e(a + (k as f64 + 0.5) * h)?);
    }
    let target = (ub - ua).abs();
    let total = |m: f64| -> f64 {
        let mut acc = 0.0;
        for k in 0..n {
            acc += (h / 6.0)
                * (m.powf(e_node[k]) + 4.0 * m.powf(e_mid[k]) + m.powf(e_node[k + 1]));
        }
        acc
    };
    let mut hi = 1.0f64;
    let mut guard = 0;
    while total(hi) < target {
        hi *= 2.0;
        guard += 1;
        if guard > 2100 {
            return Err(Error::Numeric("flux bisection bracket failed to expand".into()));
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..128 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let m = 0.5 * (lo + hi);
    let sign = if ub > ua { 1.0 } else { -1.0 };
    let mut values = Vec::with_capacity(n + 1);
    let mut acc = ua;
    values.push(acc);
    for k in 0..n {
        acc += sign
            * (h / 6.0)
            * (m.powf(e_node[k]) + 4.0 * m.powf(e_mid[k]) + m.powf(e_node[k + 1]));
        values.push(acc);
    }
    ScalarField::new(grid, values)
}
