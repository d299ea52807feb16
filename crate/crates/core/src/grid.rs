//! Rectangular grids, node-sampled scalar fields and finite-difference calculus.
//!
//! A [`Grid`] covers a closed box in 1 to 3 dimensions with uniform spacing per
//! axis. Nodes are addressed by a flat index in row-major order (last axis
//! fastest). Fields sample one value per node; the topological boundary is
//! derived from the index structure, so every node can be queried with
//! [`Grid::is_boundary`] without storing a mask.
//!
//! Distances between nodes are always computed from index deltas times the
//! spacing, never from coordinate subtraction. Subgrids produced by
//! [`Grid::crop`] keep the parent spacing bitwise, so windowed scans and
//! cropped fields stay node-exact under lattice translations.

use crate::error::Error;
use crate::linalg::{SymMatrix, Vector, MAX_DIM};
use crate::Result;

const MAX_NODES: u128 = 100_000_000;

/// Uniform rectangular grid, 1 to 3 axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    lo: [f64; MAX_DIM],
    h: [f64; MAX_DIM],
    n_cells: [usize; MAX_DIM],
    /// Strides of the row-major flat index (last axis fastest).
    strides: [usize; MAX_DIM],
    node_count: usize,
}

impl Grid {
    /// Builds a grid from per-axis bounds and cell counts.
    ///
    /// Each axis needs at least 4 cells and a nonempty interval; the total
    /// node count must stay below 10^8.
    pub fn new(bounds: &[[f64; 2]], n_cells: &[usize]) -> Result<Self> {
        let dim = bounds.len();
        if dim == 0 || dim > MAX_DIM || n_cells.len() != dim {
            return Err(Error::BadDimension(if n_cells.len() != dim { n_cells.len() } else { dim }));
        }
        let mut lo = [0.0; MAX_DIM];
        let mut h = [0.0; MAX_DIM];
        let mut cells = [0usize; MAX_DIM];
        let mut total: u128 = 1;
        for axis in 0..dim {
            let [a, b] = bounds[axis];
            if !a.is_finite() || !b.is_finite() || b <= a {
                return Err(Error::EmptyInterval { axis, lo: a, hi: b });
            }
            let n = n_cells[axis];
            if n < 4 {
                return Err(Error::TooCoarse { axis, n_cells: n });
            }
            lo[axis] = a;
            h[axis] = (b - a) / n as f64;
            cells[axis] = n;
            total *= (n + 1) as u128;
        }
        if total >= MAX_NODES {
            return Err(Error::TooManyNodes(total));
        }
        Ok(Self::assemble(dim, lo, h, cells))
    }

    /// Internal constructor that trusts the spacing; used by `crop` so child
    /// grids inherit `h` bitwise.
    fn assemble(dim: usize, lo: [f64; MAX_DIM], h: [f64; MAX_DIM], n_cells: [usize; MAX_DIM]) -> Self {
        let mut strides = [0usize; MAX_DIM];
        let mut s = 1usize;
        for axis in (0..dim).rev() {
            strides[axis] = s;
            s *= n_cells[axis] + 1;
        }
        Grid { dim, lo, h, n_cells, strides, node_count: s }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_cells(&self, axis: usize) -> usize {
        self.n_cells[axis]
    }

    /// Node count along one axis (cells + 1).
    pub fn nodes(&self, axis: usize) -> usize {
        self.n_cells[axis] + 1
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    /// Largest spacing over all axes; the `h` in discretization slack terms.
    pub fn h_max(&self) -> f64 {
        self.h[..self.dim].iter().cloned().fold(0.0, f64::max)
    }

    pub fn lo(&self, axis: usize) -> f64 {
        self.lo[axis]
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.lo[axis] + self.n_cells[axis] as f64 * self.h[axis]
    }

    pub fn bounds(&self) -> Vec<[f64; 2]> {
        (0..self.dim).map(|a| [self.lo(a), self.hi(a)]).collect()
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for axis in 0..self.dim {
            debug_assert!(idx[axis] <= self.n_cells[axis]);
            f += idx[axis] * self.strides[axis];
        }
        f
    }

    pub fn unflat(&self, flat: usize) -> [usize; MAX_DIM] {
        debug_assert!(flat < self.node_count);
        let mut idx = [0usize; MAX_DIM];
        let mut rest = flat;
        for axis in 0..self.dim {
            idx[axis] = rest / self.strides[axis];
            rest %= self.strides[axis];
        }
        idx
    }

    pub fn coord(&self, flat: usize) -> Vector {
        let idx = self.unflat(flat);
        let mut x = Vector::zero(self.dim);
        for axis in 0..self.dim {
            x.set(axis, self.lo[axis] + idx[axis] as f64 * self.h[axis]);
        }
        x
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        let idx = self.unflat(flat);
        (0..self.dim).any(|a| idx[a] == 0 || idx[a] == self.n_cells[a])
    }

    pub fn is_interior(&self, flat: usize) -> bool {
        !self.is_boundary(flat)
    }

    /// Flat index of the node one `step` away along `axis`, if it exists.
    pub fn neighbor(&self, flat: usize, axis: usize, step: isize) -> Option<usize> {
        let idx = self.unflat(flat);
        let i = idx[axis] as isize + step;
        if i < 0 || i > self.n_cells[axis] as isize {
            None
        } else {
            Some((flat as isize + step * self.strides[axis] as isize) as usize)
        }
    }

    /// Trapezoid quadrature weight: product over axes of h, halved at interval
    /// endpoints.
    pub fn quad_weight(&self, flat: usize) -> f64 {
        let idx = self.unflat(flat);
        let mut w = 1.0;
        for axis in 0..self.dim {
            let mut wa = self.h[axis];
            if idx[axis] == 0 || idx[axis] == self.n_cells[axis] {
                wa *= 0.5;
            }
            w *= wa;
        }
        w
    }

    /// Distance from a node to the topological boundary of the box.
    pub fn boundary_distance(&self, flat: usize) -> f64 {
        let idx = self.unflat(flat);
        let mut d = f64::INFINITY;
        for axis in 0..self.dim {
            let left = idx[axis] as f64 * self.h[axis];
            let right = (self.n_cells[axis] - idx[axis]) as f64 * self.h[axis];
            d = d.min(left).min(right);
        }
        d
    }

    pub fn node_ids(&self) -> impl Iterator<Item = usize> {
        0..self.node_count
    }

    /// Euclidean distance between two nodes, from index deltas.
    pub fn node_distance(&self, a: usize, b: usize) -> f64 {
        let ia = self.unflat(a);
        let ib = self.unflat(b);
        let mut acc = 0.0;
        for axis in 0..self.dim {
            let d = (ia[axis] as f64 - ib[axis] as f64) * self.h[axis];
            acc += d * d;
        }
        acc.sqrt()
    }

    /// Subgrid dropping `margin_lo[a]` nodes from the low side and
    /// `margin_hi[a]` from the high side of each axis. The child keeps the
    /// parent spacing bitwise; it must still have at least 4 cells per axis.
    ///
    /// Returns the child grid and the index offset of its origin in the parent.
    pub fn crop(&self, margin_lo: &[usize], margin_hi: &[usize]) -> Result<(Grid, [usize; MAX_DIM])> {
        let mut lo = [0.0; MAX_DIM];
        let mut cells = [0usize; MAX_DIM];
        let mut offset = [0usize; MAX_DIM];
        for axis in 0..self.dim {
            let taken = margin_lo[axis] + margin_hi[axis];
            if taken + 4 > self.n_cells[axis] {
                return Err(Error::TooCoarse {
                    axis,
                    n_cells: self.n_cells[axis].saturating_sub(taken),
                });
            }
            offset[axis] = margin_lo[axis];
            lo[axis] = self.lo[axis] + margin_lo[axis] as f64 * self.h[axis];
            cells[axis] = self.n_cells[axis] - taken;
        }
        Ok((Self::assemble(self.dim, lo, self.h, cells), offset))
    }

    /// Crops to the nodes strictly farther than `dist` from the boundary.
    pub fn crop_by_distance(&self, dist: f64) -> Result<(Grid, [usize; MAX_DIM])> {
        let mut mlo = [0usize; MAX_DIM];
        for axis in 0..self.dim {
            // Smallest m with m*h > dist.
            let mut m = (dist / self.h[axis]).floor() as usize;
            while (m as f64) * self.h[axis] <= dist {
                m += 1;
            }
            mlo[axis] = m;
        }
        self.crop(&mlo[..self.dim], &mlo[..self.dim])
            .map_err(|_| Error::EmptyEffectiveDomain { r_eps: dist })
    }

    /// Maps a child-grid flat index back to the parent flat index.
    pub fn parent_flat(&self, child: &Grid, offset: &[usize; MAX_DIM], child_flat: usize) -> usize {
        let ci = child.unflat(child_flat);
        let mut pi = [0usize; MAX_DIM];
        for axis in 0..self.dim {
            pi[axis] = ci[axis] + offset[axis];
        }
        self.flat(&pi)
    }
}

/// Scalar field sampled at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    /// Wraps raw node values; every value must be finite.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::LengthMismatch { got: values.len(), want: grid.node_count() });
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node });
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Grid, c: f64) -> Result<Self> {
        let n = grid.node_count();
        Self::new(grid, vec![c; n])
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&Vector) -> f64) -> Result<Self> {
        let values: Vec<f64> = grid.node_ids().map(|i| f(&grid.coord(i))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn value(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Oscillation sup u - inf u over the grid.
    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }

    /// Centered-difference gradient; errors on boundary nodes where the
    /// stencil would leave the grid.
    pub fn gradient_fd(&self, flat: usize) -> Result<Vector> {
        let g = &self.grid;
        if g.is_boundary(flat) {
            return Err(Error::BoundaryNode { node: flat });
        }
        let mut out = Vector::zero(g.dim());
        for axis in 0..g.dim() {
            let p = g.neighbor(flat, axis, 1).unwrap();
            let m = g.neighbor(flat, axis, -1).unwrap();
            out.set(axis, (self.values[p] - self.values[m]) / (2.0 * g.spacing(axis)));
        }
        Ok(out)
    }

    /// Second-order one-sided gradient, valid at every node. Interior nodes
    /// use centered differences; boundary nodes the 3-point one-sided stencil.
    pub fn gradient_one_sided(&self, flat: usize) -> Vector {
        let g = &self.grid;
        let idx = g.unflat(flat);
        let mut out = Vector::zero(g.dim());
        for axis in 0..g.dim() {
            let h = g.spacing(axis);
            let d = if idx[axis] == 0 {
                let a = g.neighbor(flat, axis, 1).unwrap();
                let b = g.neighbor(flat, axis, 2).unwrap();
                (-3.0 * self.values[flat] + 4.0 * self.values[a] - self.values[b]) / (2.0 * h)
            } else if idx[axis] == g.n_cells(axis) {
                let a = g.neighbor(flat, axis, -1).unwrap();
                let b = g.neighbor(flat, axis, -2).unwrap();
                (3.0 * self.values[flat] - 4.0 * self.values[a] + self.values[b]) / (2.0 * h)
            } else {
                let p = g.neighbor(flat, axis, 1).unwrap();
                let m = g.neighbor(flat, axis, -1).unwrap();
                (self.values[p] - self.values[m]) / (2.0 * h)
            };
            out.set(axis, d);
        }
        out
    }

    /// Symmetrized finite-difference Hessian; interior nodes only.
    pub fn hessian_fd(&self, flat: usize) -> Result<SymMatrix> {
        let g = &self.grid;
        if g.is_boundary(flat) {
            return Err(Error::BoundaryNode { node: flat });
        }
        let dim = g.dim();
        let mut hess = SymMatrix::zero(dim);
        for a in 0..dim {
            let ha = g.spacing(a);
            let p = g.neighbor(flat, a, 1).unwrap();
            let m = g.neighbor(flat, a, -1).unwrap();
            hess.set_sym(
                a,
                a,
                (self.values[p] - 2.0 * self.values[flat] + self.values[m]) / (ha * ha),
            );
            for b in (a + 1)..dim {
                let hb = g.spacing(b);
                let pp = g.neighbor(p, b, 1).unwrap();
                let pm = g.neighbor(p, b, -1).unwrap();
                let mp = g.neighbor(m, b, 1).unwrap();
                let mm = g.neighbor(m, b, -1).unwrap();
                let mixed = (self.values[pp] - self.values[pm] - self.values[mp]
                    + self.values[mm])
                    / (4.0 * ha * hb);
                hess.set_sym(a, b, mixed);
            }
        }
        Ok(hess)
    }

    /// Trapezoid quadrature of the field over the box.
    pub fn integrate(&self) -> f64 {
        self.grid
            .node_ids()
            .map(|i| self.grid.quad_weight(i) * self.values[i])
            .sum()
    }

    /// Restricts the field to a cropped subgrid.
    pub fn restrict(&self, child: &Grid, offset: &[usize; MAX_DIM]) -> ScalarField {
        let values: Vec<f64> = child
            .node_ids()
            .map(|cf| self.values[self.grid.parent_flat(child, offset, cf)])
            .collect();
        ScalarField { grid: child.clone(), values }
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> ScalarField {
        debug_assert_eq!(values.len(), grid.node_count());
        ScalarField { grid, values }
    }
}

/// Smooth compactly supported bump, the test function of weak formulations:
/// `height * exp(1 - 1/(1 - (|x-c|/r)^2))` inside the ball of radius `r`,
/// zero outside. Value and gradient are analytic.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    center: Vector,
    radius: f64,
    height: f64,
}

impl TestFunction {
    /// Builds a bump and checks its support ball stays strictly inside the
    /// grid's box.
    pub fn new(grid: &Grid, center: Vector, radius: f64, height: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::BadBumpRadius(radius));
        }
        for axis in 0..grid.dim() {
            let c = center.get(axis);
            if c - radius <= grid.lo(axis) || c + radius >= grid.hi(axis) {
                return Err(Error::BumpTouchesBoundary { axis });
            }
        }
        Ok(TestFunction { center, radius, height })
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn value(&self, x: &Vector) -> f64 {
        let s2 = self.s_squared(x);
        if s2 >= 1.0 {
            0.0
        } else {
            self.height * (1.0 - 1.0 / (1.0 - s2)).exp()
        }
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        let s2 = self.s_squared(x);
        if s2 >= 1.0 {
            return Vector::zero(x.dim());
        }
        let v = self.height * (1.0 - 1.0 / (1.0 - s2)).exp();
        let denom = 1.0 - s2;
        let factor = -v / (denom * denom) * 2.0 / (self.radius * self.radius);
        x.sub(&self.center).scale(factor)
    }

    pub fn sample(&self, grid: &Grid) -> ScalarField {
        ScalarField::from_raw(
            grid.clone(),
            grid.node_ids().map(|i| self.value(&grid.coord(i))).collect(),
        )
    }

    /// Nodes where the bump is nonzero.
    pub fn support_nodes(&self, grid: &Grid) -> Vec<usize> {
        grid.node_ids()
            .filter(|&i| self.value(&grid.coord(i)) > 0.0)
            .collect()
    }

    fn s_squared(&self, x: &Vector) -> f64 {
        let d = x.sub(&self.center);
        d.dot(&d) / (self.radius * self.radius)
    }
}
