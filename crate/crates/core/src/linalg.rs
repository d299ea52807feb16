//! Minimal fixed-size linear algebra for dimensions 1 through 3.
//!
//! Vectors and symmetric matrices are stored as padded 3-component arrays with
//! an explicit dimension; unused components stay zero, so dot products and
//! traces can run over all three slots. Eigenvalues are the one place the
//! active dimension matters (zero padding would inject spurious zeros), so
//! `SymMatrix::max_eigenvalue` restricts to the leading block.

/// Highest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Point or direction in R^dim, zero-padded to three components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vector {
    data: [f64; MAX_DIM],
    dim: usize,
}

impl Vector {
    pub fn zero(dim: usize) -> Self {
        Vector { data: [0.0; MAX_DIM], dim }
    }

    pub fn from_slice(dim: usize, v: &[f64]) -> Self {
        let mut data = [0.0; MAX_DIM];
        data[..dim].copy_from_slice(&v[..dim]);
        Vector { data, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, axis: usize) -> f64 {
        self.data[axis]
    }

    pub fn set(&mut self, axis: usize, v: f64) {
        debug_assert!(axis < self.dim);
        self.data[axis] = v;
    }

    pub fn components(&self) -> &[f64] {
        &self.data[..self.dim]
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Vector {
        let mut out = *self;
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    pub fn add(&self, other: &Vector) -> Vector {
        let mut out = *self;
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        let mut out = *self;
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a -= b;
        }
        out
    }

    /// Unit vector in the same direction; `None` when the norm vanishes.
    pub fn normalized(&self) -> Option<Vector> {
        let n = self.norm();
        if n == 0.0 {
            None
        } else {
            Some(self.scale(1.0 / n))
        }
    }
}

/// Symmetric matrix on R^dim, zero-padded like [`Vector`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMatrix {
    data: [[f64; MAX_DIM]; MAX_DIM],
    dim: usize,
}

impl SymMatrix {
    pub fn zero(dim: usize) -> Self {
        SymMatrix { data: [[0.0; MAX_DIM]; MAX_DIM], dim }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zero(dim);
        for i in 0..dim {
            m.data[i][i] = 1.0;
        }
        m
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut m = Self::zero(dim);
        for i in 0..dim {
            m.data[i][i] = s;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i][j]
    }

    /// Sets the (i, j) and (j, i) entries.
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.dim && j < self.dim);
        self.data[i][j] = v;
        self.data[j][i] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i][i]).sum()
    }

    /// v^T M v.
    pub fn quad(&self, v: &Vector) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += v.get(i) * self.data[i][j] * v.get(j);
            }
        }
        acc
    }

    /// M v.
    pub fn apply(&self, v: &Vector) -> Vector {
        let mut out = Vector::zero(self.dim);
        for i in 0..self.dim {
            let mut acc = 0.0;
            for j in 0..self.dim {
                acc += self.data[i][j] * v.get(j);
            }
            out.set(i, acc);
        }
        out
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        let mut out = *self;
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                out.data[i][j] += other.data[i][j];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        let mut out = *self;
        for row in &mut out.data {
            for v in row {
                *v *= s;
            }
        }
        out
    }

    /// Rank-one update M + s * d d^T.
    pub fn add_outer(&self, d: &Vector, s: f64) -> SymMatrix {
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.data[i][j] += s * d.get(i) * d.get(j);
            }
        }
        out
    }

    /// Largest eigenvalue of the active dim x dim block.
    pub fn max_eigenvalue(&self) -> f64 {
        match self.dim {
            1 => self.data[0][0],
            2 => {
                let (a, b, c) = (self.data[0][0], self.data[0][1], self.data[1][1]);
                let mean = 0.5 * (a + c);
                let disc = (0.5 * (a - c)).hypot(b);
                mean + disc
            }
            _ => {
                let m = nalgebra::DMatrix::from_fn(self.dim, self.dim, |i, j| self.data[i][j]);
                m.symmetric_eigenvalues()
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn padded_dot_ignores_inactive_components() {
        let a = Vector::from_slice(2, &[3.0, 4.0]);
        let b = Vector::from_slice(2, &[1.0, 2.0]);
        assert_eq!(a.dot(&b), 11.0);
        assert_eq!(a.norm(), 5.0);
    }

    #[test]
    fn eigenvalues_per_dimension() {
        let mut m1 = SymMatrix::zero(1);
        m1.set_sym(0, 0, -5.0);
        assert_eq!(m1.max_eigenvalue(), -5.0);

        let mut m2 = SymMatrix::zero(2);
        m2.set_sym(0, 0, 2.0);
        m2.set_sym(1, 1, 2.0);
        m2.set_sym(0, 1, 1.0);
        assert_relative_eq!(m2.max_eigenvalue(), 3.0, max_relative = 1e-12);

        let mut m3 = SymMatrix::identity(3);
        m3.set_sym(0, 2, 0.5);
        // Eigenvalues of I + 0.5*(e1 e3^T + e3 e1^T): 1 and 1 +- 0.5.
        assert_relative_eq!(m3.max_eigenvalue(), 1.5, max_relative = 1e-12);
    }

    #[test]
    fn quad_form_matches_apply() {
        let mut m = SymMatrix::zero(3);
        m.set_sym(0, 0, 2.0);
        m.set_sym(1, 1, -1.0);
        m.set_sym(2, 2, 0.5);
        m.set_sym(0, 1, 0.25);
        let v = Vector::from_slice(3, &[1.0, 2.0, -1.0]);
        assert_relative_eq!(m.quad(&v), v.dot(&m.apply(&v)), max_relative = 1e-14);
    }
}
