//! Cell-centered radial mesh on the ball, with a discrete calculus chosen so
//! that summation by parts is exact: `inner(lap u, v) = -grad_inner(u, v)`
//! to rounding error, for any pair of fields. All quadratic energy
//! functionals downstream inherit their sign structure from this identity.
//!
//! Nodes sit at cell midpoints `r_i = (i + 1/2) h`, faces at `rho_i = i h`.
//! The zero Dirichlet condition at `r = R` enters through a reflected ghost
//! value, giving the boundary face gradient `-2 U_{N-1} / h`.

use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::problem::KProfile;

/// Nodal values of a radial function, one per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialField(pub Vec<f64>);

impl RadialField {
    pub fn zeros(n: usize) -> Self {
        RadialField(vec![0.0; n])
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> f64) -> Self {
        RadialField((0..n).map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, a: f64) -> Self {
        RadialField(self.0.iter().map(|x| a * x).collect())
    }

    pub fn scale(&mut self, a: f64) {
        for x in &mut self.0 {
            *x *= a;
        }
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &RadialField) {
        assert_eq!(self.len(), x.len(), "field length mismatch in axpy");
        for (s, v) in self.0.iter_mut().zip(&x.0) {
            *s += a * v;
        }
    }
}

impl Index<usize> for RadialField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for RadialField {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Uniform cell-centered mesh on `[0, R]` in dimension `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialMesh {
    pub dim: u32,
    pub cells: usize,
    pub radius: f64,
    pub h: f64,
    /// Cell midpoints `r_i = (i + 1/2) h`, length `cells`.
    pub nodes: Vec<f64>,
    /// `rho_i^(n-1)` at faces `rho_i = i h`, length `cells + 1`.
    pub face_areas: Vec<f64>,
    /// Quadrature weights `omega r_i^(n-1) h`, length `cells`.
    pub weights: Vec<f64>,
    /// Surface area of the unit sphere in dimension `dim`.
    pub omega: f64,
}

/// Surface area of the unit sphere `S^(n-1)` in `R^n`.
pub fn unit_sphere_area(dim: u32) -> f64 {
    let m = (dim / 2) as usize;
    if dim.is_multiple_of(2) {
        // 2 pi^m / (m-1)!
        2.0 * std::f64::consts::PI.powi(m as i32) / factorial(m - 1)
    } else {
        // 2 * 4^m * m! * pi^m / (2m)!
        2.0 * 4.0f64.powi(m as i32) * factorial(m) * std::f64::consts::PI.powi(m as i32)
            / factorial(2 * m)
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

impl RadialMesh {
    pub fn new(dim: u32, cells: usize, radius: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::MeshParam(format!("dimension {dim} must be at least 2")));
        }
        if cells < 4 {
            return Err(Error::MeshParam(format!("cell count {cells} must be at least 4")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::MeshParam(format!("radius {radius} must be positive")));
        }
        let h = radius / cells as f64;
        let omega = unit_sphere_area(dim);
        let e = (dim - 1) as i32;
        let nodes: Vec<f64> = (0..cells).map(|i| (i as f64 + 0.5) * h).collect();
        let face_areas: Vec<f64> = (0..=cells).map(|i| (i as f64 * h).powi(e)).collect();
        let weights: Vec<f64> = nodes.iter().map(|&r| omega * r.powi(e) * h).collect();
        Ok(RadialMesh { dim, cells, radius, h, nodes, face_areas, weights, omega })
    }

    /// Ball volume `omega R^n / n`.
    pub fn volume(&self) -> f64 {
        self.omega * self.radius.powi(self.dim as i32) / self.dim as f64
    }

    pub fn field_from_fn(&self, mut f: impl FnMut(f64) -> f64) -> RadialField {
        RadialField(self.nodes.iter().map(|&r| f(r)).collect())
    }

    fn check_len(&self, u: &RadialField, what: &str) {
        assert_eq!(
            u.len(),
            self.cells,
            "{what}: field length {} does not match cell count {}",
            u.len(),
            self.cells
        );
    }

    /// Face gradients of `u`, length `cells + 1`. `g_0 = 0` by radial
    /// symmetry; `g_N` uses the reflected ghost value `-U_{N-1}`.
    pub fn face_gradients(&self, u: &RadialField) -> Vec<f64> {
        self.check_len(u, "face_gradients");
        let n = self.cells;
        let mut g = vec![0.0; n + 1];
        for i in 1..n {
            g[i] = (u[i] - u[i - 1]) / self.h;
        }
        g[n] = -2.0 * u[n - 1] / self.h;
        g
    }

    /// Discrete Laplacian from precomputed face gradients.
    pub fn laplacian_from_grads(&self, g: &[f64]) -> RadialField {
        assert_eq!(g.len(), self.cells + 1, "laplacian_from_grads: gradient length mismatch");
        let mut out = RadialField::zeros(self.cells);
        for i in 0..self.cells {
            let flux = self.face_areas[i + 1] * g[i + 1] - self.face_areas[i] * g[i];
            out[i] = flux / (self.nodes[i].powi((self.dim - 1) as i32) * self.h);
        }
        out
    }

    pub fn laplacian(&self, u: &RadialField) -> RadialField {
        self.laplacian_from_grads(&self.face_gradients(u))
    }

    /// Weighted inner product `sum_i w_i U_i V_i`, the discrete `(u, v)_L2`.
    pub fn inner(&self, u: &RadialField, v: &RadialField) -> f64 {
        self.check_len(u, "inner");
        self.check_len(v, "inner");
        let mut acc = 0.0;
        for i in 0..self.cells {
            acc += self.weights[i] * u[i] * v[i];
        }
        acc
    }

    pub fn l2_norm_sq(&self, u: &RadialField) -> f64 {
        self.inner(u, u)
    }

    pub fn l2_norm(&self, u: &RadialField) -> f64 {
        self.l2_norm_sq(u).sqrt()
    }

    pub fn linf_norm(&self, u: &RadialField) -> f64 {
        u.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Gradient form from two precomputed face-gradient arrays. The boundary
    /// face carries weight `h/2`; this is what makes summation by parts exact.
    pub fn grad_form_from(&self, gu: &[f64], gv: &[f64]) -> f64 {
        let n = self.cells;
        assert_eq!(gu.len(), n + 1, "grad_form_from: gradient length mismatch");
        assert_eq!(gv.len(), n + 1, "grad_form_from: gradient length mismatch");
        let mut acc = 0.0;
        for i in 1..n {
            acc += self.face_areas[i] * gu[i] * gv[i];
        }
        acc *= self.h;
        acc += self.face_areas[n] * gu[n] * gv[n] * (self.h / 2.0);
        self.omega * acc
    }

    /// `(grad u, grad v)` over the ball.
    pub fn grad_inner(&self, u: &RadialField, v: &RadialField) -> f64 {
        self.grad_form_from(&self.face_gradients(u), &self.face_gradients(v))
    }

    pub fn grad_sq_norm(&self, u: &RadialField) -> f64 {
        let g = self.face_gradients(u);
        self.grad_form_from(&g, &g)
    }

    /// `int |u|^p` over the ball.
    pub fn lp_integral(&self, u: &RadialField, p: f64) -> f64 {
        self.check_len(u, "lp_integral");
        let mut acc = 0.0;
        for i in 0..self.cells {
            acc += self.weights[i] * u[i].abs().powf(p);
        }
        acc
    }

    /// `int k(r) |u|^p` over the ball.
    pub fn weighted_lp_norm(&self, u: &RadialField, k: &KProfile, p: f64) -> f64 {
        self.check_len(u, "weighted_lp_norm");
        let mut acc = 0.0;
        for i in 0..self.cells {
            acc += self.weights[i] * k.eval(self.nodes[i], self.radius) * u[i].abs().powf(p);
        }
        acc
    }

    /// Singular-weight inner product `int r^(-sigma) u v`. Nodes are cell
    /// midpoints, so the integrand is evaluated away from the origin.
    pub fn inner_hardy(&self, u: &RadialField, v: &RadialField, sigma: f64) -> f64 {
        self.check_len(u, "inner_hardy");
        self.check_len(v, "inner_hardy");
        let mut acc = 0.0;
        for i in 0..self.cells {
            let a = if sigma == 0.0 { 1.0 } else { self.nodes[i].powf(-sigma) };
            acc += self.weights[i] * a * u[i] * v[i];
        }
        acc
    }

    /// `int r^(-sigma) u^2`, the weighted norm entering the damping term.
    pub fn hardy_norm_sq(&self, u: &RadialField, sigma: f64) -> f64 {
        self.inner_hardy(u, u, sigma)
    }

    /// Solve `-lap U = rhs` with the same Dirichlet closure as `laplacian`.
    /// The operator is a tridiagonal M-matrix; Thomas elimination.
    pub fn solve_neg_laplacian(&self, rhs: &RadialField) -> RadialField {
        self.check_len(rhs, "solve_neg_laplacian");
        let n = self.cells;
        let h2 = self.h * self.h;
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        for i in 0..n {
            let vol = self.nodes[i].powi((self.dim - 1) as i32) * h2;
            let lo = self.face_areas[i] / vol;
            let hi = self.face_areas[i + 1] / vol;
            if i + 1 == n {
                sub[i] = -lo;
                diag[i] = lo + 2.0 * hi;
            } else {
                sub[i] = -lo;
                diag[i] = lo + hi;
                sup[i] = -hi;
            }
        }
        // forward sweep
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = sup[0] / diag[0];
        d[0] = rhs[0] / diag[0];
        for i in 1..n {
            let m = diag[i] - sub[i] * c[i - 1];
            if i + 1 < n {
                c[i] = sup[i] / m;
            }
            d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
        }
        let mut out = RadialField::zeros(n);
        out[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            out[i] = d[i] - c[i] * out[i + 1];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn mesh3(n: usize) -> RadialMesh {
        RadialMesh::new(3, n, 1.0).unwrap()
    }

    fn random_field(mesh: &RadialMesh, seed: u64) -> RadialField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RadialField::from_fn(mesh.cells, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn unit_sphere_areas() {
        assert_relative_eq!(unit_sphere_area(2), 2.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(unit_sphere_area(3), 4.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(unit_sphere_area(4), 2.0 * PI * PI, max_relative = 1e-15);
        assert_relative_eq!(unit_sphere_area(5), 8.0 * PI * PI / 3.0, max_relative = 1e-15);
        assert_relative_eq!(unit_sphere_area(6), PI * PI * PI, max_relative = 1e-15);
    }

    #[test]
    fn layout_and_volume() {
        let m = mesh3(10);
        assert_eq!(m.h, 0.1);
        assert_relative_eq!(m.nodes[0], 0.05, max_relative = 1e-15);
        assert_relative_eq!(m.nodes[9], 0.95, max_relative = 1e-15);
        assert_eq!(m.face_areas[0], 0.0);
        assert_relative_eq!(m.face_areas[10], 1.0, max_relative = 1e-14);
        assert_relative_eq!(m.volume(), 4.0 * PI / 3.0, max_relative = 1e-15);
        // midpoint quadrature of the volume carries an O(h^2) defect
        let total: f64 = m.weights.iter().sum();
        assert_relative_eq!(total, m.volume(), max_relative = 1e-2);
        let m256 = mesh3(256);
        let total256: f64 = m256.weights.iter().sum();
        assert_relative_eq!(total256, m256.volume(), max_relative = 1e-3);
        let fine = mesh3(1000);
        let total_fine: f64 = fine.weights.iter().sum();
        assert_relative_eq!(total_fine, fine.volume(), max_relative = 1e-6);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(RadialMesh::new(1, 10, 1.0).is_err());
        assert!(RadialMesh::new(3, 3, 1.0).is_err());
        assert!(RadialMesh::new(3, 10, 0.0).is_err());
        assert!(RadialMesh::new(3, 10, f64::NAN).is_err());
    }

    #[test]
    fn summation_by_parts_is_exact() {
        for dim in [3, 4, 5] {
            let m = RadialMesh::new(dim, 37, 1.3).unwrap();
            let u = random_field(&m, 11 + dim as u64);
            let v = random_field(&m, 97 + dim as u64);
            let lhs = m.inner(&m.laplacian(&u), &v);
            let rhs = -m.grad_inner(&u, &v);
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
            // and symmetry of the gradient form
            assert_relative_eq!(m.grad_inner(&u, &v), m.grad_inner(&v, &u), max_relative = 1e-12);
        }
    }

    #[test]
    fn laplacian_truncation_on_quadratic() {
        // u = R^2 - r^2 has exact interior face gradients; the only interior
        // defect is the midpoint volume factor: lap u = -6 - h^2/(2 r_i^2)
        // at every row except the boundary one (n = 3).
        let m = mesh3(32);
        let u = m.field_from_fn(|r| 1.0 - r * r);
        let lap = m.laplacian(&u);
        for i in 0..m.cells - 1 {
            let expect = -6.0 - m.h * m.h / (2.0 * m.nodes[i] * m.nodes[i]);
            assert_relative_eq!(lap[i], expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn laplacian_of_constant_vanishes_except_boundary_cell() {
        let m = mesh3(16);
        let u = m.field_from_fn(|_| 3.0);
        let lap = m.laplacian(&u);
        for i in 0..m.cells - 1 {
            assert_eq!(lap[i], 0.0);
        }
        // Dirichlet closure sees the boundary value 0, not the constant
        assert!(lap[m.cells - 1] < 0.0);
    }

    #[test]
    fn hardy_norm_of_linear_field() {
        // int r^{-2} (1-r)^2 over the unit ball (n=3): 4 pi int (1-r)^2 dr = 4 pi / 3
        let m = mesh3(512);
        let u = m.field_from_fn(|r| 1.0 - r);
        assert_relative_eq!(m.hardy_norm_sq(&u, 2.0), 4.0 * PI / 3.0, max_relative = 1e-4);
    }

    #[test]
    fn gradient_norm_on_quadratic() {
        // grad(R^2 - r^2) = -2r; int |grad|^2 = 16 pi R^5 / 5 for n = 3, R = 1.
        let m = mesh3(256);
        let u = m.field_from_fn(|r| 1.0 - r * r);
        assert_relative_eq!(m.grad_sq_norm(&u), 16.0 * PI / 5.0, max_relative = 2e-3);
    }

    #[test]
    fn inner_products_on_ones() {
        let m = mesh3(50);
        let ones = m.field_from_fn(|_| 1.0);
        let total: f64 = m.weights.iter().sum();
        assert_relative_eq!(m.l2_norm_sq(&ones), total, max_relative = 1e-14);
        // sigma = 2, n = 3: weights cancel the radial factor exactly
        assert_relative_eq!(m.hardy_norm_sq(&ones, 2.0), 4.0 * PI, max_relative = 1e-13);
        assert_eq!(m.linf_norm(&ones), 1.0);
        let k = KProfile::Constant { c: 2.5 };
        assert_relative_eq!(
            m.weighted_lp_norm(&ones, &k, 3.0),
            2.5 * m.lp_integral(&ones, 3.0),
            max_relative = 1e-14
        );
    }

    #[test]
    fn hardy_inner_reduces_to_plain_at_sigma_zero() {
        let m = mesh3(20);
        let u = random_field(&m, 5);
        let v = random_field(&m, 6);
        assert_eq!(m.inner_hardy(&u, &v, 0.0), m.inner(&u, &v));
    }

    #[test]
    fn lp_integral_of_known_field() {
        // int_B |r|^3 with n = 3: 4 pi int r^5 dr = 2 pi / 3 (R = 1)
        let m = mesh3(400);
        let u = m.field_from_fn(|r| r);
        assert_relative_eq!(m.lp_integral(&u, 3.0), 2.0 * PI / 3.0, max_relative = 1e-4);
    }

    #[test]
    fn solve_neg_laplacian_residual() {
        for dim in [3, 5] {
            let m = RadialMesh::new(dim, 64, 0.9).unwrap();
            let rhs = random_field(&m, 42);
            let u = m.solve_neg_laplacian(&rhs);
            let lap = m.laplacian(&u);
            for i in 0..m.cells {
                assert_relative_eq!(-lap[i], rhs[i], max_relative = 1e-10, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn solve_neg_laplacian_is_self_adjoint_and_positive() {
        let m = mesh3(48);
        let f = random_field(&m, 7);
        let g = random_field(&m, 8);
        let sf = m.solve_neg_laplacian(&f);
        let sg = m.solve_neg_laplacian(&g);
        assert_relative_eq!(m.inner(&sf, &g), m.inner(&f, &sg), max_relative = 1e-11);
        assert!(m.inner(&sf, &f) > 0.0);
    }

    #[test]
    fn solve_neg_laplacian_preserves_positivity() {
        // inverse of an M-matrix is entrywise nonnegative
        let m = mesh3(32);
        let mut rhs = RadialField::zeros(m.cells);
        rhs[20] = 1.0;
        let u = m.solve_neg_laplacian(&rhs);
        for i in 0..m.cells {
            assert!(u[i] >= 0.0);
        }
        assert!(u[20] > 0.0);
    }

    #[test]
    fn field_ops() {
        let mut a = RadialField::from_fn(4, |i| i as f64);
        let b = RadialField::from_fn(4, |_| 2.0);
        a.axpy(0.5, &b);
        assert_eq!(a.0, vec![1.0, 2.0, 3.0, 4.0]);
        let c = a.scaled(2.0);
        assert_eq!(c.0, vec![2.0, 4.0, 6.0, 8.0]);
        a.scale(0.0);
        assert_eq!(a.0, vec![0.0; 4]);
        assert!(!a.is_empty());
    }

    #[test]
    #[should_panic(expected = "does not match cell count")]
    fn laplacian_rejects_wrong_length() {
        let m = mesh3(10);
        let u = RadialField::zeros(9);
        let _ = m.laplacian(&u);
    }

    #[test]
    #[should_panic(expected = "field length mismatch in axpy")]
    fn axpy_rejects_wrong_length() {
        let mut a = RadialField::zeros(3);
        let b = RadialField::zeros(4);
        a.axpy(1.0, &b);
    }
}
