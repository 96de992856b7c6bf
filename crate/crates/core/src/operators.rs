//! Fourth-order periodic difference operators and the hyperbolic Laplacian.
//!
//! Every operator exists in two forms: an assembled [`CsrMatrix`] (used by the
//! direct fallback and by tests) and a matrix-free stencil application used in
//! the time loop.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{ensure, Error, Result};
use crate::grid::Grid;
use crate::sparse::CsrMatrix;

/// Offsets and unscaled weights of the second-difference stencil (multiply by `1/h²`).
pub const SECOND_DIFFERENCE_STENCIL: [(isize, f64); 5] =
    [(-2, -1.0 / 12.0), (-1, 4.0 / 3.0), (0, -5.0 / 2.0), (1, 4.0 / 3.0), (2, -1.0 / 12.0)];

/// Offsets and unscaled weights of the first-difference stencil (multiply by `1/h`).
pub const FIRST_DIFFERENCE_STENCIL: [(isize, f64); 4] =
    [(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)];

#[inline]
fn wrap_index(i: usize, offset: isize, n: usize) -> usize {
    (i as isize + offset).rem_euclid(n as isize) as usize
}

fn check_size(n: usize) -> Result<()> {
    ensure(n >= 5, || {
        Error::Parameter(format!("the five-point stencil needs N >= 5, got N = {n}"))
    })
}

/// Periodic 4th-order approximation of `d²/dx²` on `N` points.
#[derive(Clone, Debug)]
pub struct SecondDifference {
    n: usize,
    h: f64,
    weights: [(isize, f64); 5],
}

impl SecondDifference {
    pub fn new(n: usize, h: f64) -> Result<Self> {
        check_size(n)?;
        ensure(h.is_finite() && h > 0.0, || Error::Parameter(format!("mesh size must be positive, got {h}")))?;
        let scale = 1.0 / (h * h);
        Ok(Self { n, h, weights: SECOND_DIFFERENCE_STENCIL.map(|(o, w)| (o, w * scale)) })
    }

    pub fn for_grid(grid: &Grid) -> Result<Self> {
        Self::new(grid.n(), grid.h())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Scaled stencil `(offset, weight)` pairs.
    pub fn weights(&self) -> &[(isize, f64); 5] {
        &self.weights
    }

    /// Eigenvalue on the discrete Fourier mode with index `k`.
    pub fn symbol(&self, k: isize) -> f64 {
        let theta = 2.0 * PI * k as f64 / self.n as f64;
        (-(2.0 * theta).cos() / 6.0 + 8.0 * theta.cos() / 3.0 - 2.5) / (self.h * self.h)
    }

    pub fn matrix(&self) -> CsrMatrix {
        let n = self.n;
        let rows = (0..n)
            .map(|i| self.weights.iter().map(|&(o, w)| (wrap_index(i, o, n), w)).collect())
            .collect();
        CsrMatrix::from_rows(n, rows)
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n);
        (0..self.n)
            .map(|i| self.weights.iter().map(|&(o, w)| w * f[wrap_index(i, o, self.n)]).sum())
            .collect()
    }
}

/// Periodic 4th-order approximation of `d/dx` on `N` points.
#[derive(Clone, Debug)]
pub struct FirstDifference {
    n: usize,
    weights: [(isize, f64); 4],
}

impl FirstDifference {
    pub fn new(n: usize, h: f64) -> Result<Self> {
        check_size(n)?;
        ensure(h.is_finite() && h > 0.0, || Error::Parameter(format!("mesh size must be positive, got {h}")))?;
        Ok(Self { n, weights: FIRST_DIFFERENCE_STENCIL.map(|(o, w)| (o, w / h)) })
    }

    pub fn for_grid(grid: &Grid) -> Result<Self> {
        Self::new(grid.n(), grid.h())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[(isize, f64); 4] {
        &self.weights
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n);
        (0..self.n)
            .map(|i| self.weights.iter().map(|&(o, w)| w * f[wrap_index(i, o, self.n)]).sum())
            .collect()
    }
}

/// `Δx − Δy` on x-major vectorized `N x N` fields: `D₂ ⊗ I − I ⊗ D₂`.
#[derive(Clone, Debug)]
pub struct HyperbolicLaplacian {
    d2: SecondDifference,
    /// `neighbors[i][s]` is the wrapped index `i + offset_s`.
    neighbors: Vec<[usize; 5]>,
}

impl HyperbolicLaplacian {
    pub fn new(d2: SecondDifference) -> Self {
        let n = d2.n();
        let neighbors = (0..n)
            .map(|i| {
                let mut row = [0usize; 5];
                for (slot, &(o, _)) in row.iter_mut().zip(d2.weights()) {
                    *slot = wrap_index(i, o, n);
                }
                row
            })
            .collect();
        Self { d2, neighbors }
    }

    pub fn for_grid(grid: &Grid) -> Result<Self> {
        Ok(Self::new(SecondDifference::for_grid(grid)?))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.d2.n()
    }

    pub fn second_difference(&self) -> &SecondDifference {
        &self.d2
    }

    /// Eigenvalue `s(k) − s(l)` on the mode `exp(2πi(k x + l y)/L)`.
    pub fn symbol(&self, k: isize, l: isize) -> f64 {
        self.d2.symbol(k) - self.d2.symbol(l)
    }

    /// Assembled `N² x N²` matrix; the (exactly zero) diagonal stays in the pattern.
    pub fn matrix(&self) -> CsrMatrix {
        let d2 = self.d2.matrix();
        let id = CsrMatrix::identity(self.n());
        d2.kron(&id).add_scaled(-1.0, &id.kron(&d2))
    }

    /// `out = D_H u` for a flat x-major field.
    pub fn apply(&self, u: &[Complex64], out: &mut [Complex64]) {
        let n = self.n();
        assert_eq!(u.len(), n * n);
        assert_eq!(out.len(), n * n);
        let w: [f64; 5] = self.d2.weights().map(|(_, w)| w);
        for i in 0..n {
            let xi = &self.neighbors[i];
            let rows: [&[Complex64]; 5] = xi.map(|r| &u[r * n..(r + 1) * n]);
            let own = &u[i * n..(i + 1) * n];
            let dst = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                let yj = &self.neighbors[j];
                // The centre weights cancel exactly, so they are skipped.
                let dx = (rows[0][j] + rows[4][j]) * w[0] + (rows[1][j] + rows[3][j]) * w[1];
                let dy = (own[yj[0]] + own[yj[4]]) * w[0] + (own[yj[1]] + own[yj[3]]) * w[1];
                dst[j] = dx - dy;
            }
        }
    }
}

/// The per-step system matrix `I − iα D_H − iβ diag(φ)`, applied matrix-free.
///
/// `α = pτ/2` and `β = qτ/2` in the forward step; the backward initialization
/// half-step uses negated quarter-step coefficients.
#[derive(Clone, Copy, Debug)]
pub struct StepMatrix<'a> {
    pub laplacian: &'a HyperbolicLaplacian,
    pub alpha: f64,
    pub beta: f64,
    /// Diagonal perturbation (flat field); `None` means `φ ≡ 0`.
    pub phi: Option<&'a [f64]>,
}

impl StepMatrix<'_> {
    pub fn dim(&self) -> usize {
        let n = self.laplacian.n();
        n * n
    }

    /// `out = A x`.
    pub fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        self.laplacian.apply(x, out);
        let ia = Complex64::new(0.0, -self.alpha);
        match self.phi {
            Some(phi) => {
                for ((o, &xv), &f) in out.iter_mut().zip(x).zip(phi) {
                    *o = xv + ia * *o - Complex64::new(0.0, self.beta * f) * xv;
                }
            }
            None => {
                for (o, &xv) in out.iter_mut().zip(x) {
                    *o = xv + ia * *o;
                }
            }
        }
    }

    /// Dense copy of the matrix, for the direct solver on small grids.
    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let dim = self.dim();
        let dh = self.laplacian.matrix();
        let mut a = nalgebra::DMatrix::<Complex64>::zeros(dim, dim);
        for r in 0..dim {
            for (c, v) in dh.row(r) {
                a[(r, c)] += Complex64::new(0.0, -self.alpha * v);
            }
            let f = self.phi.map_or(0.0, |phi| phi[r]);
            a[(r, r)] += Complex64::new(1.0, -self.beta * f);
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(n: usize, f: impl Fn(usize, usize) -> Complex64) -> Vec<Complex64> {
        (0..n * n).map(|k| f(k / n, k % n)).collect()
    }

    #[test]
    fn second_difference_structure() {
        let d2 = SecondDifference::new(16, 0.5).unwrap();
        let m = d2.matrix();
        assert!(m.is_symmetric());
        for r in 0..16 {
            assert_eq!(m.row(r).count(), 5);
            let sum: f64 = m.row(r).map(|(_, v)| v).sum();
            assert!(sum.abs() <= 1e-12 / (0.5 * 0.5));
        }
        assert_eq!(m.get(3, 3), -5.0 / (2.0 * 0.25));
        assert!(SecondDifference::new(4, 1.0).is_err());
    }

    #[test]
    fn second_difference_is_fourth_order() {
        let l = 50.0;
        let err = |n: usize| {
            let h = l / n as f64;
            let d2 = SecondDifference::new(n, h).unwrap();
            let k = 2.0 * PI / l;
            let f: Vec<f64> = (0..n).map(|i| (k * (-l / 2.0 + i as f64 * h)).sin()).collect();
            d2.apply(&f)
                .iter()
                .zip(&f)
                .map(|(a, b)| (a + k * k * b).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(128) / err(256);
        assert!((ratio - 16.0).abs() < 0.5, "ratio {ratio}");
    }

    #[test]
    fn symbol_matches_stencil_at_five_modes() {
        // Refit the stencil from its symbol: the five weights are recovered exactly.
        let n = 32;
        let d2 = SecondDifference::new(n, 1.0).unwrap();
        for k in -2..=2 {
            let theta = 2.0 * PI * k as f64 / n as f64;
            let direct: f64 = SECOND_DIFFERENCE_STENCIL.iter().map(|&(o, w)| w * (o as f64 * theta).cos()).sum();
            assert!((direct - d2.symbol(k)).abs() < 1e-14);
        }
    }

    #[test]
    fn laplacian_matrix_and_stencil_agree() {
        let n = 7;
        let lap = HyperbolicLaplacian::new(SecondDifference::new(n, 0.3).unwrap());
        let m = lap.matrix();
        assert!(m.is_symmetric());
        for r in 0..n * n {
            assert_eq!(m.row(r).count(), 9);
            assert_eq!(m.get(r, r), 0.0);
        }
        let u = field(n, |i, j| Complex64::new((i * 3 + j) as f64 * 0.1, (i as f64 - j as f64).sin()));
        let mut a = vec![Complex64::default(); n * n];
        let mut b = vec![Complex64::default(); n * n];
        lap.apply(&u, &mut a);
        m.mul_vec_complex(&u, &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn laplacian_follows_kronecker_convention() {
        let n = 9;
        let d2 = SecondDifference::new(n, 0.7).unwrap();
        let lap = HyperbolicLaplacian::new(d2.clone());
        let f: Vec<f64> = (0..n).map(|i| (i as f64 * 0.9).cos()).collect();
        let d2f = d2.apply(&f);
        let u = field(n, |i, _| Complex64::new(f[i], 0.0));
        let mut out = vec![Complex64::default(); n * n];
        lap.apply(&u, &mut out);
        for i in 0..n {
            for j in 0..n {
                assert!((out[i * n + j].re - d2f[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn laplacian_annihilates_difference_fields_exactly() {
        let n = 40;
        let lap = HyperbolicLaplacian::new(SecondDifference::new(n, 0.25).unwrap());
        let g: Vec<f64> = (0..n).map(|d| (-0.3 * (d.min(n - d) as f64 * 0.25).powi(2)).exp()).collect();
        let u = field(n, |i, j| Complex64::new(g[(i + n - j) % n], 0.0));
        let mut out = vec![Complex64::default(); n * n];
        lap.apply(&u, &mut out);
        assert!(out.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn laplacian_diagonalized_by_modes() {
        let n = 32;
        let l = 50.0;
        let h = l / n as f64;
        let lap = HyperbolicLaplacian::new(SecondDifference::new(n, h).unwrap());
        for k in -4isize..=4 {
            for m in -4isize..=4 {
                let u = field(n, |i, j| {
                    let arg = 2.0 * PI * (k as f64 * i as f64 + m as f64 * j as f64) / n as f64;
                    Complex64::from_polar(1.0, arg)
                });
                let mut out = vec![Complex64::default(); n * n];
                lap.apply(&u, &mut out);
                let s = lap.symbol(k, m);
                for (o, v) in out.iter().zip(&u) {
                    assert!((o - v * s).norm() < 1e-11 * (1.0 + s.abs()));
                }
            }
        }
    }

    #[test]
    fn axis_swap_negates_laplacian() {
        let n = 6;
        let m = HyperbolicLaplacian::new(SecondDifference::new(n, 1.0).unwrap()).matrix();
        let swap = |r: usize| (r % n) * n + r / n;
        for r in 0..n * n {
            for c in 0..n * n {
                assert_eq!(m.get(swap(r), swap(c)), -m.get(r, c));
            }
        }
    }

    #[test]
    fn step_matrix_is_identity_plus_i_symmetric() {
        let n = 5;
        let lap = HyperbolicLaplacian::new(SecondDifference::new(n, 0.4).unwrap());
        let phi: Vec<f64> = (0..n * n).map(|k| (k as f64).sin()).collect();
        let a = StepMatrix { laplacian: &lap, alpha: 0.3, beta: 0.7, phi: Some(&phi) }.to_dense();
        for r in 0..n * n {
            for c in 0..n * n {
                let expected_re = if r == c { 1.0 } else { 0.0 };
                assert_eq!(a[(r, c)].re, expected_re);
                assert_eq!(a[(r, c)].im, a[(c, r)].im);
            }
        }
    }
}
