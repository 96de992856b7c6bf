//! Uniform periodic mesh and the two-point fields that live on it.
//!
//! Fields are stored flat in x-major order: entry `(i, j)` (x-index `i`,
//! y-index `j`) lives at `i * n + j`. The hyperbolic Laplacian, the FFT
//! preconditioner and every diagnostic rely on this convention.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Uniform `N x N` periodic mesh on `[-L/2, L/2)^2`.
///
/// Only `N` and `L` are stored; the spacing is always derived as `L / N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        ensure(n >= 1, || Error::Parameter("grid needs at least one point per axis".into()))?;
        ensure(length.is_finite() && length > 0.0, || {
            Error::Parameter(format!("domain length must be positive, got {length}"))
        })?;
        Ok(Self { n, length })
    }

    /// Grid with the point count closest to `length / spacing`.
    ///
    /// The realized spacing is `length / n`, which differs from the request
    /// by less than half a cell over the whole domain.
    pub fn from_spacing(length: f64, spacing: f64) -> Result<Self> {
        ensure(spacing.is_finite() && spacing > 0.0, || {
            Error::Parameter(format!("mesh spacing must be positive, got {spacing}"))
        })?;
        let n = (length / spacing).round().max(1.0) as usize;
        Self::new(n, length)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.length
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Coordinate of mesh line `i`, `-L/2 + i h`.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.length + i as f64 * self.h()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// Number of unknowns of a two-point field, `N^2`.
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// A square `N x N` array in x-major layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    n: usize,
    data: Vec<T>,
}

pub type ComplexField = Field<Complex64>;
pub type RealField = Field<f64>;

impl<T: Copy + Default> Field<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::default(); n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn from_vec(n: usize, data: Vec<T>) -> Result<Self> {
        ensure(data.len() == n * n, || {
            Error::Validation(format!("field data has {} entries, expected {}", data.len(), n * n))
        })?;
        Ok(Self { n, data })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.n + j] = value;
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// The diagonal slice `(i, i)`.
    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }
}

impl ComplexField {
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Discrete L2 norm `h * sqrt(sum |u|^2)`.
    pub fn l2_norm(&self, h: f64) -> f64 {
        h * self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `max_{i,j} |u_ij - conj(u_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let d = (self.get(i, j) - self.get(j, i).conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Largest imaginary part on the diagonal.
    pub fn diagonal_imag_max(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i).im.abs()).fold(0.0, f64::max)
    }

    /// Hermitian projection `(u + u^*) / 2` with `u^*_ij = conj(u_ji)`.
    pub fn hermitian_part(&self) -> Self {
        let n = self.n;
        Self::from_fn(n, |i, j| 0.5 * (self.get(i, j) + self.get(j, i).conj()))
    }

    pub fn into_scaled(mut self, factor: f64) -> Self {
        self.data.iter_mut().for_each(|z| *z *= factor);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl RealField {
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// `max_{i,j} |phi_ij + phi_ji|`; zero for an exactly anti-symmetric field.
    pub fn antisymmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.get(i, j) + self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Trace-difference field `d_i - d_j` built from a diagonal slice.
    pub fn trace_difference(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, |i, j| diag[i] - diag[j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_is_derived() {
        let g = Grid::new(556, 50.0).unwrap();
        assert_eq!(g.h() * g.n() as f64, 50.0);
        assert_eq!(g.coord(0), -25.0);
        let g = Grid::from_spacing(50.0, 0.09).unwrap();
        assert_eq!(g.n(), 556);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Grid::new(0, 1.0).is_err());
        assert!(Grid::new(4, -1.0).is_err());
        assert!(Grid::from_spacing(1.0, 0.0).is_err());
    }

    #[test]
    fn trace_difference_is_antisymmetric() {
        let phi = RealField::trace_difference(&[0.3, -1.2, 7.0, 1e-9]);
        assert_eq!(phi.antisymmetry_defect(), 0.0);
        assert_eq!(phi.diagonal(), vec![0.0; 4]);
    }

    #[test]
    fn hermitian_part_is_projection() {
        let f = ComplexField::from_fn(5, |i, j| Complex64::new(i as f64 - j as f64 * 0.3, (i * j) as f64));
        let h = f.hermitian_part();
        assert!(h.hermitian_defect() < 1e-15);
        assert_eq!(h.hermitian_part(), h);
    }
}
