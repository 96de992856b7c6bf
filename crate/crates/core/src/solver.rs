//! Linear solves for the per-step system `(I − iα D_H − iβ diag φ) x = b`.
//!
//! The φ-free part `M = I − iα D_H` is diagonal in the discrete Fourier basis,
//! so it is inverted exactly with a 2-D FFT and used as a right preconditioner
//! for restarted GMRES. Since `A M⁻¹ y = y − iβ φ∘(M⁻¹ y)`, the Krylov loop
//! never touches the stencil; the true residual is checked with the stencil
//! afterwards and polished by iterative refinement.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::operators::{HyperbolicLaplacian, StepMatrix};

/// Relative residual every accepted solve must satisfy.
pub const RESIDUAL_CONTRACT: f64 = 1e-12;

/// Largest `N` for which the dense direct solver is allowed.
pub const DIRECT_SOLVER_MAX_N: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Target relative residual; iteration stops once the true residual is below it.
    pub tol: f64,
    /// Krylov dimension between restarts.
    pub restart: usize,
    /// Budget of GMRES iterations per refinement pass.
    pub max_iter: usize,
    /// Number of refinement passes (each pass is a full GMRES solve on the residual).
    pub max_refinements: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-15, restart: 30, max_iter: 300, max_refinements: 4 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub refinements: usize,
    /// `‖b − A x‖ / ‖b‖` measured with the stencil.
    pub residual: f64,
}

/// Exact inverse of `I − iα D_H` through the 2-D DFT.
pub struct FftPreconditioner {
    n: usize,
    alpha: f64,
    /// `1 / (1 − iα(s(k) − s(l)))` stored at `l * N + k` (transposed layout), pre-scaled by `1/N²`.
    inv_symbol: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    transposed: Vec<Complex64>,
}

impl FftPreconditioner {
    pub fn new(laplacian: &HyperbolicLaplacian, alpha: f64) -> Self {
        let n = laplacian.n();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let d2 = laplacian.second_difference();
        let s: Vec<f64> = (0..n as isize).map(|k| d2.symbol(k)).collect();
        let scale = 1.0 / (n * n) as f64;
        let mut inv_symbol = Vec::with_capacity(n * n);
        for l in 0..n {
            for k in 0..n {
                let denom = Complex64::new(1.0, -alpha * (s[k] - s[l]));
                inv_symbol.push(scale / denom);
            }
        }
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Self {
            n,
            alpha,
            inv_symbol,
            forward,
            inverse,
            scratch: vec![Complex64::default(); scratch_len],
            transposed: vec![Complex64::default(); n * n],
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// In-place `x ← M⁻¹ x`.
    pub fn apply(&mut self, x: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(x.len(), n * n);
        // rows: FFT over j
        self.forward.process_with_scratch(x, &mut self.scratch);
        transpose(x, &mut self.transposed, n);
        // now indexed [l][i]; FFT over i gives [l][k]
        self.forward.process_with_scratch(&mut self.transposed, &mut self.scratch);
        for (v, w) in self.transposed.iter_mut().zip(&self.inv_symbol) {
            *v *= w;
        }
        self.inverse.process_with_scratch(&mut self.transposed, &mut self.scratch);
        transpose(&self.transposed, x, n);
        self.inverse.process_with_scratch(x, &mut self.scratch);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    const BLOCK: usize = 32;
    for ib in (0..n).step_by(BLOCK) {
        for jb in (0..n).step_by(BLOCK) {
            for i in ib..(ib + BLOCK).min(n) {
                for j in jb..(jb + BLOCK).min(n) {
                    dst[j * n + i] = src[i * n + j];
                }
            }
        }
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    // conj(a) · b
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Solver for the step systems that share one `α`.
pub struct StepSolver {
    laplacian: Arc<HyperbolicLaplacian>,
    precond: FftPreconditioner,
    config: SolverConfig,
    basis: Vec<Vec<Complex64>>,
    directions: Vec<Vec<Complex64>>,
    work: Vec<Complex64>,
    residual: Vec<Complex64>,
}

impl StepSolver {
    pub fn new(laplacian: Arc<HyperbolicLaplacian>, alpha: f64, config: SolverConfig) -> Self {
        let precond = FftPreconditioner::new(&laplacian, alpha);
        let dim = laplacian.n() * laplacian.n();
        Self {
            laplacian,
            precond,
            config,
            basis: Vec::new(),
            directions: Vec::new(),
            work: vec![Complex64::default(); dim],
            residual: vec![Complex64::default(); dim],
        }
    }

    pub fn alpha(&self) -> f64 {
        self.precond.alpha()
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Solve `(I − iα D_H − iβ diag φ) x = b`; `x` holds the initial guess on entry.
    pub fn solve(
        &mut self,
        beta: f64,
        phi: Option<&[f64]>,
        b: &[Complex64],
        x: &mut [Complex64],
    ) -> Result<SolveStats> {
        let dim = self.work.len();
        assert_eq!(b.len(), dim);
        assert_eq!(x.len(), dim);
        let b_norm = norm(b);
        if b_norm == 0.0 {
            x.fill(Complex64::default());
            return Ok(SolveStats::default());
        }
        let phi = if beta == 0.0 { None } else { phi };
        if phi.is_none() && self.precond.alpha() == 0.0 {
            x.copy_from_slice(b);
            return Ok(SolveStats::default());
        }
        if phi.is_none() {
            // The preconditioner is the exact inverse; start from it.
            x.copy_from_slice(b);
            self.precond.apply(x);
        }

        let mut stats = SolveStats::default();
        let mut res_norm = self.true_residual(beta, phi, b, x);
        for _ in 0..=self.config.max_refinements {
            if res_norm <= self.config.tol * b_norm || stats.refinements == self.config.max_refinements {
                break;
            }
            let target = self.config.tol * b_norm;
            let mut correction = std::mem::take(&mut self.residual);
            stats.iterations += self.gmres(beta, phi, &mut correction, target)?;
            for (xv, c) in x.iter_mut().zip(&correction) {
                *xv += c;
            }
            self.residual = correction;
            stats.refinements += 1;
            let new_norm = self.true_residual(beta, phi, b, x);
            let stalled = new_norm > 0.5 * res_norm;
            res_norm = new_norm;
            if stalled {
                break;
            }
        }
        stats.residual = res_norm / b_norm;
        if !stats.residual.is_finite() || stats.residual > RESIDUAL_CONTRACT {
            return Err(Error::Solve { iterations: stats.iterations, residual: stats.residual });
        }
        Ok(stats)
    }

    /// `self.residual = b − A x`; returns its norm.
    fn true_residual(&mut self, beta: f64, phi: Option<&[f64]>, b: &[Complex64], x: &[Complex64]) -> f64 {
        let a = StepMatrix { laplacian: &self.laplacian, alpha: self.precond.alpha(), beta, phi };
        a.apply(x, &mut self.work);
        for ((r, bv), av) in self.residual.iter_mut().zip(b).zip(&self.work) {
            *r = bv - av;
        }
        norm(&self.residual)
    }

    /// Flexible-storage, right-preconditioned restarted GMRES for `A d = r`.
    ///
    /// The preconditioned directions `z_k = M⁻¹ v_k` are kept, so the solution
    /// needs no extra preconditioner application. On exit `rhs` holds `d`.
    fn gmres(&mut self, beta: f64, phi: Option<&[f64]>, rhs: &mut Vec<Complex64>, target: f64) -> Result<usize> {
        let dim = rhs.len();
        let m = self.config.restart.max(1);
        while self.basis.len() <= m {
            self.basis.push(vec![Complex64::default(); dim]);
        }
        while self.directions.len() < m {
            self.directions.push(vec![Complex64::default(); dim]);
        }
        let mut x_total = vec![Complex64::default(); dim];
        let mut r = rhs.clone();
        let mut r_norm = norm(&r);
        let mut iterations = 0;
        while r_norm > target && iterations < self.config.max_iter {
            let mut h = vec![vec![Complex64::default(); m]; m + 1];
            let mut cs = vec![0.0; m];
            let mut sn = vec![Complex64::default(); m];
            let mut g = vec![Complex64::default(); m + 1];
            g[0] = Complex64::new(r_norm, 0.0);
            for (v, rv) in self.basis[0].iter_mut().zip(&r) {
                *v = rv / r_norm;
            }
            let mut k = 0;
            let mut converged = false;
            while k < m && iterations < self.config.max_iter {
                let z = &mut self.directions[k];
                z.copy_from_slice(&self.basis[k]);
                self.precond.apply(z);
                // w = A M⁻¹ v_k = v_k − iβ φ∘z_k
                let mut w = std::mem::take(&mut self.basis[k + 1]);
                w.copy_from_slice(&self.basis[k]);
                if let Some(phi) = phi {
                    for ((wv, zv), &f) in w.iter_mut().zip(z.iter()).zip(phi) {
                        *wv -= Complex64::new(0.0, beta * f) * zv;
                    }
                }
                for (j, hj) in h.iter_mut().enumerate().take(k + 1) {
                    let c = dot(&self.basis[j], &w);
                    hj[k] = c;
                    for (wv, vv) in w.iter_mut().zip(&self.basis[j]) {
                        *wv -= c * vv;
                    }
                }
                let w_norm = norm(&w);
                h[k + 1][k] = Complex64::new(w_norm, 0.0);
                if w_norm > 0.0 {
                    for wv in w.iter_mut() {
                        *wv /= w_norm;
                    }
                }
                self.basis[k + 1] = w;
                for j in 0..k {
                    let (a, b) = (h[j][k], h[j + 1][k]);
                    h[j][k] = cs[j] * a + sn[j] * b;
                    h[j + 1][k] = -sn[j].conj() * a + cs[j] * b;
                }
                let (c, s, rr) = givens(h[k][k], h[k + 1][k]);
                cs[k] = c;
                sn[k] = s;
                h[k][k] = rr;
                h[k + 1][k] = Complex64::default();
                g[k + 1] = -s.conj() * g[k];
                g[k] *= c;
                iterations += 1;
                k += 1;
                if g[k].norm() <= target || w_norm == 0.0 {
                    converged = true;
                    break;
                }
            }
            let mut coef = vec![Complex64::default(); k];
            for i in (0..k).rev() {
                let mut acc = g[i];
                for j in i + 1..k {
                    acc -= h[i][j] * coef[j];
                }
                coef[i] = acc / h[i][i];
            }
            for (j, cj) in coef.iter().enumerate() {
                for (xv, zv) in x_total.iter_mut().zip(&self.directions[j]) {
                    *xv += cj * zv;
                }
            }
            if converged {
                break;
            }
            // Restart from the true residual rhs − A x_total.
            let a = StepMatrix { laplacian: &self.laplacian, alpha: self.precond.alpha(), beta, phi };
            a.apply(&x_total, &mut r);
            for (rv, bv) in r.iter_mut().zip(rhs.iter()) {
                *rv = bv - *rv;
            }
            let new_norm = norm(&r);
            if new_norm >= r_norm {
                break;
            }
            r_norm = new_norm;
        }
        *rhs = x_total;
        Ok(iterations)
    }
}

/// Complex Givens rotation with real cosine: `[c s; −s̄ c] [a; b] = [r; 0]`.
fn givens(a: Complex64, b: Complex64) -> (f64, Complex64, Complex64) {
    let (na, nb) = (a.norm(), b.norm());
    if nb == 0.0 {
        return (1.0, Complex64::default(), a);
    }
    if na == 0.0 {
        return (0.0, b.conj() / nb, Complex64::new(nb, 0.0));
    }
    let denom = na.hypot(nb);
    let phase = a / na;
    (na / denom, phase * b.conj() / denom, phase * denom)
}

/// Dense LU solve of the step system, for small grids and cross-checks.
pub fn solve_direct(a: &StepMatrix<'_>, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = a.laplacian.n();
    if n > DIRECT_SOLVER_MAX_N {
        return Err(Error::Configuration(format!(
            "direct solver limited to N <= {DIRECT_SOLVER_MAX_N}, got N = {n}"
        )));
    }
    let dense = a.to_dense();
    let rhs = nalgebra::DVector::from_column_slice(b);
    let x = dense
        .lu()
        .solve(&rhs)
        .ok_or(Error::Solve { iterations: 0, residual: f64::INFINITY })?;
    Ok(x.iter().copied().collect())
}
