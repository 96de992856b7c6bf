//! Relaxation–Crank–Nicolson time stepping.
//!
//! One step advances `(Uⁿ, Φ^{n−1/2})` to `(Uⁿ⁺¹, Φ^{n+1/2})`:
//!
//! ```text
//! Φ^{n+1/2} = 2 (Uⁿ_ii − Uⁿ_jj) − Φ^{n−1/2}
//! (I − i(pτ/2) D_H − i(qτ/2) diag Φ^{n+1/2}) U^{n+1/2} = Uⁿ + i(qτ/2) Γ∘Φ^{n+1/2}
//! Uⁿ⁺¹ = 2 U^{n+1/2} − Uⁿ
//! ```
//!
//! Only linear systems are solved. The linearized dynamics drop the
//! `diag Φ` term on the left and keep the `Γ∘Φ` source.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::grid::{ComplexField, Grid, RealField};
use crate::operators::HyperbolicLaplacian;
use crate::solver::{SolveStats, SolverConfig, StepSolver};
use crate::spectra::Autocorrelation;

/// Relative level of `max |Im U_ii|` (w.r.t. `‖U‖_∞`) accepted as round-off.
pub const DIAGONAL_IMAG_TOLERANCE: f64 = 1e-9;

/// Relative Hermitian defect accepted for initial data.
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// `Φ^{−1/2}` is the trace difference of `U⁰`.
    Naive,
    /// `Φ^{−1/2}` comes from a backward half-step; keeps `Φ` second-order accurate.
    Advanced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dynamics {
    Full,
    /// Drops the `(V(x) − V(y)) u` term; the background source stays.
    Linearized,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    /// Dispersion coefficient.
    pub p: f64,
    /// Nonlinearity coefficient.
    pub q: f64,
    pub tau: f64,
    pub final_time: f64,
    pub init_mode: InitMode,
    pub dynamics: Dynamics,
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.p.is_finite() && self.p != 0.0, || {
            Error::Parameter(format!("dispersion coefficient p must be finite and nonzero, got {}", self.p))
        })?;
        ensure(self.q.is_finite(), || Error::Parameter(format!("q must be finite, got {}", self.q)))?;
        ensure(self.tau.is_finite() && self.tau > 0.0, || {
            Error::Parameter(format!("timestep must be positive, got {}", self.tau))
        })?;
        ensure(self.final_time.is_finite() && self.final_time >= 0.0, || {
            Error::Parameter(format!("final time must be non-negative, got {}", self.final_time))
        })
    }

    /// Number of steps: `T/τ` when it is an integer up to round-off, otherwise `⌈T/τ⌉`.
    pub fn num_steps(&self) -> usize {
        let ratio = self.final_time / self.tau;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            ratio.ceil() as usize
        }
    }
}

/// `Uⁿ` together with the staggered auxiliary field `Φ^{n−1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub u: ComplexField,
    pub phi: RealField,
    pub step: usize,
    pub t: f64,
}

impl State {
    pub fn n(&self) -> usize {
        self.u.n()
    }
}

/// Parameters of the initial inhomogeneity
/// `f₀ = a e^{−c_x x² − c_y y²} (1 + A₁ cos(k_x x) cos(k_y y) + A₂ x + A₃ y)`,
/// symmetrized to `u₀(x, y) = (f₀(x, y) + conj f₀(y, x)) / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialInhomogeneity {
    pub amplitude: f64,
    pub cx: f64,
    pub cy: f64,
    pub kx: f64,
    pub ky: f64,
    pub a1: Complex64,
    pub a2: Complex64,
    pub a3: Complex64,
}

impl InitialInhomogeneity {
    /// Envelope `0.05 e^{−0.06x² − 0.07y²}` with modulation `cos(0.3x) cos(0.2y)`.
    pub fn with_coefficients(a1: Complex64, a2: Complex64, a3: Complex64) -> Self {
        Self { amplitude: 0.05, cx: 0.06, cy: 0.07, kx: 0.3, ky: 0.2, a1, a2, a3 }
    }

    /// The fixed coefficients used for the single-run experiments.
    pub fn reference() -> Self {
        Self::with_coefficients(Complex64::new(0.3, 0.8), Complex64::new(-0.2, 0.0), Complex64::new(0.0, 0.1))
    }

    pub fn raw(&self, x: f64, y: f64) -> Complex64 {
        let envelope = self.amplitude * (-self.cx * x * x - self.cy * y * y).exp();
        envelope * (1.0 + self.a1 * (self.kx * x).cos() * (self.ky * y).cos() + self.a2 * x + self.a3 * y)
    }

    pub fn field(&self, grid: &Grid) -> ComplexField {
        let xs = grid.coords();
        ComplexField::from_fn(grid.n(), |i, j| self.raw(xs[i], xs[j])).hermitian_part()
    }
}

/// Checks the structural assumptions on `U⁰`.
pub fn validate_initial_field(u0: &ComplexField) -> Result<()> {
    ensure(u0.is_finite(), || Error::Validation("initial field has non-finite entries".into()))?;
    let scale = u0.max_abs();
    let defect = u0.hermitian_defect();
    ensure(defect <= HERMITIAN_TOLERANCE * scale, || {
        Error::Validation(format!("initial field is not Hermitian: defect {defect:.3e} vs scale {scale:.3e}"))
    })?;
    let imag = u0.diagonal_imag_max();
    ensure(imag <= DIAGONAL_IMAG_TOLERANCE * scale, || {
        Error::Validation(format!("initial field has a non-real diagonal: max |Im U_ii| = {imag:.3e}"))
    })
}

fn real_diagonal(u: &ComplexField) -> Vec<f64> {
    (0..u.n()).map(|i| u.get(i, i).re).collect()
}

/// `Φ^{−1/2}_ij = U⁰_ii − U⁰_jj`.
pub fn init_phi_naive(u0: &ComplexField) -> Result<RealField> {
    let scale = u0.max_abs();
    let imag = u0.diagonal_imag_max();
    ensure(imag <= DIAGONAL_IMAG_TOLERANCE * scale, || {
        Error::Validation(format!("diagonal of U⁰ is not real: max |Im U_ii| = {imag:.3e}"))
    })?;
    Ok(RealField::trace_difference(&real_diagonal(u0)))
}

/// Backward half-step initialization of `Φ^{−1/2}`.
///
/// With `Φ* = U⁰_ii − U⁰_jj`, solves
/// `(I + i(pτ/4) D_H + i(qτ/4) diag Φ*) W = U⁰ − i(qτ/4) Γ∘Φ*`, sets
/// `U^{−1/2} = 2W − U⁰` and returns its trace difference. Linearized dynamics
/// omit the `diag Φ*` term, mirroring the forward step.
pub fn init_phi_advanced(
    u0: &ComplexField,
    laplacian: &Arc<HyperbolicLaplacian>,
    cfg: &SchemeConfig,
    gamma: &Autocorrelation,
    solver: SolverConfig,
) -> Result<RealField> {
    let phi_star = init_phi_naive(u0)?;
    let beta = -0.25 * cfg.q * cfg.tau;
    let rhs = background_source(u0, &phi_star, gamma, beta);
    let mut w = u0.as_slice().to_vec();
    let mut solver = StepSolver::new(laplacian.clone(), -0.25 * cfg.p * cfg.tau, solver);
    let phi = match cfg.dynamics {
        Dynamics::Full => Some(phi_star.as_slice()),
        Dynamics::Linearized => None,
    };
    solver.solve(beta, phi, &rhs, &mut w)?;
    let n = u0.n();
    let back: Vec<f64> = (0..n).map(|i| 2.0 * w[i * n + i].re - u0.get(i, i).re).collect();
    Ok(RealField::trace_difference(&back))
}

/// `U + iβ Γ∘Φ`, flattened.
fn background_source(u: &ComplexField, phi: &RealField, gamma: &Autocorrelation, beta: f64) -> Vec<Complex64> {
    let n = u.n();
    let table = gamma.table();
    let mut out = u.as_slice().to_vec();
    if gamma.is_zero() {
        return out;
    }
    for i in 0..n {
        let row = &mut out[i * n..(i + 1) * n];
        let phi_row = &phi.as_slice()[i * n..(i + 1) * n];
        for (j, (o, &f)) in row.iter_mut().zip(phi_row).enumerate() {
            let g = table[if i >= j { i - j } else { i + n - j }];
            *o += Complex64::new(0.0, beta * g * f);
        }
    }
    out
}

/// Per-step observation handed to observers.
pub struct StepEvent<'a> {
    /// `Uⁿ` before the step; `None` for the initial observation.
    pub previous: Option<&'a ComplexField>,
    /// State after the step: `Uⁿ⁺¹` and `Φ^{n+1/2}`.
    pub state: &'a State,
    pub solve: SolveStats,
}

pub trait Observer {
    /// Observe every `stride`-th step (the initial state and the final step are always observed).
    fn stride(&self) -> usize {
        1
    }

    fn observe(&mut self, event: &StepEvent<'_>) -> Result<()>;
}

/// Owns the operators and solver workspaces for one run.
pub struct Stepper {
    grid: Grid,
    config: SchemeConfig,
    gamma: Arc<Autocorrelation>,
    laplacian: Arc<HyperbolicLaplacian>,
    solver: StepSolver,
    solver_config: SolverConfig,
    previous: ComplexField,
    /// `Uⁿ⁻²`, for the warm start.
    older: Vec<Complex64>,
    phi_half: RealField,
    half: Vec<Complex64>,
    /// How many past levels `previous`/`older` hold (0 to 2).
    history: usize,
    last_solve: SolveStats,
}

impl Stepper {
    pub fn new(grid: Grid, config: SchemeConfig, gamma: Arc<Autocorrelation>) -> Result<Self> {
        Self::with_solver(grid, config, gamma, SolverConfig::default())
    }

    pub fn with_solver(
        grid: Grid,
        config: SchemeConfig,
        gamma: Arc<Autocorrelation>,
        solver_config: SolverConfig,
    ) -> Result<Self> {
        config.validate()?;
        ensure(gamma.n() == grid.n(), || {
            Error::Configuration(format!("autocorrelation built for N = {}, grid has N = {}", gamma.n(), grid.n()))
        })?;
        let laplacian = Arc::new(HyperbolicLaplacian::for_grid(&grid)?);
        let solver = StepSolver::new(laplacian.clone(), 0.5 * config.p * config.tau, solver_config);
        let n = grid.n();
        Ok(Self {
            grid,
            config,
            gamma,
            laplacian,
            solver,
            solver_config,
            previous: ComplexField::zeros(n),
            older: vec![Complex64::default(); n * n],
            phi_half: RealField::zeros(n),
            half: vec![Complex64::default(); n * n],
            history: 0,
            last_solve: SolveStats::default(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn gamma(&self) -> &Arc<Autocorrelation> {
        &self.gamma
    }

    pub fn laplacian(&self) -> &Arc<HyperbolicLaplacian> {
        &self.laplacian
    }

    /// `Uⁿ` of the most recent step.
    pub fn previous(&self) -> Option<&ComplexField> {
        (self.history > 0).then_some(&self.previous)
    }

    pub fn last_solve(&self) -> SolveStats {
        self.last_solve
    }

    /// Validates `U⁰` and builds `Φ^{−1/2}` according to the configured mode.
    pub fn initial_state(&mut self, u0: ComplexField) -> Result<State> {
        ensure(u0.n() == self.grid.n(), || {
            Error::Configuration(format!("initial field has N = {}, grid has N = {}", u0.n(), self.grid.n()))
        })?;
        validate_initial_field(&u0)?;
        let phi = match self.config.init_mode {
            InitMode::Naive => init_phi_naive(&u0)?,
            InitMode::Advanced => {
                init_phi_advanced(&u0, &self.laplacian, &self.config, &self.gamma, self.solver_config)?
            }
        };
        self.history = 0;
        Ok(State { u: u0, phi, step: 0, t: 0.0 })
    }

    /// Advances `state` by one step. On failure `state` is left untouched.
    pub fn advance(&mut self, state: &mut State) -> Result<SolveStats> {
        let n = self.grid.n();
        let diag = real_diagonal(&state.u);
        {
            let phi_new = self.phi_half.as_mut_slice();
            let phi_old = state.phi.as_slice();
            for i in 0..n {
                for j in 0..n {
                    let k = i * n + j;
                    phi_new[k] = 2.0 * (diag[i] - diag[j]) - phi_old[k];
                }
            }
        }
        let beta = 0.5 * self.config.q * self.config.tau;
        let rhs = background_source(&state.u, &self.phi_half, &self.gamma, beta);

        // Initial guess for U^{n+1/2}: extrapolation from the stored levels.
        let current = state.u.as_slice();
        match self.history {
            0 => self.half.copy_from_slice(current),
            1 => {
                for ((h, &c), &p) in self.half.iter_mut().zip(current).zip(self.previous.as_slice()) {
                    *h = 1.5 * c - 0.5 * p;
                }
            }
            _ => {
                let levels = current.iter().zip(self.previous.as_slice()).zip(&self.older);
                for (h, ((&c, &p), &o)) in self.half.iter_mut().zip(levels) {
                    *h = 1.875 * c - 1.25 * p + 0.375 * o;
                }
            }
        }
        let phi = match self.config.dynamics {
            Dynamics::Full => Some(self.phi_half.as_slice()),
            Dynamics::Linearized => None,
        };
        let stats = self
            .solver
            .solve(beta, phi, &rhs, &mut self.half)
            .map_err(|e| Error::Step { step: state.step, source: Box::new(e) })?;

        if self.history > 0 {
            self.older.copy_from_slice(self.previous.as_slice());
        }
        std::mem::swap(&mut self.previous, &mut state.u);
        let prev = self.previous.as_slice();
        let next: Vec<Complex64> = self.half.iter().zip(prev).map(|(h, p)| 2.0 * h - p).collect();
        if !next.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            std::mem::swap(&mut self.previous, &mut state.u);
            self.history = 0;
            return Err(Error::Step {
                step: state.step,
                source: Box::new(Error::Validation("non-finite field after update".into())),
            });
        }
        state.u = ComplexField::from_vec(n, next)?;
        std::mem::swap(&mut state.phi, &mut self.phi_half);
        state.step += 1;
        state.t = state.step as f64 * self.config.tau;
        self.history = (self.history + 1).min(2);
        self.last_solve = stats;
        Ok(stats)
    }
}

/// Runs the configured number of steps, notifying observers.
///
/// On error `state` holds the last successfully computed step, so callers can
/// persist it.
pub fn evolve(stepper: &mut Stepper, state: &mut State, observers: &mut [&mut dyn Observer]) -> Result<()> {
    let total = state.step + stepper.config().num_steps();
    for obs in observers.iter_mut() {
        obs.observe(&StepEvent { previous: None, state, solve: SolveStats::default() })?;
    }
    while state.step < total {
        let stats = stepper.advance(state)?;
        let last = state.step == total;
        for obs in observers.iter_mut() {
            let stride = obs.stride().max(1);
            if last || state.step.is_multiple_of(stride) {
                obs.observe(&StepEvent { previous: stepper.previous(), state, solve: stats })?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{gaussian_gamma, GaussianSpectrumParams};

    fn config(init_mode: InitMode, dynamics: Dynamics, tau: f64, final_time: f64) -> SchemeConfig {
        SchemeConfig { p: 1.0, q: 1.0, tau, final_time, init_mode, dynamics }
    }

    #[test]
    fn step_count_rule() {
        let mut cfg = config(InitMode::Naive, Dynamics::Full, 0.03, 0.6);
        assert_eq!(cfg.num_steps(), 20);
        cfg.tau = 0.03 / 2f64.sqrt();
        assert_eq!(cfg.num_steps(), 29);
        cfg.tau = 1e-3;
        cfg.final_time = 16.0;
        assert_eq!(cfg.num_steps(), 16000);
        cfg.final_time = 0.0;
        assert_eq!(cfg.num_steps(), 0);
        cfg.final_time = cfg.tau;
        assert_eq!(cfg.num_steps(), 1);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(config(InitMode::Naive, Dynamics::Full, 0.0, 1.0).validate().is_err());
        assert!(config(InitMode::Naive, Dynamics::Full, 0.1, -1.0).validate().is_err());
        let mut cfg = config(InitMode::Naive, Dynamics::Full, 0.1, 1.0);
        cfg.p = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn reference_inhomogeneity_norms() {
        let grid = Grid::from_spacing(50.0, 0.09).unwrap();
        let u0 = InitialInhomogeneity::reference().field(&grid);
        assert!(u0.hermitian_defect() == 0.0);
        let l2 = u0.l2_norm(grid.h());
        let linf = u0.max_abs();
        assert!((l2 - 0.31).abs() < 0.01, "L2 {l2}");
        assert!((linf - 0.07).abs() < 0.005, "Linf {linf}");
    }

    #[test]
    fn plain_envelope_when_coefficients_vanish() {
        let grid = Grid::new(50, 50.0).unwrap();
        let zero = Complex64::default();
        let u0 = InitialInhomogeneity::with_coefficients(zero, zero, zero).field(&grid);
        assert!(u0.as_slice().iter().all(|z| z.im == 0.0));
        assert_eq!(u0.get(25, 25).re, 0.05);
        assert_eq!(u0.max_abs(), 0.05);
    }

    #[test]
    fn naive_phi_examples() {
        let n = 6;
        assert_eq!(init_phi_naive(&ComplexField::zeros(n)).unwrap(), RealField::zeros(n));
        let flat = ComplexField::from_fn(n, |i, j| if i == j { Complex64::new(0.4, 0.0) } else { Complex64::new(0.1, (i + j) as f64) });
        assert_eq!(init_phi_naive(&flat).unwrap(), RealField::zeros(n));
        let bad = ComplexField::from_fn(n, |i, j| if i == j { Complex64::new(1.0, 0.5) } else { Complex64::default() });
        assert!(matches!(init_phi_naive(&bad), Err(Error::Validation(_))));
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let grid = Grid::new(32, 50.0).unwrap();
        let gamma = Arc::new(gaussian_gamma(GaussianSpectrumParams::new(1.9, 0.36).unwrap(), &grid).unwrap());
        for mode in [InitMode::Naive, InitMode::Advanced] {
            let mut stepper = Stepper::new(grid, config(mode, Dynamics::Full, 0.01, 0.05), gamma.clone()).unwrap();
            let mut state = stepper.initial_state(ComplexField::zeros(32)).unwrap();
            evolve(&mut stepper, &mut state, &mut []).unwrap();
            assert_eq!(state.step, 5);
            assert!(state.u.as_slice().iter().all(|z| *z == Complex64::default()));
            assert!(state.phi.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn one_step_when_final_time_equals_tau() {
        let grid = Grid::new(16, 30.0).unwrap();
        let gamma = Arc::new(Autocorrelation::zero(&grid));
        let mut stepper = Stepper::new(grid, config(InitMode::Naive, Dynamics::Full, 0.01, 0.01), gamma).unwrap();
        let u0 = InitialInhomogeneity::reference().field(&grid);
        let mut state = stepper.initial_state(u0).unwrap();
        evolve(&mut stepper, &mut state, &mut []).unwrap();
        assert_eq!(state.step, 1);
        assert!((state.t - 0.01).abs() < 1e-16);
    }

    #[test]
    fn phi_stays_exactly_antisymmetric() {
        let grid = Grid::new(24, 40.0).unwrap();
        let gamma = Arc::new(gaussian_gamma(GaussianSpectrumParams::new(1.5, 0.36).unwrap(), &grid).unwrap());
        let mut stepper = Stepper::new(grid, config(InitMode::Advanced, Dynamics::Full, 0.02, 0.2), gamma).unwrap();
        let mut state = stepper.initial_state(InitialInhomogeneity::reference().field(&grid)).unwrap();
        assert_eq!(state.phi.antisymmetry_defect(), 0.0);
        for _ in 0..10 {
            stepper.advance(&mut state).unwrap();
            assert_eq!(state.phi.antisymmetry_defect(), 0.0);
            assert!(state.u.hermitian_defect() <= 1e-10 * state.u.max_abs() * state.step as f64);
        }
    }

    #[test]
    fn mass_is_conserved_without_background() {
        let grid = Grid::new(24, 40.0).unwrap();
        let gamma = Arc::new(Autocorrelation::zero(&grid));
        let mut stepper = Stepper::new(grid, config(InitMode::Naive, Dynamics::Full, 0.05, 1.0), gamma).unwrap();
        let mut state = stepper.initial_state(InitialInhomogeneity::reference().field(&grid).into_scaled(10.0)).unwrap();
        let m0 = state.u.l2_norm(grid.h());
        evolve(&mut stepper, &mut state, &mut []).unwrap();
        let m1 = state.u.l2_norm(grid.h());
        assert!((m1 - m0).abs() <= 1e-13 * m0, "{m0} -> {m1}");
    }

    #[test]
    fn advanced_init_approaches_naive_as_tau_vanishes() {
        let grid = Grid::new(20, 40.0).unwrap();
        let gamma = Arc::new(gaussian_gamma(GaussianSpectrumParams::new(1.2, 0.36).unwrap(), &grid).unwrap());
        let u0 = InitialInhomogeneity::reference().field(&grid);
        let naive = init_phi_naive(&u0).unwrap();
        let lap = Arc::new(HyperbolicLaplacian::for_grid(&grid).unwrap());
        let diff = |tau: f64| {
            let cfg = config(InitMode::Advanced, Dynamics::Full, tau, 1.0);
            let adv = init_phi_advanced(&u0, &lap, &cfg, &gamma, SolverConfig::default()).unwrap();
            adv.as_slice().iter().zip(naive.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let (d1, d2) = (diff(1e-5), diff(1e-6));
        assert!(d2 < 1e-6 * naive.max_abs().max(1e-3));
        assert!((d1 / d2 - 10.0).abs() < 1.0, "ratio {}", d1 / d2);
    }

    #[test]
    fn failed_step_keeps_last_good_state() {
        let grid = Grid::new(16, 20.0).unwrap();
        let gamma = Arc::new(Autocorrelation::zero(&grid));
        let strict = SolverConfig { max_iter: 1, max_refinements: 1, ..SolverConfig::default() };
        let cfg = config(InitMode::Naive, Dynamics::Full, 0.5, 5.0);
        let mut stepper = Stepper::with_solver(grid, cfg, gamma, strict).unwrap();
        let u0 = InitialInhomogeneity::reference().field(&grid).into_scaled(400.0);
        let mut state = stepper.initial_state(u0).unwrap();
        let before = state.clone();
        let err = stepper.advance(&mut state).unwrap_err();
        assert!(matches!(err, Error::Step { step: 0, .. }));
        assert_eq!(state, before);
    }
}
