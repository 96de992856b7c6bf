//! Monitored quantities: invariants, the discrete mass balance, the
//! constraint error, norms and amplification factors.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::grid::{ComplexField, Grid, RealField};
use crate::operators::FirstDifference;
use crate::scheme::{Observer, StepEvent};
use crate::spectra::Autocorrelation;

/// `I₀ = h² Σ |Γ(x_i − y_j) + U_ij|²`.
pub fn invariant_i0(u: &ComplexField, gamma: &Autocorrelation, h: f64) -> f64 {
    let n = u.n();
    let table = gamma.table();
    let mut sum = 0.0;
    for i in 0..n {
        let row = &u.as_slice()[i * n..(i + 1) * n];
        for (j, z) in row.iter().enumerate() {
            let g = table[if i >= j { i - j } else { i + n - j }];
            sum += (z + g).norm_sqr();
        }
    }
    h * h * sum
}

/// `I₁ = h Σ U_ii`; the imaginary part is a health metric.
pub fn invariant_i1(u: &ComplexField, h: f64) -> Complex64 {
    h * (0..u.n()).map(|i| u.get(i, i)).sum::<Complex64>()
}

#[inline]
fn shifted(i: usize, offset: isize, n: usize) -> usize {
    (i as isize + offset).rem_euclid(n as isize) as usize
}

/// `I₂ = h Σ_i [(D_x U)_ii − (D_y U)_ii]` with the 4th-order first difference.
pub fn invariant_i2(u: &ComplexField, d1: &FirstDifference, h: f64) -> Complex64 {
    let n = u.n();
    let mut sum = Complex64::default();
    for i in 0..n {
        for &(o, w) in d1.weights() {
            let k = shifted(i, o, n);
            sum += w * (u.get(k, i) - u.get(i, k));
        }
    }
    h * sum
}

/// `I₃ = (q/p) h Σ U_ii² + h Σ [(D_x − D_y)² U]_ii`.
pub fn invariant_i3(u: &ComplexField, d1: &FirstDifference, p: f64, q: f64, h: f64) -> Result<Complex64> {
    ensure(p != 0.0, || Error::Parameter("I3 needs p != 0".into()))?;
    let n = u.n();
    let mut square = Complex64::default();
    let mut second = Complex64::default();
    for i in 0..n {
        let d = u.get(i, i);
        square += d * d;
        for &(a, wa) in d1.weights() {
            for &(b, wb) in d1.weights() {
                let w = wa * wb;
                let xx = u.get(shifted(i, a + b, n), i);
                let yy = u.get(i, shifted(i, a + b, n));
                let xy = u.get(shifted(i, a, n), shifted(i, b, n));
                second += w * (xx + yy - 2.0 * xy);
            }
        }
    }
    Ok(q / p * h * square + h * second)
}

/// All four invariants at one time level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Invariants {
    pub i0: f64,
    pub i1: Complex64,
    pub i2: Complex64,
    pub i3: Complex64,
}

impl Invariants {
    pub fn compute(u: &ComplexField, gamma: &Autocorrelation, d1: &FirstDifference, p: f64, q: f64, h: f64) -> Result<Self> {
        Ok(Self {
            i0: invariant_i0(u, gamma, h),
            i1: invariant_i1(u, h),
            i2: invariant_i2(u, d1, h),
            i3: invariant_i3(u, d1, p, q, h)?,
        })
    }

    /// Relative drifts `|I_j − I_j⁰| / |I_j⁰|` (absolute when `I_j⁰ = 0`).
    pub fn drift_from(&self, initial: &Invariants) -> InvariantDrift {
        InvariantDrift {
            i0: relative_drift(Complex64::from(initial.i0), Complex64::from(self.i0)),
            i1: relative_drift(initial.i1, self.i1),
            i2: relative_drift(initial.i2, self.i2),
            i3: relative_drift(initial.i3, self.i3),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantDrift {
    pub i0: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
}

impl InvariantDrift {
    pub fn max(&self, other: &InvariantDrift) -> InvariantDrift {
        InvariantDrift {
            i0: self.i0.max(other.i0),
            i1: self.i1.max(other.i1),
            i2: self.i2.max(other.i2),
            i3: self.i3.max(other.i3),
        }
    }
}

pub fn relative_drift(initial: Complex64, current: Complex64) -> f64 {
    let diff = (current - initial).norm();
    let scale = initial.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Discrete mass `h² Σ |U|²`.
pub fn mass(u: &ComplexField, h: f64) -> f64 {
    h * h * u.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// `|(𝓜ⁿ⁺¹ − 𝓜ⁿ)/τ − 2 Re[i q h² Σ Φ Γ conj(U^{n+1/2})]|`.
pub fn balance_residual(
    un: &ComplexField,
    un1: &ComplexField,
    phi_half: &RealField,
    gamma: &Autocorrelation,
    q: f64,
    tau: f64,
    h: f64,
) -> f64 {
    let n = un.n();
    let table = gamma.table();
    let mut source = Complex64::default();
    if !gamma.is_zero() {
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                let g = table[if i >= j { i - j } else { i + n - j }];
                let half = 0.5 * (un.as_slice()[k] + un1.as_slice()[k]);
                source += phi_half.as_slice()[k] * g * half.conj();
            }
        }
    }
    let rhs = 2.0 * (Complex64::new(0.0, q) * h * h * source).re;
    ((mass(un1, h) - mass(un, h)) / tau - rhs).abs()
}

/// `max_ij |½(Uⁿ⁺¹_ii − Uⁿ⁺¹_jj + Uⁿ_ii − Uⁿ_jj) − Φ^{n+1/2}_ij|`: how well the
/// auxiliary field interpolates the trace differences at the two adjacent levels.
pub fn constraint_error(un: &ComplexField, un1: &ComplexField, phi_half: &RealField) -> f64 {
    let n = un.n();
    let mid: Vec<f64> = (0..n).map(|i| 0.5 * (un1.get(i, i).re + un.get(i, i).re)).collect();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((mid[i] - mid[j] - phi_half.get(i, j)).abs());
        }
    }
    worst
}

/// One row of the per-step diagnostics table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub l2_norm: f64,
    pub linf_norm: f64,
    pub invariants: Invariants,
    pub balance_residual: f64,
    pub constraint_error: f64,
    pub hermitian_drift: f64,
    pub diag_imag_max: f64,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: &'static str =
        "t,L2,Linf,I0,I1re,I1im,I2re,I2im,I3re,I3im,balance_res,constraint_err,herm_drift,diag_imag";

    pub fn csv_row(&self) -> String {
        let v = &self.invariants;
        format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.t,
            self.l2_norm,
            self.linf_norm,
            v.i0,
            v.i1.re,
            v.i1.im,
            v.i2.re,
            v.i2.im,
            v.i3.re,
            v.i3.im,
            self.balance_residual,
            self.constraint_error,
            self.hermitian_drift,
            self.diag_imag_max
        )
    }

    pub fn is_finite(&self) -> bool {
        let v = &self.invariants;
        [
            self.t,
            self.l2_norm,
            self.linf_norm,
            v.i0,
            v.i1.re,
            v.i1.im,
            v.i2.re,
            v.i2.im,
            v.i3.re,
            v.i3.im,
            self.balance_residual,
            self.constraint_error,
            self.hermitian_drift,
            self.diag_imag_max,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

/// Computes a [`DiagnosticsRecord`] at every observed step and tracks invariant drift.
pub struct DiagnosticsObserver<'a> {
    grid: Grid,
    gamma: &'a Autocorrelation,
    d1: FirstDifference,
    p: f64,
    q: f64,
    tau: f64,
    stride: usize,
    keep_records: bool,
    sink: Option<Box<dyn Write + 'a>>,
    initial: Option<Invariants>,
    last: Option<DiagnosticsRecord>,
    max_drift: InvariantDrift,
    max_balance_ratio: f64,
    records: Vec<DiagnosticsRecord>,
}

impl<'a> DiagnosticsObserver<'a> {
    pub fn new(grid: Grid, gamma: &'a Autocorrelation, p: f64, q: f64, tau: f64) -> Result<Self> {
        Ok(Self {
            grid,
            gamma,
            d1: FirstDifference::for_grid(&grid)?,
            p,
            q,
            tau,
            stride: 1,
            keep_records: true,
            sink: None,
            initial: None,
            last: None,
            max_drift: InvariantDrift::default(),
            max_balance_ratio: 0.0,
            records: Vec::new(),
        })
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    /// Drop per-step records after processing (drift statistics are still kept).
    pub fn discard_records(mut self) -> Self {
        self.keep_records = false;
        self
    }

    /// Stream CSV rows (header first) to `sink`.
    pub fn with_csv(mut self, mut sink: Box<dyn Write + 'a>) -> Result<Self> {
        writeln!(sink, "{}", DiagnosticsRecord::CSV_HEADER)?;
        self.sink = Some(sink);
        Ok(self)
    }

    pub fn records(&self) -> &[DiagnosticsRecord] {
        &self.records
    }

    pub fn initial_invariants(&self) -> Option<Invariants> {
        self.initial
    }

    pub fn last(&self) -> Option<&DiagnosticsRecord> {
        self.last.as_ref()
    }

    /// Drift at the last observed step.
    pub fn final_drift(&self) -> InvariantDrift {
        match (self.initial, self.last) {
            (Some(init), Some(last)) => last.invariants.drift_from(&init),
            _ => InvariantDrift::default(),
        }
    }

    /// Largest drift over all observed steps.
    pub fn max_drift(&self) -> InvariantDrift {
        self.max_drift
    }

    /// Largest `balance_residual · τ / max(𝓜ⁿ, 1)` seen.
    pub fn max_balance_ratio(&self) -> f64 {
        self.max_balance_ratio
    }

    pub fn flush(&mut self) -> Result<()> {
        if let Some(sink) = self.sink.as_mut() {
            sink.flush()?;
        }
        Ok(())
    }
}

impl Observer for DiagnosticsObserver<'_> {
    fn stride(&self) -> usize {
        self.stride
    }

    fn observe(&mut self, event: &StepEvent<'_>) -> Result<()> {
        let h = self.grid.h();
        let u = &event.state.u;
        let invariants = Invariants::compute(u, self.gamma, &self.d1, self.p, self.q, h)?;
        let (balance, constraint) = match event.previous {
            Some(prev) => {
                let b = balance_residual(prev, u, &event.state.phi, self.gamma, self.q, self.tau, h);
                let scale = mass(prev, h).max(1.0);
                self.max_balance_ratio = self.max_balance_ratio.max(b * self.tau / scale);
                (b, constraint_error(prev, u, &event.state.phi))
            }
            None => (0.0, 0.0),
        };
        let record = DiagnosticsRecord {
            step: event.state.step,
            t: event.state.t,
            l2_norm: u.l2_norm(h),
            linf_norm: u.max_abs(),
            invariants,
            balance_residual: balance,
            constraint_error: constraint,
            hermitian_drift: u.hermitian_defect(),
            diag_imag_max: u.diagonal_imag_max(),
        };
        let initial = *self.initial.get_or_insert(invariants);
        self.max_drift = self.max_drift.max(&invariants.drift_from(&initial));
        if let Some(sink) = self.sink.as_mut() {
            writeln!(sink, "{}", record.csv_row())?;
        }
        self.last = Some(record);
        if self.keep_records {
            self.records.push(record);
        }
        Ok(())
    }
}

/// Peak-amplitude summary of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplificationReport {
    /// `max_t ‖u‖_∞ / ‖u₀‖_∞`.
    pub iaf: f64,
    /// `max_t ‖u + Γ‖_∞ / Γ(0)`.
    pub taf: f64,
    pub max_u_inf: f64,
    pub max_total_inf: f64,
    pub u0_inf: f64,
    pub gamma0: f64,
    pub t_at_max: f64,
    /// Steps between the field samples the maxima were taken over.
    pub sample_stride: usize,
}

impl AmplificationReport {
    pub fn new(
        max_u_inf: f64,
        max_total_inf: f64,
        u0_inf: f64,
        gamma0: f64,
        t_at_max: f64,
        sample_stride: usize,
    ) -> Result<Self> {
        ensure(u0_inf > 0.0 && u0_inf.is_finite(), || {
            Error::Configuration("IAF undefined: initial inhomogeneity vanishes".into())
        })?;
        ensure(gamma0 > 0.0 && gamma0.is_finite(), || {
            Error::Configuration("TAF undefined: background autocorrelation vanishes at 0".into())
        })?;
        Ok(Self {
            iaf: max_u_inf / u0_inf,
            taf: max_total_inf / gamma0,
            max_u_inf,
            max_total_inf,
            u0_inf,
            gamma0,
            t_at_max,
            sample_stride,
        })
    }

    /// Triangle-inequality bounds `[|1 − r|, 1 + r]` with `r = IAF·‖u₀‖_∞/Γ(0)`.
    pub fn taf_bounds(&self) -> (f64, f64) {
        let r = self.iaf * self.u0_inf / self.gamma0;
        ((1.0 - r).abs(), 1.0 + r)
    }

    pub fn satisfies_triangle_bounds(&self) -> bool {
        let (lo, hi) = self.taf_bounds();
        let slack = 1e-12 * hi;
        self.taf >= lo - slack && self.taf <= hi + slack
    }
}

/// Running maxima of `|u|` and `|u + Γ|` over sampled steps.
pub struct AmplificationTracker<'a> {
    gamma: &'a Autocorrelation,
    stride: usize,
    u0_inf: Option<f64>,
    max_u: f64,
    max_total: f64,
    t_at_max: f64,
    history: Vec<(f64, f64)>,
}

impl<'a> AmplificationTracker<'a> {
    pub fn new(gamma: &'a Autocorrelation) -> Self {
        Self { gamma, stride: 1, u0_inf: None, max_u: 0.0, max_total: 0.0, t_at_max: 0.0, history: Vec::new() }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    /// `(t, ‖u‖_∞)` at each sampled step.
    pub fn history(&self) -> &[(f64, f64)] {
        &self.history
    }

    pub fn sample(&mut self, t: f64, u: &ComplexField) {
        let n = u.n();
        let table = self.gamma.table();
        let mut peak_u = 0.0f64;
        let mut peak_total = 0.0f64;
        for i in 0..n {
            let row = &u.as_slice()[i * n..(i + 1) * n];
            for (j, z) in row.iter().enumerate() {
                let g = table[if i >= j { i - j } else { i + n - j }];
                peak_u = peak_u.max(z.norm_sqr());
                peak_total = peak_total.max((z + g).norm_sqr());
            }
        }
        let (peak_u, peak_total) = (peak_u.sqrt(), peak_total.sqrt());
        self.u0_inf.get_or_insert(peak_u);
        if peak_u > self.max_u {
            self.max_u = peak_u;
            self.t_at_max = t;
        }
        self.max_total = self.max_total.max(peak_total);
        self.history.push((t, peak_u));
    }

    pub fn report(&self) -> Result<AmplificationReport> {
        let u0 = self.u0_inf.ok_or_else(|| Error::Configuration("no field samples were recorded".into()))?;
        AmplificationReport::new(self.max_u, self.max_total, u0, self.gamma.gamma0(), self.t_at_max, self.stride)
    }
}

impl Observer for AmplificationTracker<'_> {
    fn stride(&self) -> usize {
        self.stride
    }

    fn observe(&mut self, event: &StepEvent<'_>) -> Result<()> {
        self.sample(event.state.t, &event.state.u);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use super::*;
    use crate::scheme::{evolve, Dynamics, InitMode, InitialInhomogeneity, SchemeConfig, State, Stepper};
    use crate::spectra::{gaussian_gamma, GaussianSpectrumParams};

    fn gaussian(grid: &Grid, c: f64) -> Autocorrelation {
        gaussian_gamma(GaussianSpectrumParams::new(c, 0.36).unwrap(), grid).unwrap()
    }

    #[test]
    fn zero_field_invariants() {
        let grid = Grid::new(16, 50.0).unwrap();
        let zero = ComplexField::zeros(16);
        let d1 = FirstDifference::for_grid(&grid).unwrap();
        let inv = Invariants::compute(&zero, &Autocorrelation::zero(&grid), &d1, 1.0, 1.0, grid.h()).unwrap();
        assert_eq!(inv, Invariants::default());
        assert!(invariant_i3(&zero, &d1, 0.0, 1.0, grid.h()).is_err());
    }

    #[test]
    fn background_only_i0_collapses_to_difference_sum() {
        let grid = Grid::new(100, 50.0).unwrap();
        let gamma = gaussian(&grid, 1.3);
        let h = grid.h();
        let direct = invariant_i0(&ComplexField::zeros(100), &gamma, h);
        // Each index difference occurs N times.
        let collapsed = h * grid.length() * gamma.table().iter().map(|g| g * g).sum::<f64>();
        assert!((direct - collapsed).abs() < 1e-12 * collapsed);
        // Continuum value L ∫ Γ² = L C⁴ / (σ √2).
        let continuum = 50.0 * 1.3f64.powi(4) / (0.36 * 2f64.sqrt());
        assert!((direct - continuum).abs() < 1e-9 * continuum);
    }

    #[test]
    fn i2_vanishes_for_real_symmetric_fields() {
        let grid = Grid::new(40, 20.0).unwrap();
        let xs = grid.coords();
        let u = ComplexField::from_fn(40, |i, j| Complex64::new((-(xs[i] * xs[i] + xs[j] * xs[j]) / 8.0).exp() * (1.0 + 0.2 * xs[i] * xs[j]), 0.0));
        let d1 = FirstDifference::for_grid(&grid).unwrap();
        assert!(invariant_i2(&u, &d1, grid.h()).norm() < 1e-12);
    }

    #[test]
    fn i1_is_real_for_hermitian_fields() {
        let grid = Grid::new(30, 20.0).unwrap();
        let u = InitialInhomogeneity::reference().field(&grid);
        assert!(invariant_i1(&u, grid.h()).im.abs() <= 1e-12 * u.max_abs());
    }

    #[test]
    fn i2_and_i3_match_plane_wave_values() {
        // u = e^{i κ (x − y)} g(x) g(y): (∂x − ∂y)u|_{y=x} = 2iκ g², (∂x − ∂y)²u|_{y=x} = −4κ² g² + 2(g g'' − g'²).
        let l = 40.0;
        let grid = Grid::new(400, l).unwrap();
        let xs = grid.coords();
        let kappa = 2.0 * PI * 3.0 / l;
        let g = |x: f64| (-x * x / 4.0).exp();
        let u = ComplexField::from_fn(400, |i, j| Complex64::from_polar(g(xs[i]) * g(xs[j]), kappa * (xs[i] - xs[j])));
        let d1 = FirstDifference::for_grid(&grid).unwrap();
        let h = grid.h();
        // ∫ g² = √(2π), ∫ g g'' − g'² = −2 ∫ g'² = −2 · √(2π)/4
        let s = (2.0 * PI).sqrt();
        let i2 = invariant_i2(&u, &d1, h);
        assert!((i2 - Complex64::new(0.0, 2.0 * kappa * s)).norm() < 1e-4, "{i2} vs {}", 2.0 * kappa * s);
        let (p, q) = (1.0, 0.0);
        let i3 = invariant_i3(&u, &d1, p, q, h).unwrap();
        let expected = -4.0 * kappa * kappa * s - s;
        assert!((i3.re - expected).abs() < 1e-4 * expected.abs(), "{} vs {expected}", i3.re);
    }

    /// Straightforward re-implementation of the constraint error from raw arrays.
    fn constraint_error_oracle(un: &[Complex64], un1: &[Complex64], phi: &[f64], n: usize) -> f64 {
        let mut best = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let v = 0.5 * (un1[i * n + i].re - un1[j * n + j].re + un[i * n + i].re - un[j * n + j].re) - phi[i * n + j];
                if v.abs() > best {
                    best = v.abs();
                }
            }
        }
        best
    }

    #[test]
    fn constraint_error_matches_oracle_on_hand_stepped_run() {
        let grid = Grid::new(8, 12.0).unwrap();
        let gamma = Arc::new(Autocorrelation::zero(&grid));
        let cfg = SchemeConfig { p: 1.0, q: 1.0, tau: 0.05, final_time: 0.1, init_mode: InitMode::Naive, dynamics: Dynamics::Full };
        let mut stepper = Stepper::new(grid, cfg, gamma).unwrap();
        let u0 = InitialInhomogeneity::reference().field(&grid).into_scaled(20.0);
        let mut state = stepper.initial_state(u0).unwrap();
        for _ in 0..2 {
            let before = state.u.clone();
            stepper.advance(&mut state).unwrap();
            let ours = constraint_error(&before, &state.u, &state.phi);
            let oracle = constraint_error_oracle(before.as_slice(), state.u.as_slice(), state.phi.as_slice(), 8);
            assert_eq!(ours, oracle);
            assert!(ours > 0.0);
        }
        assert_eq!(constraint_error(&ComplexField::zeros(8), &ComplexField::zeros(8), &RealField::zeros(8)), 0.0);
    }

    #[test]
    fn balance_law_holds_per_step() {
        let grid = Grid::new(48, 50.0).unwrap();
        let gamma = Arc::new(gaussian(&grid, 1.9));
        for dynamics in [Dynamics::Full, Dynamics::Linearized] {
            let cfg = SchemeConfig { p: 1.0, q: 1.0, tau: 0.01, final_time: 0.2, init_mode: InitMode::Advanced, dynamics };
            let mut stepper = Stepper::new(grid, cfg, gamma.clone()).unwrap();
            let mut state = stepper.initial_state(InitialInhomogeneity::reference().field(&grid)).unwrap();
            let mut diag = DiagnosticsObserver::new(grid, &gamma, 1.0, 1.0, 0.01).unwrap();
            evolve(&mut stepper, &mut state, &mut [&mut diag]).unwrap();
            assert_eq!(diag.records().len(), 21);
            for r in diag.records() {
                assert!(r.balance_residual <= 1e-10, "{}", r.balance_residual);
                assert!(r.is_finite());
            }
            // The linearized flow keeps the balance law but not I₀.
            if dynamics == Dynamics::Full {
                assert!(diag.final_drift().i0 <= 1e-13, "{:?}", diag.final_drift());
            }
            assert!(diag.final_drift().i1 <= 1e-13);
        }
    }

    #[test]
    fn zero_states_give_zero_balance_residual() {
        let grid = Grid::new(10, 50.0).unwrap();
        let gamma = gaussian(&grid, 1.0);
        let z = ComplexField::zeros(10);
        assert_eq!(balance_residual(&z, &z, &RealField::zeros(10), &gamma, 1.0, 0.1, grid.h()), 0.0);
    }

    #[test]
    fn frozen_state_has_unit_amplification() {
        let grid = Grid::new(50, 50.0).unwrap();
        let gamma = gaussian(&grid, 1.0);
        // Inhomogeneity far from the diagonal, where the background is negligible.
        let u = ComplexField::from_fn(50, |i, j| if (i, j) == (0, 25) || (i, j) == (25, 0) { Complex64::new(0.3, 0.0) } else { Complex64::default() });
        let mut tracker = AmplificationTracker::new(&gamma);
        for k in 0..5 {
            tracker.sample(k as f64, &u);
        }
        let report = tracker.report().unwrap();
        assert_eq!(report.iaf, 1.0);
        assert_eq!(report.taf, 1.0);
        assert!(report.satisfies_triangle_bounds());

        let mut empty = AmplificationTracker::new(&gamma);
        empty.sample(0.0, &ComplexField::zeros(50));
        assert!(matches!(empty.report(), Err(Error::Configuration(_))));
    }

    #[test]
    fn csv_row_has_fixed_columns() {
        let rec = DiagnosticsRecord {
            step: 0,
            t: 0.5,
            l2_norm: 1.0,
            linf_norm: 2.0,
            invariants: Invariants::default(),
            balance_residual: 0.0,
            constraint_error: 0.0,
            hermitian_drift: 0.0,
            diag_imag_max: 0.0,
        };
        assert_eq!(rec.csv_row().split(',').count(), DiagnosticsRecord::CSV_HEADER.split(',').count());
        assert!(DiagnosticsRecord::CSV_HEADER.starts_with("t,L2,Linf,I0"));
    }

    #[test]
    fn zero_run_state_is_stationary() {
        let grid = Grid::new(12, 50.0).unwrap();
        let st = State { u: ComplexField::zeros(12), phi: RealField::zeros(12), step: 0, t: 0.0 };
        assert_eq!(constraint_error(&st.u, &st.u, &st.phi), 0.0);
        assert_eq!(mass(&st.u, grid.h()), 0.0);
    }
}
