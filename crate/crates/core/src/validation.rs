//! Exact soliton data, error norms, convergence orders and a Fourier-mode
//! reference integrator that shares no code with the finite-difference scheme.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::grid::{ComplexField, Grid, RealField};
use crate::scheme::{Dynamics, InitMode, Observer, SchemeConfig, State, StepEvent};
use crate::spectra::{wrap, Spectrum};

/// Largest admissible `sech(B L / 2)`: the soliton tail at the cell edge.
pub const SOLITON_TAIL_TOLERANCE: f64 = 1e-4;

/// Largest admissible relative coefficient mass outside the oracle cutoff.
pub const ORACLE_TRUNCATION_TOLERANCE: f64 = 1e-10;

/// Relative tolerance when checking that EOC rows share the non-refined parameter.
const SHARED_PARAMETER_TOLERANCE: f64 = 1e-9;

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

/// Bright soliton `u = A² sech(B w(x−vt)) sech(B w(y−vt)) e^{ik(x−y)}` for `Γ ≡ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub amplitude: f64,
    pub velocity: f64,
    pub p: f64,
    pub q: f64,
}

impl SolitonParams {
    pub fn new(amplitude: f64, velocity: f64, p: f64, q: f64) -> Result<Self> {
        let params = Self { amplitude, velocity, p, q };
        params.validate()?;
        Ok(params)
    }

    /// `A = 1.3`, `v = 3.1`, `p = 1.7`, `q = 1.1`.
    pub fn reference() -> Self {
        Self { amplitude: 1.3, velocity: 3.1, p: 1.7, q: 1.1 }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.amplitude, self.velocity, self.p, self.q].iter().all(|v| v.is_finite());
        ensure(finite, || Error::Parameter("soliton parameters must be finite".into()))?;
        ensure(self.p > 0.0 && self.q > 0.0, || {
            Error::Parameter(format!("soliton needs p > 0 and q > 0, got p = {}, q = {}", self.p, self.q))
        })?;
        ensure(self.amplitude > 0.0 && self.velocity > 0.0, || {
            Error::Parameter(format!(
                "soliton needs A > 0 and v > 0, got A = {}, v = {}",
                self.amplitude, self.velocity
            ))
        })?;
        let tail = sech(0.5 * self.b() * self.length());
        ensure(tail <= SOLITON_TAIL_TOLERANCE, || {
            Error::Parameter(format!(
                "soliton tail sech(BL/2) = {tail:.3e} exceeds {SOLITON_TAIL_TOLERANCE:.0e}; periodization is inconsistent"
            ))
        })
    }

    /// Carrier wavenumber `k = v / (2p)`.
    pub fn k(&self) -> f64 {
        self.velocity / (2.0 * self.p)
    }

    /// Inverse width `B = A √(q / (2p))`.
    pub fn b(&self) -> f64 {
        self.amplitude * (self.q / (2.0 * self.p)).sqrt()
    }

    /// Domain length `L = 10π / k`.
    pub fn length(&self) -> f64 {
        10.0 * PI / self.k()
    }

    /// Time for one lap of the domain, `L / v`.
    pub fn lap_time(&self) -> f64 {
        self.length() / self.velocity
    }

    pub fn grid(&self, spacing: f64) -> Result<Grid> {
        Grid::from_spacing(self.length(), spacing)
    }

    /// Full-dynamics scheme configuration for this soliton.
    pub fn scheme_config(&self, tau: f64, final_time: f64, init_mode: InitMode) -> SchemeConfig {
        SchemeConfig { p: self.p, q: self.q, tau, final_time, init_mode, dynamics: Dynamics::Full }
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        self.validate()?;
        let l = self.length();
        ensure((grid.length() - l).abs() <= 1e-12 * l, || {
            Error::Configuration(format!("grid length {} differs from soliton period {l}", grid.length()))
        })
    }

    /// `sech(B w(x_i − vt))` on the mesh.
    fn envelope(&self, grid: &Grid, t: f64) -> Vec<f64> {
        let (b, l) = (self.b(), self.length());
        grid.coords().iter().map(|&x| sech(b * wrap(x - self.velocity * t, l))).collect()
    }

    /// `a_i = A sech(B w(x_i − vt)) e^{ik x_i}`, so that `u_ij = a_i conj(a_j)`.
    fn profile(&self, grid: &Grid, t: f64) -> Vec<Complex64> {
        let k = self.k();
        self.envelope(grid, t)
            .into_iter()
            .zip(grid.coords())
            .map(|(s, x)| Complex64::from_polar(self.amplitude * s, k * x))
            .collect()
    }
}

/// The periodized soliton sampled on `grid` at time `t`.
pub fn soliton_exact(params: &SolitonParams, grid: &Grid, t: f64) -> Result<ComplexField> {
    params.check_grid(grid)?;
    let a = params.profile(grid, t);
    Ok(ComplexField::from_fn(grid.n(), |i, j| a[i] * a[j].conj()))
}

/// The trace difference `φ = u(x,x,t) − u(y,y,t)` of the soliton.
pub fn soliton_phi(params: &SolitonParams, grid: &Grid, t: f64) -> Result<RealField> {
    params.check_grid(grid)?;
    let a2 = params.amplitude * params.amplitude;
    let d: Vec<f64> = params.envelope(grid, t).iter().map(|s| a2 * s * s).collect();
    Ok(RealField::from_fn(grid.n(), |i, j| d[i] - d[j]))
}

/// Sup-norm errors of one state: `|Uⁿ − u(tⁿ)|` and `|Φ^{n−1/2} − φ(tⁿ − τ/2)|`.
pub fn state_errors(params: &SolitonParams, grid: &Grid, tau: f64, state: &State) -> Result<(f64, f64)> {
    params.check_grid(grid)?;
    ensure(state.n() == grid.n(), || {
        Error::Configuration(format!("state has N = {}, grid has N = {}", state.n(), grid.n()))
    })?;
    let n = grid.n();
    let a = params.profile(grid, state.t);
    let e_u = state
        .u
        .as_slice()
        .par_chunks(n)
        .zip(a.par_iter())
        .map(|(row, &ai)| row.iter().zip(&a).map(|(&z, &aj)| (z - ai * aj.conj()).norm()).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max);

    let a2 = params.amplitude * params.amplitude;
    let d: Vec<f64> = params.envelope(grid, state.t - 0.5 * tau).iter().map(|s| a2 * s * s).collect();
    let e_phi = state
        .phi
        .as_slice()
        .par_chunks(n)
        .zip(d.par_iter())
        .map(|(row, &di)| row.iter().zip(&d).map(|(&f, &dj)| (f - (di - dj)).abs()).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max);
    Ok((e_u, e_phi))
}

/// Tracks the max-in-time errors against the soliton over a run.
pub struct SolitonErrorObserver {
    params: SolitonParams,
    grid: Grid,
    tau: f64,
    e_u: f64,
    e_phi: f64,
    history: Vec<(f64, f64, f64)>,
    keep_history: bool,
}

impl SolitonErrorObserver {
    pub fn new(params: SolitonParams, grid: Grid, tau: f64) -> Result<Self> {
        params.check_grid(&grid)?;
        Ok(Self { params, grid, tau, e_u: 0.0, e_phi: 0.0, history: Vec::new(), keep_history: false })
    }

    /// Also record `(t, E_u(t), E_phi(t))` for every observed step.
    pub fn with_history(mut self) -> Self {
        self.keep_history = true;
        self
    }

    pub fn e_u(&self) -> f64 {
        self.e_u
    }

    pub fn e_phi(&self) -> f64 {
        self.e_phi
    }

    pub fn history(&self) -> &[(f64, f64, f64)] {
        &self.history
    }
}

impl Observer for SolitonErrorObserver {
    fn observe(&mut self, event: &StepEvent<'_>) -> Result<()> {
        let (e_u, e_phi) = state_errors(&self.params, &self.grid, self.tau, event.state)?;
        self.e_u = self.e_u.max(e_u);
        self.e_phi = self.e_phi.max(e_phi);
        if self.keep_history {
            self.history.push((event.state.t, e_u, e_phi));
        }
        Ok(())
    }
}

/// Which mesh parameter changes between consecutive rows of a convergence study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Refinement {
    Tau,
    H,
}

/// One run of a convergence study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EocRow {
    pub h: f64,
    pub tau: f64,
    pub e_u: f64,
    pub e_phi: f64,
    pub eoc_u: Option<f64>,
    pub eoc_phi: Option<f64>,
    /// `δI₀ + δI₁` at the final step.
    pub d_i01: f64,
    pub d_i2: f64,
    pub d_i3: f64,
}

impl EocRow {
    pub fn new(h: f64, tau: f64, e_u: f64, e_phi: f64) -> Self {
        Self { h, tau, e_u, e_phi, eoc_u: None, eoc_phi: None, d_i01: 0.0, d_i2: 0.0, d_i3: 0.0 }
    }

    pub const CSV_HEADER: &'static str = "h,tau,E_u,eoc_u,E_phi,eoc_phi,dI0+dI1,dI2,dI3";

    pub fn csv_row(&self) -> String {
        let order = |o: Option<f64>| o.map_or_else(String::new, |v| format!("{v:.5}"));
        format!(
            "{:.6},{:.6},{:.5e},{},{:.5e},{},{:.3e},{:.3e},{:.3e}",
            self.h,
            self.tau,
            self.e_u,
            order(self.eoc_u),
            self.e_phi,
            order(self.eoc_phi),
            self.d_i01,
            self.d_i2,
            self.d_i3
        )
    }
}

fn order(coarse: f64, fine: f64, ratio: f64) -> Option<f64> {
    (coarse > 0.0 && fine > 0.0).then(|| (coarse / fine).ln() / ratio.ln())
}

/// Fills `eoc_u` and `eoc_phi` from consecutive rows: `log(E_{i−1}/E_i) / log(ratio)`,
/// where `ratio` is the refinement of the refined parameter. The first row gets no order.
pub fn eoc(mut rows: Vec<EocRow>, refined: Refinement) -> Result<Vec<EocRow>> {
    for row in &rows {
        ensure(row.e_u >= 0.0 && row.e_phi >= 0.0, || {
            Error::Validation(format!("negative error in row h = {}, tau = {}", row.h, row.tau))
        })?;
    }
    if let Some(first) = rows.first_mut() {
        first.eoc_u = None;
        first.eoc_phi = None;
    }
    for i in 1..rows.len() {
        let (prev, cur) = (rows[i - 1], rows[i]);
        let (shared, other, varied_prev, varied_cur) = match refined {
            Refinement::Tau => (prev.h, cur.h, prev.tau, cur.tau),
            Refinement::H => (prev.tau, cur.tau, prev.h, cur.h),
        };
        ensure((shared - other).abs() <= SHARED_PARAMETER_TOLERANCE * shared.abs().max(other.abs()), || {
            Error::Validation(format!(
                "rows {} and {} differ in the parameter held fixed ({shared} vs {other})",
                i - 1,
                i
            ))
        })?;
        let ratio = varied_prev / varied_cur;
        ensure(ratio.is_finite() && ratio > 0.0 && (ratio - 1.0).abs() > SHARED_PARAMETER_TOLERANCE, || {
            Error::Validation(format!("rows {} and {} do not refine the varied parameter", i - 1, i))
        })?;
        rows[i].eoc_u = order(prev.e_u, cur.e_u, ratio);
        rows[i].eoc_phi = order(prev.e_phi, cur.e_phi, ratio);
    }
    Ok(rows)
}

/// Least-squares slope of `log E` against `log s` over `(s, E)` pairs with `E > 0`.
pub fn fitted_order(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> =
        points.iter().filter(|(s, e)| *s > 0.0 && *e > 0.0).map(|(s, e)| (s.ln(), e.ln())).collect();
    if logs.len() < 2 {
        return None;
    }
    let m = logs.len() as f64;
    let (mx, my) = logs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / m, b + y / m));
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Fourier coefficients `û_{k,l}` for `|k|, |l| <= K` of
/// `u(x, y) = Σ û_{k,l} e^{2πi(kx + ly)/L}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierCoefficients {
    k_max: usize,
    data: Vec<Complex64>,
}

impl FourierCoefficients {
    pub fn zeros(k_max: usize) -> Self {
        let w = 2 * k_max + 1;
        Self { k_max, data: vec![Complex64::default(); w * w] }
    }

    #[inline]
    pub fn k_max(&self) -> usize {
        self.k_max
    }

    #[inline]
    fn width(&self) -> usize {
        2 * self.k_max + 1
    }

    #[inline]
    fn index(&self, k: isize, l: isize) -> usize {
        let kk = self.k_max as isize;
        assert!(k.abs() <= kk && l.abs() <= kk, "mode ({k}, {l}) outside cutoff {kk}");
        (k + kk) as usize * self.width() + (l + kk) as usize
    }

    pub fn get(&self, k: isize, l: isize) -> Complex64 {
        self.data[self.index(k, l)]
    }

    pub fn set(&mut self, k: isize, l: isize, value: Complex64) {
        let idx = self.index(k, l);
        self.data[idx] = value;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Coefficients of a mesh field, refusing fields with mass beyond the cutoff.
    pub fn from_field(u: &ComplexField, grid: &Grid, k_max: usize) -> Result<Self> {
        let n = grid.n();
        ensure(u.n() == n, || Error::Configuration(format!("field has N = {}, grid has N = {n}", u.n())))?;
        ensure(2 * k_max < n, || {
            Error::Configuration(format!("cutoff K = {k_max} needs N > 2K, got N = {n}"))
        })?;
        let mut data = u.as_slice().to_vec();
        fft2(&mut data, n, FftDirection::Forward);
        let scale = 1.0 / (n * n) as f64;
        let mut out = Self::zeros(k_max);
        let kk = k_max as isize;
        let (mut total, mut kept) = (0.0, 0.0);
        for a in 0..n {
            let k = signed_mode(a, n);
            for b in 0..n {
                let l = signed_mode(b, n);
                let sign = if (k + l).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                let c = data[a * n + b] * (scale * sign);
                let m = c.norm_sqr();
                total += m;
                if k.abs() <= kk && l.abs() <= kk {
                    kept += m;
                    out.set(k, l, c);
                }
            }
        }
        let tail = if total > 0.0 { (total - kept).max(0.0) / total } else { 0.0 };
        ensure(tail <= ORACLE_TRUNCATION_TOLERANCE, || {
            Error::Validation(format!(
                "relative coefficient mass {tail:.3e} outside |k|,|l| <= {k_max} exceeds {ORACLE_TRUNCATION_TOLERANCE:.0e}"
            ))
        })?;
        Ok(out)
    }

    /// The truncated series evaluated on the mesh.
    pub fn to_field(&self, grid: &Grid) -> Result<ComplexField> {
        let n = grid.n();
        ensure(2 * self.k_max < n, || {
            Error::Configuration(format!("cutoff K = {} needs N > 2K, got N = {n}", self.k_max))
        })?;
        let kk = self.k_max as isize;
        let mut data = vec![Complex64::default(); n * n];
        for k in -kk..=kk {
            for l in -kk..=kk {
                let sign = if (k + l).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                let a = k.rem_euclid(n as isize) as usize;
                let b = l.rem_euclid(n as isize) as usize;
                data[a * n + b] = self.get(k, l) * sign;
            }
        }
        fft2(&mut data, n, FftDirection::Inverse);
        ComplexField::from_vec(n, data)
    }

    fn axpy(&mut self, a: f64, x: &FourierCoefficients) {
        for (y, &v) in self.data.iter_mut().zip(&x.data) {
            *y += v * a;
        }
    }
}

#[inline]
fn signed_mode(a: usize, n: usize) -> isize {
    if 2 * a < n {
        a as isize
    } else {
        a as isize - n as isize
    }
}

/// Unnormalized 2D DFT over an `n x n` x-major array.
fn fft2(data: &mut [Complex64], n: usize, direction: FftDirection) {
    let fft = FftPlanner::new().plan_fft(n, direction);
    for row in data.chunks_mut(n) {
        fft.process(row);
    }
    let mut column = vec![Complex64::default(); n];
    for j in 0..n {
        for (i, c) in column.iter_mut().enumerate() {
            *c = data[i * n + j];
        }
        fft.process(&mut column);
        for (i, c) in column.iter().enumerate() {
            data[i * n + j] = *c;
        }
    }
}

/// Galerkin-truncated Fourier-mode form of the evolution equation, integrated with RK4.
///
/// `∂t û_{k,l} = −i(4π²p/L²)(k²−l²)û_{k,l} + iq[P_{−l} − P_k] V̂_{k+l}
///             + iq Σ_m (û_{k−m,l} − û_{k,l−m}) V̂_m`, with `V̂_m = Σ_{k+l=m} û_{k,l}`
/// the coefficients of the diagonal `u(x, x)` and `P_n` those of the background.
#[derive(Clone, Debug)]
pub struct FourierOracle {
    k_max: usize,
    length: f64,
    p: f64,
    q: f64,
    /// `P_n` for `n = −K..=K`.
    background: Arc<Vec<f64>>,
}

impl FourierOracle {
    /// `background[n + K] = P_n`; `None` means `Γ ≡ 0`.
    pub fn new(length: f64, p: f64, q: f64, k_max: usize, background: Option<Vec<f64>>) -> Result<Self> {
        ensure(length.is_finite() && length > 0.0, || {
            Error::Parameter(format!("domain length must be positive, got {length}"))
        })?;
        ensure(p.is_finite() && q.is_finite(), || Error::Parameter("p and q must be finite".into()))?;
        let w = 2 * k_max + 1;
        let background = background.unwrap_or_else(|| vec![0.0; w]);
        ensure(background.len() == w, || {
            Error::Configuration(format!("background needs {w} coefficients, got {}", background.len()))
        })?;
        Ok(Self { k_max, length, p, q, background: Arc::new(background) })
    }

    /// Background coefficients `P_n = P(n / L) / L`.
    pub fn with_spectrum(spectrum: &dyn Spectrum, length: f64, p: f64, q: f64, k_max: usize) -> Result<Self> {
        let kk = k_max as isize;
        let background = (-kk..=kk).map(|n| spectrum.value(n as f64 / length) / length).collect();
        Self::new(length, p, q, k_max, Some(background))
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Linear dispersion frequency of mode `(k, l)`.
    pub fn frequency(&self, k: isize, l: isize) -> f64 {
        4.0 * PI * PI * self.p / (self.length * self.length) * ((k * k - l * l) as f64)
    }

    /// Time derivative of the coefficients.
    pub fn rhs(&self, c: &FourierCoefficients, out: &mut FourierCoefficients) {
        assert_eq!(c.k_max, self.k_max);
        assert_eq!(out.k_max, self.k_max);
        let kk = self.k_max as isize;
        let w = c.width();
        // V̂_m for m = −2K..=2K at index m + 2K.
        let mut v = vec![Complex64::default(); 2 * w - 1];
        for k in -kk..=kk {
            for l in -kk..=kk {
                v[(k + l + 2 * kk) as usize] += c.get(k, l);
            }
        }
        let iq = Complex64::new(0.0, self.q);
        let bg = &self.background;
        out.data.par_chunks_mut(w).enumerate().for_each(|(a, row)| {
            let k = a as isize - kk;
            for (b, slot) in row.iter_mut().enumerate() {
                let l = b as isize - kk;
                let mut acc = Complex64::new(0.0, -self.frequency(k, l)) * c.get(k, l);
                let source = bg[(-l + kk) as usize] - bg[(k + kk) as usize];
                acc += iq * source * v[(k + l + 2 * kk) as usize];
                let mut conv = Complex64::default();
                // Σ_m û_{k−m,l} V̂_m with |k − m| <= K.
                for s in -kk..=kk {
                    conv += c.get(s, l) * v[(k - s + 2 * kk) as usize];
                    conv -= c.get(k, s) * v[(l - s + 2 * kk) as usize];
                }
                *slot = acc + iq * conv;
            }
        });
    }

    /// Integrates from `c0` to `final_time` with RK4 steps of at most `dt`,
    /// returning `(t, û(t))` every `sample_every` steps plus the initial and final states.
    pub fn integrate(
        &self,
        c0: &FourierCoefficients,
        final_time: f64,
        dt: f64,
        sample_every: usize,
    ) -> Result<Vec<(f64, FourierCoefficients)>> {
        ensure(c0.k_max == self.k_max, || {
            Error::Configuration(format!("coefficients have K = {}, oracle has K = {}", c0.k_max, self.k_max))
        })?;
        ensure(final_time.is_finite() && final_time >= 0.0, || {
            Error::Parameter(format!("final time must be non-negative, got {final_time}"))
        })?;
        ensure(dt.is_finite() && dt > 0.0, || Error::Parameter(format!("oracle step must be positive, got {dt}")))?;
        let steps = (final_time / dt - 1e-9).ceil().max(0.0) as usize;
        let dt = if steps == 0 { 0.0 } else { final_time / steps as f64 };
        let stride = sample_every.max(1);

        let mut trajectory = vec![(0.0, c0.clone())];
        let mut c = c0.clone();
        let mut k1 = FourierCoefficients::zeros(self.k_max);
        let mut k2 = k1.clone();
        let mut k3 = k1.clone();
        let mut k4 = k1.clone();
        let mut stage = k1.clone();
        for step in 1..=steps {
            self.rhs(&c, &mut k1);
            stage.data.copy_from_slice(&c.data);
            stage.axpy(0.5 * dt, &k1);
            self.rhs(&stage, &mut k2);
            stage.data.copy_from_slice(&c.data);
            stage.axpy(0.5 * dt, &k2);
            self.rhs(&stage, &mut k3);
            stage.data.copy_from_slice(&c.data);
            stage.axpy(dt, &k3);
            self.rhs(&stage, &mut k4);
            c.axpy(dt / 6.0, &k1);
            c.axpy(dt / 3.0, &k2);
            c.axpy(dt / 3.0, &k3);
            c.axpy(dt / 6.0, &k4);
            ensure(c.data.iter().all(|z| z.re.is_finite() && z.im.is_finite()), || {
                Error::Validation(format!("oracle produced non-finite coefficients at step {step}"))
            })?;
            if step % stride == 0 || step == steps {
                trajectory.push((step as f64 * dt, c.clone()));
            }
        }
        Ok(trajectory)
    }
}
