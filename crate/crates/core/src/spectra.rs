//! Background power spectra and the periodized autocorrelation table.
//!
//! The background autocorrelation only enters the scheme through `Γ(x_i - y_j)`,
//! which depends on `i - j` alone. It is therefore stored as a table over the
//! `2N - 1` index differences rather than as an `N x N` array.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::grid::Grid;

/// Relative level (w.r.t. `Γ(0)`) above which `Γ_inf(L/2)` counts as a support violation.
pub const SUPPORT_TOLERANCE: f64 = 1e-13;

/// Relative level below which spectrum values are treated as round-off when truncating Fourier series.
pub const SPECTRUM_CUTOFF_LEVEL: f64 = 1e-16;

/// Wrap `xi` onto the fundamental cell: `((xi + L/2) mod L) - L/2`, in `[-L/2, L/2)`.
pub fn periodize(xi: f64, length: f64) -> Result<f64> {
    ensure(length.is_finite() && length > 0.0, || {
        Error::Parameter(format!("period must be positive, got {length}"))
    })?;
    Ok(wrap(xi, length))
}

#[inline]
pub(crate) fn wrap(xi: f64, length: f64) -> f64 {
    // Same cell as ((xi + L/2) mod L) - L/2, but exact on multiples of L.
    let mut w = xi.rem_euclid(length);
    if w >= 0.5 * length {
        w -= length;
    }
    w
}

/// A real, non-negative background power spectrum `P(k)` (k in cycles per unit length).
pub trait Spectrum: Send + Sync {
    fn value(&self, k: f64) -> f64;

    /// Characteristic spectral width; sets finite-difference steps and scan grids.
    fn width(&self) -> f64;

    /// `P'(k)`. Defaults to a 4th-order central difference with step `1e-4 * width`.
    fn derivative(&self, k: f64) -> f64 {
        let d = 1e-4 * self.width();
        (self.value(k - 2.0 * d) - 8.0 * self.value(k - d) + 8.0 * self.value(k + d)
            - self.value(k + 2.0 * d))
            / (12.0 * d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpectrumParams {
    /// Background intensity `C`.
    pub c: f64,
    /// Spectral width `σ`.
    pub sigma: f64,
}

impl GaussianSpectrumParams {
    pub fn new(c: f64, sigma: f64) -> Result<Self> {
        let params = Self { c, sigma };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.c.is_finite() && self.c > 0.0, || {
            Error::Parameter(format!("spectrum intensity C must be positive, got {}", self.c))
        })?;
        ensure(self.sigma.is_finite() && self.sigma > 0.0, || {
            Error::Parameter(format!("spectrum width sigma must be positive, got {}", self.sigma))
        })
    }

    /// Whole-line autocorrelation `Γ_inf(y) = C^2 exp(-π σ^2 y^2)`.
    #[inline]
    pub fn autocorrelation(&self, y: f64) -> f64 {
        self.c * self.c * (-PI * self.sigma * self.sigma * y * y).exp()
    }
}

/// `P(k) = (C^2 / σ) exp(-π k^2 / σ^2)`, the transform of `C^2 exp(-π σ^2 y^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianSpectrum(pub GaussianSpectrumParams);

impl Spectrum for GaussianSpectrum {
    fn value(&self, k: f64) -> f64 {
        let GaussianSpectrumParams { c, sigma } = self.0;
        c * c / sigma * (-PI * k * k / (sigma * sigma)).exp()
    }

    fn width(&self) -> f64 {
        self.0.sigma
    }

    fn derivative(&self, k: f64) -> f64 {
        let sigma = self.0.sigma;
        -2.0 * PI * k / (sigma * sigma) * self.value(k)
    }
}

/// Spectrum given by uniform samples `P(k0 + m dk)`, cubic-interpolated and zero outside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedSpectrum {
    pub k0: f64,
    pub dk: f64,
    pub values: Vec<f64>,
}

impl TabulatedSpectrum {
    pub fn new(k0: f64, dk: f64, values: Vec<f64>) -> Result<Self> {
        ensure(dk.is_finite() && dk > 0.0, || Error::Parameter("tabulated spectrum needs dk > 0".into()))?;
        ensure(values.len() >= 4, || {
            Error::Parameter("tabulated spectrum needs at least four samples".into())
        })?;
        ensure(values.iter().all(|v| v.is_finite() && *v >= 0.0), || {
            Error::Parameter("tabulated spectrum values must be finite and non-negative".into())
        })?;
        Ok(Self { k0, dk, values })
    }

    fn sample(&self, m: isize) -> f64 {
        if m < 0 || m as usize >= self.values.len() {
            0.0
        } else {
            self.values[m as usize]
        }
    }
}

impl Spectrum for TabulatedSpectrum {
    fn value(&self, k: f64) -> f64 {
        let s = (k - self.k0) / self.dk;
        let m = s.floor();
        if m < -1.0 || m > self.values.len() as f64 {
            return 0.0;
        }
        let t = s - m;
        let m = m as isize;
        let (p0, p1, p2, p3) = (self.sample(m - 1), self.sample(m), self.sample(m + 1), self.sample(m + 2));
        // Catmull-Rom
        let v = 0.5
            * (2.0 * p1
                + (-p0 + p2) * t
                + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t
                + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t * t * t);
        v.max(0.0)
    }

    fn width(&self) -> f64 {
        let total: f64 = self.values.iter().sum::<f64>() * self.dk;
        if total <= 0.0 {
            return self.dk * self.values.len() as f64;
        }
        let mean = self
            .values
            .iter()
            .enumerate()
            .map(|(m, v)| (self.k0 + m as f64 * self.dk) * v)
            .sum::<f64>()
            * self.dk
            / total;
        let var = self
            .values
            .iter()
            .enumerate()
            .map(|(m, v)| (self.k0 + m as f64 * self.dk - mean).powi(2) * v)
            .sum::<f64>()
            * self.dk
            / total;
        var.sqrt().max(self.dk)
    }
}

/// Adapter turning a closure into a [`Spectrum`].
pub struct FnSpectrum<F> {
    f: F,
    width: f64,
}

impl<F: Fn(f64) -> f64 + Send + Sync> FnSpectrum<F> {
    pub fn new(f: F, width: f64) -> Self {
        Self { f, width }
    }
}

impl<F: Fn(f64) -> f64 + Send + Sync> Spectrum for FnSpectrum<F> {
    fn value(&self, k: f64) -> f64 {
        (self.f)(k)
    }

    fn width(&self) -> f64 {
        self.width
    }
}

/// Periodized background autocorrelation sampled at every index difference.
#[derive(Clone, Debug, PartialEq)]
pub struct Autocorrelation {
    n: usize,
    /// `table[m]` is `Γ(m h)` for `m` in `0..N`; index differences are reduced mod `N`.
    table: Vec<f64>,
    gamma0: f64,
    tail: f64,
}

impl Autocorrelation {
    /// Zero background (`Γ ≡ 0`).
    pub fn zero(grid: &Grid) -> Self {
        Self { n: grid.n(), table: vec![0.0; grid.n()], gamma0: 0.0, tail: 0.0 }
    }

    /// Build from a wrapped-distance evaluator; evenness is exact by construction.
    fn from_even_fn(grid: &Grid, tail: f64, f: impl Fn(f64) -> f64) -> Self {
        let n = grid.n();
        let h = grid.h();
        let mut table = vec![0.0; n];
        for (m, slot) in table.iter_mut().enumerate() {
            let canonical = m.min(n - m);
            *slot = f(wrap(canonical as f64 * h, grid.length()));
        }
        let gamma0 = table[0];
        Self { n, table, gamma0, tail }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// `Γ(0)`.
    #[inline]
    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    /// Whole-line tail value `Γ_inf(L/2)` (0 when not applicable).
    #[inline]
    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn is_zero(&self) -> bool {
        self.table.iter().all(|&v| v == 0.0)
    }

    /// `Γ` at index difference `d = i - j`, `|d| < N`.
    #[inline]
    pub fn at(&self, d: isize) -> f64 {
        self.table[d.rem_euclid(self.n as isize) as usize]
    }

    /// `Γ(x_i - y_j)`.
    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        let d = if i >= j { i - j } else { i + self.n - j };
        self.table[d]
    }

    /// All `2N - 1` samples ordered by difference `-(N-1) ..= N-1`.
    pub fn samples(&self) -> Vec<f64> {
        let n = self.n as isize;
        (-(n - 1)..n).map(|d| self.at(d)).collect()
    }

    /// The table over `m = 0..N`, i.e. `Γ(m h)`.
    pub fn table(&self) -> &[f64] {
        &self.table
    }
}

/// Periodized autocorrelation of the Gaussian spectrum.
pub fn gaussian_gamma(params: GaussianSpectrumParams, grid: &Grid) -> Result<Autocorrelation> {
    params.validate()?;
    let gamma0 = params.autocorrelation(0.0);
    let tail = params.autocorrelation(0.5 * grid.length());
    ensure(tail <= SUPPORT_TOLERANCE * gamma0, || {
        Error::Configuration(format!(
            "autocorrelation support exceeds the domain: Γ_inf(L/2) = {tail:.3e} > {:.1e} Γ(0) \
             (L = {}, σ = {})",
            SUPPORT_TOLERANCE, grid.length(), params.sigma
        ))
    })?;
    Ok(Autocorrelation::from_even_fn(grid, tail, |y| params.autocorrelation(y)))
}

/// Smallest `n >= 0` with `P(±n/L) < SPECTRUM_CUTOFF_LEVEL * max P`.
pub fn default_mode_cutoff(spectrum: &dyn Spectrum, length: f64) -> usize {
    let peak = spectrum_peak(spectrum, length);
    if peak <= 0.0 {
        return 0;
    }
    let limit = 1_000_000;
    for n in 0..limit {
        let k = n as f64 / length;
        if spectrum.value(k).max(spectrum.value(-k)) < SPECTRUM_CUTOFF_LEVEL * peak {
            return n;
        }
    }
    limit
}

fn spectrum_peak(spectrum: &dyn Spectrum, length: f64) -> f64 {
    let width = spectrum.width().max(1.0 / length);
    let dk = (width / 64.0).min(1.0 / length);
    let steps = (40.0 * width / dk).ceil() as usize;
    (0..=steps)
        .flat_map(|m| {
            let k = m as f64 * dk;
            [spectrum.value(k), spectrum.value(-k)]
        })
        .fold(0.0, f64::max)
}

/// `Γ(x) = (1/L) Σ_n P(n/L) exp(2πi n x / L)`, truncated at `|n| <= mode_cutoff`.
///
/// With `mode_cutoff = None` the truncation is [`default_mode_cutoff`]. An explicit
/// cutoff whose first omitted mode still carries more than `1e-12` of the peak is rejected.
pub fn gamma_from_spectrum(
    spectrum: &dyn Spectrum,
    grid: &Grid,
    mode_cutoff: Option<usize>,
) -> Result<Autocorrelation> {
    let length = grid.length();
    let peak = spectrum_peak(spectrum, length);
    let cutoff = match mode_cutoff {
        Some(k) => {
            let next = (k + 1) as f64 / length;
            let omitted = spectrum.value(next).max(spectrum.value(-next));
            ensure(omitted <= 1e-12 * peak, || {
                Error::Configuration(format!(
                    "mode cutoff {k} too small: P({}/L) = {omitted:.3e} exceeds 1e-12 of the peak {peak:.3e}",
                    k + 1
                ))
            })?;
            k
        }
        None => default_mode_cutoff(spectrum, length),
    };

    let n = grid.n();
    let h = grid.h();
    let p0 = spectrum.value(0.0);
    let pairs: Vec<(f64, f64)> = (1..=cutoff)
        .map(|m| {
            let k = m as f64 / length;
            (spectrum.value(k), spectrum.value(-k))
        })
        .collect();

    let evaluate = |x: f64| -> (f64, f64) {
        let mut re = p0;
        let mut im = 0.0;
        for (m, &(pp, pm)) in pairs.iter().enumerate() {
            let arg = 2.0 * PI * (m + 1) as f64 * x / length;
            let (s, c) = arg.sin_cos();
            re += (pp + pm) * c;
            im += (pp - pm) * s;
        }
        (re / length, im / length)
    };

    let mut worst_im = 0.0f64;
    let mut worst_re = 0.0f64;
    for m in 0..n {
        let (re, im) = evaluate(m as f64 * h);
        worst_im = worst_im.max(im.abs());
        worst_re = worst_re.max(re.abs());
    }
    ensure(worst_im <= 1e-12 * worst_re.max(f64::MIN_POSITIVE), || {
        Error::Configuration(format!(
            "spectrum is not even: autocorrelation has imaginary residue {worst_im:.3e}"
        ))
    })?;

    let tail = evaluate(0.5 * length).0.abs();
    Ok(Autocorrelation::from_even_fn(grid, tail, |y| evaluate(y).0))
}
