//! Penrose-type linear stability check of a homogeneous background.
//!
//! A wavenumber `X` is unstable when the curve `S_X(t) = H[D_X P](t) − i D_X P(t)`
//! winds around `4πp/q`. The Hilbert transform uses the convention
//! `H[f](t) = (1/π) p.v.∫ f(s) / (t − s) ds`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::spectra::Spectrum;

/// Relative tail level above which a Hilbert transform carries an accuracy warning.
pub const HILBERT_DECAY_TOLERANCE: f64 = 1e-10;

/// Minimal distance between the target and any curve sample.
pub const WINDING_DEGENERACY_DISTANCE: f64 = 1e-9;

/// Maximal distance of the accumulated angle (in turns) from an integer.
pub const WINDING_INTEGER_TOLERANCE: f64 = 1e-6;

/// Default bisection tolerance on the largest unstable wavenumber.
pub const X_MAX_TOLERANCE: f64 = 1e-3;

/// `(P(k + X/2) − P(k − X/2)) / X`, or `P'(k)` at `X = 0`.
pub fn divided_difference(spectrum: &dyn Spectrum, x: f64, k: f64) -> f64 {
    if x == 0.0 {
        spectrum.derivative(k)
    } else {
        (spectrum.value(k + 0.5 * x) - spectrum.value(k - 0.5 * x)) / x
    }
}

/// Uniform sample points `t_j = −T + j dt`, `dt = 2T / (M − 1)`, symmetric about 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetricGrid {
    pub half_width: f64,
    pub points: usize,
}

impl SymmetricGrid {
    pub fn new(half_width: f64, points: usize) -> Result<Self> {
        let grid = Self { half_width, points };
        grid.validate()?;
        Ok(grid)
    }

    /// `2¹⁵` points on `[−(320 w + |X|), 320 w + |X|]`, `w` the spectral width.
    pub fn for_spectrum(spectrum: &dyn Spectrum, x: f64) -> Self {
        Self { half_width: 320.0 * spectrum.width() + x.abs(), points: 1 << 15 }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.half_width.is_finite() && self.half_width > 0.0, || {
            Error::Parameter(format!("grid half-width must be positive, got {}", self.half_width))
        })?;
        ensure(self.points >= 4, || Error::Parameter(format!("grid needs at least 4 points, got {}", self.points)))
    }

    pub fn dt(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dt()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.point(j)).collect()
    }
}

/// Hilbert transform samples together with the decay diagnostic of the input.
#[derive(Clone, Debug, PartialEq)]
pub struct HilbertSamples {
    pub values: Vec<f64>,
    /// `max(|f(t_0)|, |f(t_{M−1})|) / max |f|`.
    pub tail_ratio: f64,
    pub warning: Option<String>,
}

fn decay_warning(f: &[f64]) -> (f64, Option<String>) {
    let peak = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return (0.0, None);
    }
    let ends = f.first().unwrap().abs().max(f.last().unwrap().abs());
    let ratio = ends / peak;
    let warning = (ratio > HILBERT_DECAY_TOLERANCE).then(|| {
        format!("input decays only to {ratio:.2e} of its peak at the grid ends; Hilbert transform may be inaccurate")
    });
    (ratio, warning)
}

/// FFT Hilbert transform of samples on a symmetric grid.
///
/// The samples are zero-padded to twice the next power of two and multiplied by
/// `−i sign(ξ)` in frequency. The leading error of the resulting periodic
/// transform, `−π (t M₀ − M₁) / (3 Π²)` for period `Π` and moments `M₀, M₁`
/// of `f`, is removed.
pub fn hilbert_transform(f: &[f64], grid: &SymmetricGrid) -> Result<HilbertSamples> {
    grid.validate()?;
    ensure(f.len() == grid.points, || {
        Error::Configuration(format!("{} samples for a grid of {} points", f.len(), grid.points))
    })?;
    let (tail_ratio, warning) = decay_warning(f);
    let m = f.len();
    let padded = 2 * m.next_power_of_two();
    let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(padded, Complex64::default());

    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(padded).process(&mut buf);
    let half = padded / 2;
    for (k, z) in buf.iter_mut().enumerate() {
        *z = match k {
            0 => Complex64::default(),
            k if k < half => Complex64::new(z.im, -z.re),
            k if k == half => Complex64::default(),
            _ => Complex64::new(-z.im, z.re),
        };
    }
    planner.plan_fft_inverse(padded).process(&mut buf);

    let dt = grid.dt();
    let period = padded as f64 * dt;
    let t = grid.points();
    let m0: f64 = f.iter().sum::<f64>() * dt;
    let m1: f64 = f.iter().zip(&t).map(|(v, s)| v * s).sum::<f64>() * dt;
    let c = PI / (3.0 * period * period);
    let scale = 1.0 / padded as f64;
    let values = buf[..m].iter().zip(&t).map(|(z, &tj)| z.re * scale + c * (tj * m0 - m1)).collect();
    Ok(HilbertSamples { values, tail_ratio, warning })
}

/// Weideman's rational expansion `f(t) = Σ a_n (b + it)^n / (b − it)^{n+1}`,
/// `n = −N..N−1`, whose basis functions are eigenfunctions of `H`.
#[derive(Clone, Debug)]
pub struct WeidemanHilbert {
    b: f64,
    /// `a_n` for `n = −N..N−1` at index `n + N`.
    coefficients: Vec<Complex64>,
}

impl WeidemanHilbert {
    /// Expand `f` from `2N` samples at `t_j = b tan(θ_j / 2)`, `θ_j = π(j + 1/2)/N`.
    pub fn new(f: impl Fn(f64) -> f64, n: usize, b: f64) -> Result<Self> {
        ensure(n >= 1, || Error::Parameter("Weideman expansion needs N >= 1".into()))?;
        ensure(b.is_finite() && b > 0.0, || Error::Parameter(format!("scale b must be positive, got {b}")))?;
        let size = 2 * n;
        let theta = |m: usize| PI * (m as f64 - n as f64 + 0.5) / n as f64;
        let mut g: Vec<Complex64> = (0..size)
            .map(|m| {
                let t = b * (0.5 * theta(m)).tan();
                Complex64::new(b, -t) * f(t)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(size).process(&mut g);
        // a_n = (1/2N) e^{−inθ_{−N}} DFT[g](n mod 2N)
        let coefficients = (0..size)
            .map(|idx| {
                let k = idx as isize - n as isize;
                let phase = -(k as f64) * theta(0);
                g[k.rem_euclid(size as isize) as usize] * Complex64::from_polar(1.0 / size as f64, phase)
            })
            .collect();
        Ok(Self { b, coefficients })
    }

    fn sum(&self, t: f64, weight: impl Fn(isize) -> Complex64) -> Complex64 {
        let n = (self.coefficients.len() / 2) as isize;
        let denom = Complex64::new(self.b, -t);
        let z = Complex64::new(self.b, t) / denom;
        let zinv = z.conj();
        // Horner in z for n >= 0 and in 1/z for n < 0.
        let mut pos = Complex64::default();
        for k in (0..n).rev() {
            pos = pos * z + self.coefficients[(k + n) as usize] * weight(k);
        }
        let mut neg = Complex64::default();
        for k in (1..=n).rev() {
            neg = neg * zinv + self.coefficients[(n - k) as usize] * weight(-k);
        }
        (pos + neg * zinv) / denom
    }

    /// The expansion of `f` at `t`.
    pub fn value(&self, t: f64) -> f64 {
        self.sum(t, |_| Complex64::new(1.0, 0.0)).re
    }

    /// `H[f](t)`, using `H ρ_n = −i sign(n) ρ_n` with `sign(0) = 1`.
    pub fn transform(&self, t: f64) -> f64 {
        self.sum(t, |k| if k >= 0 { Complex64::new(0.0, -1.0) } else { Complex64::new(0.0, 1.0) }).re
    }
}

/// Samples of `S_X(t) = H[D_X P](t) − i D_X P(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NyquistCurve {
    pub x: f64,
    pub t: Vec<f64>,
    pub s: Vec<Complex64>,
    /// `4πp/q`.
    pub target: f64,
    pub warning: Option<String>,
}

pub fn nyquist_curve(spectrum: &dyn Spectrum, x: f64, p: f64, q: f64, grid: &SymmetricGrid) -> Result<NyquistCurve> {
    ensure(p.is_finite() && q.is_finite() && q != 0.0, || {
        Error::Parameter(format!("stability target needs finite p and nonzero q, got p = {p}, q = {q}"))
    })?;
    ensure(x.is_finite(), || Error::Parameter(format!("wavenumber must be finite, got {x}")))?;
    let t = grid.points();
    let d: Vec<f64> = t.iter().map(|&k| divided_difference(spectrum, x, k)).collect();
    let h = hilbert_transform(&d, grid)?;
    let s = h.values.iter().zip(&d).map(|(&re, &im)| Complex64::new(re, -im)).collect();
    Ok(NyquistCurve { x, t, s, target: 4.0 * PI * p / q, warning: h.warning })
}

/// Winding number of the curve, closed through the origin, around its target.
pub fn winding_number(curve: &NyquistCurve) -> Result<i32> {
    let target = Complex64::new(curve.target, 0.0);
    let origin = Complex64::default();
    let points = std::iter::once(origin).chain(curve.s.iter().copied()).chain(std::iter::once(origin));
    let mut prev: Option<Complex64> = None;
    let mut turns = 0.0;
    for z in points {
        let w = z - target;
        ensure(w.norm() > WINDING_DEGENERACY_DISTANCE, || {
            Error::Indeterminate(format!(
                "curve for X = {} passes within {WINDING_DEGENERACY_DISTANCE:.0e} of the target {}",
                curve.x, curve.target
            ))
        })?;
        if let Some(pw) = prev {
            turns += (w / pw).arg();
        }
        prev = Some(w);
    }
    let turns = turns / (2.0 * PI);
    let rounded = turns.round();
    ensure((turns - rounded).abs() <= WINDING_INTEGER_TOLERANCE, || {
        Error::Indeterminate(format!("accumulated angle {turns} turns is not an integer for X = {}", curve.x))
    })?;
    Ok(rounded as i32)
}

/// Winding number of `S_X` on the default grid.
pub fn winding_at(spectrum: &dyn Spectrum, x: f64, p: f64, q: f64) -> Result<i32> {
    let grid = SymmetricGrid::for_spectrum(spectrum, x);
    winding_number(&nyquist_curve(spectrum, x, p, q, &grid)?)
}

pub fn is_unstable(spectrum: &dyn Spectrum, x: f64, p: f64, q: f64) -> Result<bool> {
    Ok(winding_at(spectrum, x, p, q)? != 0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicWinding {
    pub n: i64,
    pub x: f64,
    pub winding: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityResult {
    /// Unstable harmonics `n` (both signs) of `X = 2πn/L`.
    pub unstable_harmonics: Vec<i64>,
    /// Largest unstable wavenumber, 0 when every wavenumber is stable.
    pub x_max: f64,
    pub bandwidth: f64,
    pub windings: Vec<HarmonicWinding>,
}

impl StabilityResult {
    /// Positive unstable harmonics.
    pub fn positive_harmonics(&self) -> Vec<i64> {
        self.unstable_harmonics.iter().copied().filter(|&n| n > 0).collect()
    }

    pub fn is_stable(&self) -> bool {
        self.unstable_harmonics.is_empty() && self.x_max == 0.0
    }
}

/// Classifies the harmonics `X = 2πn/L`, `1 <= |n| <= n_max`, and locates the
/// edge of the unstable band by bisection to within [`X_MAX_TOLERANCE`].
pub fn stability_scan(spectrum: &dyn Spectrum, p: f64, q: f64, length: f64, n_max: usize) -> Result<StabilityResult> {
    ensure(length.is_finite() && length > 0.0, || {
        Error::Parameter(format!("domain length must be positive, got {length}"))
    })?;
    ensure(n_max >= 1, || Error::Parameter("scan needs n_max >= 1".into()))?;
    let dx = 2.0 * PI / length;
    let ns: Vec<i64> = (1..=n_max as i64).flat_map(|n| [-n, n]).collect();
    let windings = ns
        .par_iter()
        .map(|&n| {
            let x = n as f64 * dx;
            winding_at(spectrum, x, p, q).map(|winding| HarmonicWinding { n, x, winding })
        })
        .collect::<Result<Vec<_>>>()?;
    let unstable_harmonics: Vec<i64> = windings.iter().filter(|w| w.winding != 0).map(|w| w.n).collect();
    let unstable_positive = |n: i64| windings.iter().any(|w| w.n == n && w.winding != 0);
    ensure(!unstable_positive(n_max as i64), || {
        Error::ScanRange(format!("harmonic n_max = {n_max} is still unstable; enlarge the scan range"))
    })?;

    let last = (1..=n_max as i64).take_while(|&n| unstable_positive(n)).last();
    let (mut lo, mut hi) = match last {
        Some(n) => (n as f64 * dx, (n + 1) as f64 * dx),
        None => {
            // The band may still lie below the first harmonic.
            let probe = 1e-3 * dx;
            if !is_unstable(spectrum, probe, p, q)? {
                return Ok(StabilityResult { unstable_harmonics, x_max: 0.0, bandwidth: 0.0, windings });
            }
            (probe, dx)
        }
    };
    while hi - lo > X_MAX_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if is_unstable(spectrum, mid, p, q)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x_max = 0.5 * (lo + hi);
    Ok(StabilityResult { unstable_harmonics, x_max, bandwidth: 2.0 * x_max, windings })
}

/// Critical intensity estimate with its bracket half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalIntensity {
    pub c: f64,
    pub tolerance: f64,
}

/// Bisection for the intensity at which `X` turns unstable in a one-parameter
/// family `C ↦ P_C`, which must be stable at `lo` and unstable at `hi`.
pub fn critical_intensity<S: Spectrum>(
    family: impl Fn(f64) -> Result<S>,
    x: f64,
    p: f64,
    q: f64,
    (mut lo, mut hi): (f64, f64),
    tolerance: f64,
) -> Result<CriticalIntensity> {
    ensure(lo < hi && tolerance > 0.0, || {
        Error::Parameter(format!("bad bisection bracket [{lo}, {hi}] with tolerance {tolerance}"))
    })?;
    ensure(!is_unstable(&family(lo)?, x, p, q)?, || {
        Error::ScanRange(format!("X = {x} is already unstable at the lower bracket C = {lo}"))
    })?;
    ensure(is_unstable(&family(hi)?, x, p, q)?, || {
        Error::ScanRange(format!("X = {x} is still stable at the upper bracket C = {hi}"))
    })?;
    while hi - lo > 2.0 * tolerance {
        let mid = 0.5 * (lo + hi);
        if is_unstable(&family(mid)?, x, p, q)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(CriticalIntensity { c: 0.5 * (lo + hi), tolerance: 0.5 * (hi - lo) })
}
