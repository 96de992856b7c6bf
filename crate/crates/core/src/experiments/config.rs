//! JSON run configurations.
//!
//! Physics parameters (`p`, `q`, the spectrum, mesh and time step) have no
//! defaults. Lengths are in the spatial unit of the field, times in the
//! evolution unit and wavenumbers in cycles per unit length.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid};
use crate::scheme::{Dynamics, InitMode, InitialInhomogeneity, SchemeConfig};
use crate::spectra::{
    gamma_from_spectrum, gaussian_gamma, Autocorrelation, GaussianSpectrum, GaussianSpectrumParams, Spectrum,
    TabulatedSpectrum,
};
use crate::validation::{soliton_exact, SolitonParams};

use super::snapshot::{SnapshotKind, SnapshotRecord};

fn field_error(field: &str, message: impl std::fmt::Display) -> Error {
    Error::Configuration(format!("field `{field}`: {message}"))
}

fn positive(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(field_error(field, format!("must be a positive number, got {value}")))
    }
}

/// Background power spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SpectrumConfig {
    /// `P(k) = (C²/σ) exp(−πk²/σ²)`.
    Gaussian { c: f64, sigma: f64 },
    /// Samples `P(k0 + m dk)`; the autocorrelation is summed over `|n| <= mode_cutoff` modes.
    Tabulated {
        k0: f64,
        dk: f64,
        values: Vec<f64>,
        #[serde(default)]
        mode_cutoff: Option<usize>,
    },
    /// `Γ ≡ 0`.
    Zero,
}

impl SpectrumConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            SpectrumConfig::Gaussian { c, sigma } => {
                positive("spectrum.c", *c)?;
                positive("spectrum.sigma", *sigma)
            }
            SpectrumConfig::Tabulated { dk, values, .. } => {
                positive("spectrum.dk", *dk)?;
                if values.len() < 2 || values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(field_error("spectrum.values", "needs at least two finite non-negative samples"));
                }
                Ok(())
            }
            SpectrumConfig::Zero => Ok(()),
        }
    }

    /// The spectrum as a callable, `None` for the zero background.
    pub fn spectrum(&self) -> Result<Option<Box<dyn Spectrum>>> {
        self.validate()?;
        Ok(match self {
            SpectrumConfig::Gaussian { c, sigma } => {
                Some(Box::new(GaussianSpectrum(GaussianSpectrumParams::new(*c, *sigma)?)))
            }
            SpectrumConfig::Tabulated { k0, dk, values, .. } => {
                Some(Box::new(TabulatedSpectrum::new(*k0, *dk, values.clone())?))
            }
            SpectrumConfig::Zero => None,
        })
    }

    pub fn autocorrelation(&self, grid: &Grid) -> Result<Autocorrelation> {
        self.validate()?;
        match self {
            SpectrumConfig::Gaussian { c, sigma } => gaussian_gamma(GaussianSpectrumParams::new(*c, *sigma)?, grid),
            SpectrumConfig::Tabulated { k0, dk, values, mode_cutoff } => {
                let spectrum = TabulatedSpectrum::new(*k0, *dk, values.clone())?;
                gamma_from_spectrum(&spectrum, grid, *mode_cutoff)
            }
            SpectrumConfig::Zero => Ok(Autocorrelation::zero(grid)),
        }
    }
}

/// Initial inhomogeneity `u₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialDataConfig {
    /// Modulated Gaussian envelope; complex coefficients are `[re, im]` pairs.
    Expression {
        amplitude: f64,
        cx: f64,
        cy: f64,
        kx: f64,
        ky: f64,
        a1: Complex64,
        a2: Complex64,
        a3: Complex64,
    },
    /// Periodized bright soliton; requires `L = 10π/k` and a zero background.
    Soliton { amplitude: f64, velocity: f64 },
    /// The first full-field record of a snapshot file.
    File { path: PathBuf },
}

impl InitialDataConfig {
    pub fn reference() -> Self {
        Self::from_inhomogeneity(InitialInhomogeneity::reference())
    }

    pub fn from_inhomogeneity(e: InitialInhomogeneity) -> Self {
        InitialDataConfig::Expression {
            amplitude: e.amplitude,
            cx: e.cx,
            cy: e.cy,
            kx: e.kx,
            ky: e.ky,
            a1: e.a1,
            a2: e.a2,
            a3: e.a3,
        }
    }
}

/// One evolution run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub p: f64,
    pub q: f64,
    /// Domain length `L`; the domain is `[−L/2, L/2)²`.
    #[serde(rename = "L")]
    pub length: f64,
    /// Points per axis.
    #[serde(rename = "N")]
    pub n: usize,
    pub tau: f64,
    /// Final time `T`; `T = 0` only writes the initial state.
    #[serde(rename = "T")]
    pub final_time: f64,
    pub spectrum: SpectrumConfig,
    pub init_mode: InitMode,
    pub dynamics: Dynamics,
    pub u0: InitialDataConfig,
    #[serde(default)]
    pub seed: u64,
    /// Steps between full-field snapshots; 0 keeps only the initial and final fields.
    #[serde(default)]
    pub snapshot_stride: usize,
    /// Steps between diagnostics rows and diagonal slices.
    #[serde(default = "default_diag_stride")]
    pub diag_stride: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_diag_stride() -> usize {
    1
}

impl RunConfig {
    /// Reads and validates a JSON configuration file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Configuration(format!("invalid run config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.p.is_finite() || self.p == 0.0 {
            return Err(field_error("p", format!("must be finite and nonzero, got {}", self.p)));
        }
        if !self.q.is_finite() {
            return Err(field_error("q", format!("must be finite, got {}", self.q)));
        }
        positive("L", self.length)?;
        if self.n < 5 {
            return Err(field_error("N", format!("needs at least 5 points per axis, got {}", self.n)));
        }
        positive("tau", self.tau)?;
        if !self.final_time.is_finite() || self.final_time < 0.0 {
            return Err(field_error("T", format!("must be a non-negative number, got {}", self.final_time)));
        }
        if self.diag_stride == 0 {
            return Err(field_error("diag_stride", "must be at least 1"));
        }
        self.spectrum.validate()?;
        match &self.u0 {
            InitialDataConfig::Expression { amplitude, cx, cy, kx, ky, a1, a2, a3 } => {
                let reals = [*amplitude, *cx, *cy, *kx, *ky];
                let complexes = [a1, a2, a3];
                if reals.iter().any(|v| !v.is_finite()) || complexes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
                {
                    return Err(field_error("u0", "expression parameters must be finite"));
                }
                if *cx <= 0.0 || *cy <= 0.0 {
                    return Err(field_error("u0", "envelope constants cx, cy must be positive"));
                }
            }
            InitialDataConfig::Soliton { .. } => {
                let soliton = self.soliton()?.expect("soliton initial data");
                let l = soliton.length();
                if (self.length - l).abs() > 1e-9 * l {
                    return Err(field_error("L", format!("soliton data needs L = 10π/k = {l}, got {}", self.length)));
                }
                if self.spectrum != SpectrumConfig::Zero {
                    return Err(field_error("spectrum", "soliton data is an exact solution only for the zero background"));
                }
            }
            InitialDataConfig::File { .. } => {}
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n, self.length)
    }

    pub fn scheme(&self) -> SchemeConfig {
        SchemeConfig {
            p: self.p,
            q: self.q,
            tau: self.tau,
            final_time: self.final_time,
            init_mode: self.init_mode,
            dynamics: self.dynamics,
        }
    }

    pub fn soliton(&self) -> Result<Option<SolitonParams>> {
        match self.u0 {
            InitialDataConfig::Soliton { amplitude, velocity } => SolitonParams::new(amplitude, velocity, self.p, self.q)
                .map(Some)
                .map_err(|e| field_error("u0", e)),
            _ => Ok(None),
        }
    }

    pub fn initial_field(&self, grid: &Grid) -> Result<ComplexField> {
        match &self.u0 {
            InitialDataConfig::Expression { amplitude, cx, cy, kx, ky, a1, a2, a3 } => Ok(InitialInhomogeneity {
                amplitude: *amplitude,
                cx: *cx,
                cy: *cy,
                kx: *kx,
                ky: *ky,
                a1: *a1,
                a2: *a2,
                a3: *a3,
            }
            .field(grid)),
            InitialDataConfig::Soliton { .. } => {
                let params = self.soliton()?.expect("soliton initial data");
                soliton_exact(&params, grid, 0.0)
            }
            InitialDataConfig::File { path } => {
                let mut reader = std::io::BufReader::new(fs::File::open(path)?);
                while let Some(record) = SnapshotRecord::read(&mut reader)? {
                    if record.header.kind == SnapshotKind::Full {
                        if record.header.n != grid.n() {
                            return Err(field_error(
                                "u0.path",
                                format!("snapshot has N = {}, run has N = {}", record.header.n, grid.n()),
                            ));
                        }
                        return ComplexField::from_vec(grid.n(), record.data);
                    }
                }
                Err(field_error("u0.path", format!("{} holds no full-field snapshot", path.display())))
            }
        }
    }

    /// The Gaussian intensity `C`, if the background is Gaussian.
    pub fn intensity(&self) -> Option<f64> {
        match self.spectrum {
            SpectrumConfig::Gaussian { c, .. } => Some(c),
            _ => None,
        }
    }
}

/// Stability scan of a background spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub p: f64,
    pub q: f64,
    #[serde(rename = "L")]
    pub length: f64,
    pub spectrum: SpectrumConfig,
    /// Harmonics `1..=n_max` are classified.
    pub n_max: usize,
    /// Bracket `[C_lo, C_hi]` for the critical-intensity bisection (Gaussian only).
    #[serde(default)]
    pub critical_bracket: Option<[f64; 2]>,
    #[serde(default = "default_critical_tolerance")]
    pub critical_tolerance: f64,
    /// Harmonics whose curves are written out; defaults to `1..=n_max`.
    #[serde(default)]
    pub curve_harmonics: Option<Vec<i64>>,
    /// Keep every `curve_decimation`-th curve sample in the output.
    #[serde(default = "default_curve_decimation")]
    pub curve_decimation: usize,
}

fn default_critical_tolerance() -> f64 {
    1e-4
}

fn default_curve_decimation() -> usize {
    16
}

impl StabilityConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let config: StabilityConfig =
            serde_json::from_str(&text).map_err(|e| Error::Configuration(format!("invalid stability config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.p.is_finite() || !self.q.is_finite() || self.q == 0.0 {
            return Err(field_error("q", "p and q must be finite with q nonzero"));
        }
        positive("L", self.length)?;
        if self.n_max == 0 {
            return Err(field_error("n_max", "must be at least 1"));
        }
        if self.spectrum == SpectrumConfig::Zero {
            return Err(field_error("spectrum", "a stability scan needs a nonzero spectrum"));
        }
        self.spectrum.validate()?;
        if let Some([lo, hi]) = self.critical_bracket {
            if !(lo > 0.0 && hi > lo) {
                return Err(field_error("critical_bracket", format!("needs 0 < C_lo < C_hi, got [{lo}, {hi}]")));
            }
            if !matches!(self.spectrum, SpectrumConfig::Gaussian { .. }) {
                return Err(field_error("critical_bracket", "only available for the Gaussian family"));
            }
        }
        positive("critical_tolerance", self.critical_tolerance)?;
        if self.curve_decimation == 0 {
            return Err(field_error("curve_decimation", "must be at least 1"));
        }
        Ok(())
    }
}
