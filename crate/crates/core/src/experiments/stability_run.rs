//! Stability scans with tabular output.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::{GaussianSpectrum, GaussianSpectrumParams};
use crate::stability::{critical_intensity, nyquist_curve, stability_scan, CriticalIntensity, NyquistCurve, StabilityResult, SymmetricGrid};

use super::config::{SpectrumConfig, StabilityConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub result: StabilityResult,
    /// Critical intensity at the first harmonic, when a bracket was given.
    pub critical: Option<CriticalIntensity>,
    #[serde(skip)]
    pub curves: Vec<(i64, NyquistCurve)>,
}

impl StabilityReport {
    /// `n,X,winding` for every scanned harmonic.
    pub fn windings_csv(&self) -> String {
        let mut out = String::from("n,X,winding\n");
        for w in &self.result.windings {
            out.push_str(&format!("{},{:.17e},{}\n", w.n, w.x, w.winding));
        }
        out
    }

    /// `n,X,t,ReS,ImS`, keeping every `decimation`-th sample.
    pub fn curves_csv(&self, decimation: usize) -> String {
        let mut out = String::from("n,X,t,ReS,ImS\n");
        for (n, curve) in &self.curves {
            for (t, s) in curve.t.iter().zip(&curve.s).step_by(decimation.max(1)) {
                out.push_str(&format!("{n},{:.17e},{:.17e},{:.17e},{:.17e}\n", curve.x, t, s.re, s.im));
            }
        }
        out
    }

    pub fn summary_line(&self) -> String {
        let harmonics: Vec<String> = self.result.positive_harmonics().iter().map(|n| n.to_string()).collect();
        let critical = self.critical.map_or_else(|| "n/a".to_string(), |c| format!("{:.6}", c.c));
        format!(
            "unstable_harmonics={{{}}}, bandwidth={:.6}, critical_C={}",
            harmonics.join(","),
            self.result.bandwidth,
            critical
        )
    }
}

pub fn run_stability(config: &StabilityConfig) -> Result<StabilityReport> {
    config.validate()?;
    let spectrum = config
        .spectrum
        .spectrum()?
        .ok_or_else(|| Error::Configuration("field `spectrum`: a stability scan needs a nonzero spectrum".into()))?;
    let result = stability_scan(spectrum.as_ref(), config.p, config.q, config.length, config.n_max)?;
    let dx = 2.0 * PI / config.length;

    let critical = match (config.critical_bracket, &config.spectrum) {
        (Some([lo, hi]), SpectrumConfig::Gaussian { sigma, .. }) => {
            let sigma = *sigma;
            let family = |c: f64| GaussianSpectrumParams::new(c, sigma).map(GaussianSpectrum);
            Some(critical_intensity(family, dx, config.p, config.q, (lo, hi), config.critical_tolerance)?)
        }
        _ => None,
    };

    let harmonics = config.curve_harmonics.clone().unwrap_or_else(|| (1..=config.n_max as i64).collect());
    let curves = harmonics
        .par_iter()
        .map(|&n| {
            let x = n as f64 * dx;
            let grid = SymmetricGrid::for_spectrum(spectrum.as_ref(), x);
            nyquist_curve(spectrum.as_ref(), x, config.p, config.q, &grid).map(|c| (n, c))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityReport { result, critical, curves })
}
