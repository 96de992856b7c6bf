//! Single evolution runs with artifact output.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{AmplificationReport, AmplificationTracker, DiagnosticsObserver, DiagnosticsRecord, InvariantDrift};
use crate::error::Result;
use crate::grid::Grid;
use crate::scheme::{evolve, Observer, StepEvent, Stepper};

use super::config::RunConfig;
use super::snapshot::SnapshotRecord;

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const DIAGONAL_FILE: &str = "diagonal.bin";
pub const SNAPSHOT_FILE: &str = "snapshots.bin";
pub const LAST_GOOD_FILE: &str = "last_good.bin";
pub const SUMMARY_FILE: &str = "summary.json";

/// Writes full snapshots and diagonal slices as the run proceeds.
struct SnapshotWriter {
    grid: Grid,
    snapshots: BufWriter<File>,
    diagonal: BufWriter<File>,
    snapshot_stride: usize,
    diag_stride: usize,
    last_step: usize,
}

impl Observer for SnapshotWriter {
    fn observe(&mut self, event: &StepEvent<'_>) -> Result<()> {
        let state = event.state;
        let last = state.step == self.last_step;
        let full = state.step == 0 || last || (self.snapshot_stride > 0 && state.step.is_multiple_of(self.snapshot_stride));
        if full {
            SnapshotRecord::full(state.t, &self.grid, &state.u).write_to(&mut self.snapshots)?;
        }
        if last || state.step.is_multiple_of(self.diag_stride) {
            SnapshotRecord::diagonal(state.t, &self.grid, &state.u).write_to(&mut self.diagonal)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// `ok` or `failed`.
    pub status: String,
    #[serde(default)]
    pub error: Option<String>,
    pub steps: usize,
    pub final_time: f64,
    /// Absent for a zero background or a vanishing initial field.
    pub amplification: Option<AmplificationReport>,
    pub final_drift: InvariantDrift,
    pub max_drift: InvariantDrift,
    pub max_balance_ratio: f64,
    pub config: RunConfig,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub summary: RunSummary,
    /// Diagnostics rows every `diag_stride` steps.
    pub records: Vec<DiagnosticsRecord>,
    /// `(t, ‖u‖_∞)` at every step.
    pub peak_history: Vec<(f64, f64)>,
}

/// Runs `config`, writing artifacts to `output_dir` when given.
///
/// A failing step still writes the last good state and a `failed` summary
/// before the error is returned.
pub fn run_evolution(config: &RunConfig, output_dir: Option<&Path>) -> Result<RunOutcome> {
    config.validate()?;
    let grid = config.grid()?;
    let gamma = Arc::new(config.spectrum.autocorrelation(&grid)?);
    let scheme = config.scheme();
    let mut stepper = Stepper::new(grid, scheme, Arc::clone(&gamma))?;
    let u0 = config.initial_field(&grid)?;
    let mut state = stepper.initial_state(u0)?;
    let total = scheme.num_steps();
    info!("N = {}, h = {:.5}, {} steps of tau = {}", grid.n(), grid.h(), total, config.tau);

    let mut diagnostics = DiagnosticsObserver::new(grid, &gamma, config.p, config.q, config.tau)?
        .with_stride(config.diag_stride);
    let mut tracker = AmplificationTracker::new(&gamma);
    let mut writer = None;
    if let Some(dir) = output_dir {
        fs::create_dir_all(dir)?;
        let csv = BufWriter::new(File::create(dir.join(DIAGNOSTICS_FILE))?);
        diagnostics = diagnostics.with_csv(Box::new(csv))?;
        writer = Some(SnapshotWriter {
            grid,
            snapshots: BufWriter::new(File::create(dir.join(SNAPSHOT_FILE))?),
            diagonal: BufWriter::new(File::create(dir.join(DIAGONAL_FILE))?),
            snapshot_stride: config.snapshot_stride,
            diag_stride: config.diag_stride,
            last_step: total,
        });
    }

    let result = {
        let mut observers: Vec<&mut dyn Observer> = vec![&mut diagnostics, &mut tracker];
        if let Some(w) = writer.as_mut() {
            observers.push(w);
        }
        evolve(&mut stepper, &mut state, &mut observers)
    };
    diagnostics.flush()?;
    if let Some(w) = writer.as_mut() {
        w.snapshots.flush()?;
        w.diagonal.flush()?;
    }

    let amplification = if gamma.gamma0() > 0.0 { tracker.report().ok() } else { None };
    let summary = RunSummary {
        status: if result.is_ok() { "ok" } else { "failed" }.into(),
        error: result.as_ref().err().map(|e| e.to_string()),
        steps: state.step,
        final_time: state.t,
        amplification,
        final_drift: diagnostics.final_drift(),
        max_drift: diagnostics.max_drift(),
        max_balance_ratio: diagnostics.max_balance_ratio(),
        config: config.clone(),
    };
    if let Some(dir) = output_dir {
        if result.is_err() {
            warn!("run failed at step {}; writing last good state", state.step);
            let mut out = BufWriter::new(File::create(dir.join(LAST_GOOD_FILE))?);
            SnapshotRecord::full(state.t, &grid, &state.u).write_to(&mut out)?;
            out.flush()?;
        }
        fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    }
    result?;
    Ok(RunOutcome { summary, records: diagnostics.records().to_vec(), peak_history: tracker.history().to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::{InitialDataConfig, SpectrumConfig};
    use crate::scheme::{Dynamics, InitMode};
    use std::io::BufReader;

    fn small(final_time: f64) -> RunConfig {
        RunConfig {
            p: 1.0,
            q: 1.0,
            length: 50.0,
            n: 40,
            tau: 0.05,
            final_time,
            spectrum: SpectrumConfig::Gaussian { c: 0.9, sigma: 0.36 },
            init_mode: InitMode::Advanced,
            dynamics: Dynamics::Full,
            u0: InitialDataConfig::reference(),
            seed: 0,
            snapshot_stride: 2,
            diag_stride: 1,
            output_dir: None,
        }
    }

    #[test]
    fn writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_evolution(&small(0.25), Some(dir.path())).unwrap();
        assert_eq!(outcome.summary.steps, 5);
        assert_eq!(outcome.records.len(), 6);
        let csv = fs::read_to_string(dir.path().join(DIAGNOSTICS_FILE)).unwrap();
        assert_eq!(csv.lines().count(), 7);
        let read = |name: &str| {
            SnapshotRecord::read_all(&mut BufReader::new(File::open(dir.path().join(name)).unwrap())).unwrap()
        };
        let full = read(SNAPSHOT_FILE);
        assert_eq!(full.iter().map(|r| r.header.t).collect::<Vec<_>>().len(), 4); // steps 0, 2, 4, 5
        assert_eq!(read(DIAGONAL_FILE).len(), 6);
        let summary: RunSummary =
            serde_json::from_str(&fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
        assert_eq!(summary.status, "ok");
        assert!(summary.amplification.unwrap().satisfies_triangle_bounds());
        assert!(summary.final_drift.i0 < 1e-12);
    }

    #[test]
    fn zero_final_time_writes_initial_state_only() {
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_evolution(&small(0.0), Some(dir.path())).unwrap();
        assert_eq!(outcome.summary.steps, 0);
        let full =
            SnapshotRecord::read_all(&mut BufReader::new(File::open(dir.path().join(SNAPSHOT_FILE)).unwrap())).unwrap();
        assert_eq!(full.len(), 1);
        assert_eq!(full[0].header.t, 0.0);
        let report = outcome.summary.amplification.unwrap();
        assert_eq!(report.iaf, 1.0);
    }
}
