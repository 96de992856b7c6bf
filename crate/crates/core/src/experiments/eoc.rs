//! Convergence ladders on the periodized soliton.

use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{DiagnosticsObserver, InvariantDrift};
use crate::error::{ensure, Error, Result};
use crate::scheme::{evolve, InitMode, Observer, Stepper};
use crate::spectra::Autocorrelation;
use crate::validation::{eoc, soliton_exact, EocRow, Refinement, SolitonErrorObserver, SolitonParams};

/// Final time of every ladder run.
pub const EOC_FINAL_TIME: f64 = 0.6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EocLadder {
    pub soliton: SolitonParams,
    pub init_mode: InitMode,
    pub refined: Refinement,
    /// Mesh sizes `h` in run order.
    pub spacings: Vec<f64>,
    /// Time steps `τ` in run order.
    pub steps: Vec<f64>,
    pub final_time: f64,
}

impl EocLadder {
    /// `τ = 0.03 · 2^{−i/2}`, `i = 0..4`, at `h = 0.04`.
    pub fn time(init_mode: InitMode) -> Self {
        let steps = (0..4).map(|i| 0.03 / 2f64.sqrt().powi(i)).collect();
        Self {
            soliton: SolitonParams::reference(),
            init_mode,
            refined: Refinement::Tau,
            spacings: vec![0.04; 4],
            steps,
            final_time: EOC_FINAL_TIME,
        }
    }

    /// `h = 0.4 · 2^{−i/4}`, `i = 0..4`, at `τ = 5·10⁻⁴`.
    pub fn space(init_mode: InitMode) -> Self {
        let spacings = (0..4).map(|i| 0.4 / 2f64.powf(0.25).powi(i)).collect();
        Self {
            soliton: SolitonParams::reference(),
            init_mode,
            refined: Refinement::H,
            spacings,
            steps: vec![5e-4; 4],
            final_time: EOC_FINAL_TIME,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.soliton.validate()?;
        ensure(!self.steps.is_empty() && self.steps.len() == self.spacings.len(), || {
            Error::Configuration("ladder needs equally many mesh sizes and time steps".into())
        })?;
        ensure(self.final_time.is_finite() && self.final_time >= 0.0, || {
            Error::Parameter(format!("final time must be non-negative, got {}", self.final_time))
        })
    }
}

/// Errors and invariant drift of one soliton run with the requested spacing.
///
/// The realized spacing is `L / round(L / h)`; the row reports the realized value.
pub fn soliton_run(
    soliton: &SolitonParams,
    spacing: f64,
    tau: f64,
    final_time: f64,
    init_mode: InitMode,
) -> Result<(EocRow, InvariantDrift)> {
    let grid = soliton.grid(spacing)?;
    let gamma = Arc::new(Autocorrelation::zero(&grid));
    let config = soliton.scheme_config(tau, final_time, init_mode);
    let mut stepper = Stepper::new(grid, config, Arc::clone(&gamma))?;
    let mut state = stepper.initial_state(soliton_exact(soliton, &grid, 0.0)?)?;
    let mut errors = SolitonErrorObserver::new(*soliton, grid, tau)?;
    let mut diagnostics = DiagnosticsObserver::new(grid, &gamma, soliton.p, soliton.q, tau)?
        .with_stride(usize::MAX)
        .discard_records();
    {
        let mut observers: [&mut dyn Observer; 2] = [&mut errors, &mut diagnostics];
        evolve(&mut stepper, &mut state, &mut observers)?;
    }
    let drift = diagnostics.final_drift();
    let mut row = EocRow::new(grid.h(), tau, errors.e_u(), errors.e_phi());
    row.d_i01 = drift.i0 + drift.i1;
    row.d_i2 = drift.i2;
    row.d_i3 = drift.i3;
    Ok((row, drift))
}

/// Error history of a long soliton run.
#[derive(Clone, Debug)]
pub struct SolitonValidation {
    /// `(t, E_u, E_phi, constraint error)` at every step.
    pub history: Vec<(f64, f64, f64, f64)>,
    pub final_drift: InvariantDrift,
    pub max_drift: InvariantDrift,
}

impl SolitonValidation {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("t,E_u,E_phi,constraint_err\n");
        for (t, eu, ephi, c) in &self.history {
            out.push_str(&format!("{t:.17e},{eu:.17e},{ephi:.17e},{c:.17e}\n"));
        }
        out
    }

    pub fn drift_csv(&self) -> String {
        let (f, m) = (&self.final_drift, &self.max_drift);
        format!(
            "which,dI0,dI1,dI2,dI3\nfinal,{:.6e},{:.6e},{:.6e},{:.6e}\nmax,{:.6e},{:.6e},{:.6e},{:.6e}\n",
            f.i0, f.i1, f.i2, f.i3, m.i0, m.i1, m.i2, m.i3
        )
    }
}

/// Runs the soliton to `final_time`, recording errors and the constraint error every step.
pub fn soliton_validation(
    soliton: &SolitonParams,
    spacing: f64,
    tau: f64,
    final_time: f64,
    init_mode: InitMode,
) -> Result<SolitonValidation> {
    let grid = soliton.grid(spacing)?;
    let gamma = Arc::new(Autocorrelation::zero(&grid));
    let config = soliton.scheme_config(tau, final_time, init_mode);
    let mut stepper = Stepper::new(grid, config, Arc::clone(&gamma))?;
    let mut state = stepper.initial_state(soliton_exact(soliton, &grid, 0.0)?)?;
    let mut errors = SolitonErrorObserver::new(*soliton, grid, tau)?.with_history();
    let mut diagnostics = DiagnosticsObserver::new(grid, &gamma, soliton.p, soliton.q, tau)?;
    {
        let mut observers: [&mut dyn Observer; 2] = [&mut errors, &mut diagnostics];
        evolve(&mut stepper, &mut state, &mut observers)?;
    }
    let history = errors
        .history()
        .iter()
        .zip(diagnostics.records())
        .map(|(&(t, eu, ephi), r)| (t, eu, ephi, r.constraint_error))
        .collect();
    Ok(SolitonValidation { history, final_drift: diagnostics.final_drift(), max_drift: diagnostics.max_drift() })
}

/// One ladder entry; `row` is `None` when the run failed.
#[derive(Clone, Debug)]
pub struct LadderEntry {
    pub spacing: f64,
    pub tau: f64,
    pub row: Option<EocRow>,
    /// Final relative drift of each invariant.
    pub drift: Option<InvariantDrift>,
    pub error: Option<String>,
}

/// Runs every rung (in parallel) and fills in the orders between consecutive successful rows.
pub fn run_ladder(ladder: &EocLadder) -> Result<(Vec<LadderEntry>, Vec<EocRow>)> {
    ladder.validate()?;
    let entries: Vec<LadderEntry> = ladder
        .spacings
        .par_iter()
        .zip(ladder.steps.par_iter())
        .map(|(&h, &tau)| {
            info!("soliton run h = {h}, tau = {tau}");
            match soliton_run(&ladder.soliton, h, tau, ladder.final_time, ladder.init_mode) {
                Ok((row, drift)) => LadderEntry { spacing: h, tau, row: Some(row), drift: Some(drift), error: None },
                Err(e) => {
                    warn!("soliton run h = {h}, tau = {tau} failed: {e}");
                    LadderEntry { spacing: h, tau, row: None, drift: None, error: Some(e.to_string()) }
                }
            }
        })
        .collect();
    let rows: Vec<EocRow> = entries.iter().filter_map(|e| e.row).collect();
    let rows = eoc(rows, ladder.refined)?;
    Ok((entries, rows))
}

/// CSV table: header plus one line per rung, failed rungs marked `failed`.
pub fn ladder_csv(entries: &[LadderEntry], rows: &[EocRow]) -> String {
    let mut out = String::from(EocRow::CSV_HEADER);
    out.push('\n');
    let mut ok = rows.iter();
    for entry in entries {
        match entry.row {
            Some(_) => out.push_str(&ok.next().expect("row for each successful entry").csv_row()),
            None => out.push_str(&format!("{},{},failed,,,,,,", entry.spacing, entry.tau)),
        }
        out.push('\n');
    }
    out
}
