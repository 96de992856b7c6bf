//! Experiment drivers: configuration files, artifacts and campaigns.

pub mod config;
pub mod eoc;
pub mod montecarlo;
pub mod run;
pub mod snapshot;
pub mod stability_run;

pub use config::{InitialDataConfig, RunConfig, SpectrumConfig, StabilityConfig};
pub use eoc::{ladder_csv, run_ladder, soliton_run, soliton_validation, EocLadder, LadderEntry, SolitonValidation, EOC_FINAL_TIME};
pub use montecarlo::{campaign_csv, run_campaign, IntensitySampling, MonteCarloConfig, RealizationResult};
pub use run::{run_evolution, RunOutcome, RunSummary};
pub use snapshot::{SnapshotHeader, SnapshotKind, SnapshotRecord};
pub use stability_run::{run_stability, StabilityReport};
