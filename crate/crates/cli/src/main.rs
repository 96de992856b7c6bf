use std::fs;
use std::path::{Path, PathBuf};

use alber_core::experiments::{
    campaign_csv, ladder_csv, run_campaign, run_evolution, run_ladder, run_stability, soliton_validation, EocLadder,
    MonteCarloConfig, RunConfig, StabilityConfig,
};
use alber_core::scheme::InitMode;
use alber_core::validation::SolitonParams;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

/// Solver suite for the Alber equation on a periodic square.
#[derive(Parser, Debug)]
#[command(name = "alber", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Directory for output artifacts.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Worker threads; `ALBER_THREADS` takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Full-snapshot stride for `evolve`, overriding the config value.
    #[arg(long, global = true)]
    snapshot_stride: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one evolution from a run config.
    Evolve { config: PathBuf },
    /// Convergence ladder on the periodized soliton.
    Eoc {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, value_enum, default_value_t = Init::Advanced)]
        init: Init,
        /// Final time of each rung.
        #[arg(long, default_value_t = alber_core::experiments::EOC_FINAL_TIME)]
        final_time: f64,
    },
    /// Penrose-type stability scan of a background spectrum.
    Stability { config: PathBuf },
    /// Monte Carlo amplification-factor campaign.
    Montecarlo { config: PathBuf },
    /// Full-lap soliton run with error histories.
    SolitonValidate {
        #[arg(long, default_value_t = 1e-3)]
        tau: f64,
        #[arg(long, default_value_t = 0.09)]
        h: f64,
        /// Defaults to one lap of the domain.
        #[arg(long)]
        final_time: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Time,
    Space,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Init {
    Naive,
    Advanced,
}

impl From<Init> for InitMode {
    fn from(init: Init) -> Self {
        match init {
            Init::Naive => InitMode::Naive,
            Init::Advanced => InitMode::Advanced,
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var("ALBER_THREADS") {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("ALBER_THREADS must be a positive integer, got `{v}`"))?;
            if n == 0 {
                bail!("ALBER_THREADS must be a positive integer, got `{v}`");
            }
            Ok(Some(n))
        }
        Err(_) => match flag {
            Some(0) => bail!("--threads must be at least 1"),
            other => Ok(other),
        },
    }
}

fn write_output(dir: Option<&Path>, name: &str, contents: &str) -> Result<()> {
    if let Some(dir) = dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

fn evolve(common: &Common, path: &Path) -> Result<()> {
    let mut config = RunConfig::from_path(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(stride) = common.snapshot_stride {
        config.snapshot_stride = stride;
    }
    let dir = common
        .output_dir
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("alber-output"));
    let outcome = run_evolution(&config, Some(&dir)).with_context(|| format!("run failed; artifacts in {}", dir.display()))?;
    println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
    Ok(())
}

fn eoc(common: &Common, mode: Mode, init: Init, final_time: f64) -> Result<()> {
    let mut ladder = match mode {
        Mode::Time => EocLadder::time(init.into()),
        Mode::Space => EocLadder::space(init.into()),
    };
    ladder.final_time = final_time;
    let (entries, rows) = run_ladder(&ladder)?;
    let csv = ladder_csv(&entries, &rows);
    let name = format!("eoc_{}_{}.csv", format!("{mode:?}").to_lowercase(), format!("{init:?}").to_lowercase());
    write_output(common.output_dir.as_deref(), &name, &csv)?;
    print!("{csv}");
    Ok(())
}

fn stability(common: &Common, path: &Path) -> Result<()> {
    let config = StabilityConfig::from_path(path).with_context(|| format!("loading {}", path.display()))?;
    let report = run_stability(&config)?;
    let dir = common.output_dir.as_deref();
    write_output(dir, "windings.csv", &report.windings_csv())?;
    write_output(dir, "curves.csv", &report.curves_csv(config.curve_decimation))?;
    if dir.is_none() {
        print!("{}", report.windings_csv());
    }
    println!("{}", report.summary_line());
    Ok(())
}

fn montecarlo(common: &Common, path: &Path, threads: Option<usize>) -> Result<()> {
    let mut config = MonteCarloConfig::from_path(path).with_context(|| format!("loading {}", path.display()))?;
    if threads.is_some() {
        config.parallelism = threads;
    }
    let results = run_campaign(&config)?;
    let csv = campaign_csv(&config, &results);
    match common.output_dir.as_deref() {
        Some(dir) => write_output(Some(dir), "ensemble.csv", &csv)?,
        None => print!("{csv}"),
    }
    let failed = results.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        log::warn!("{failed} of {} realizations did not finish with status ok", results.len());
    }
    Ok(())
}

fn soliton_validate(common: &Common, tau: f64, h: f64, final_time: Option<f64>) -> Result<()> {
    let soliton = SolitonParams::reference();
    let final_time = final_time.unwrap_or_else(|| soliton.lap_time());
    let report = soliton_validation(&soliton, h, tau, final_time, InitMode::Advanced)?;
    let dir = common.output_dir.as_deref();
    write_output(dir, "soliton_errors.csv", &report.history_csv())?;
    write_output(dir, "soliton_drift.csv", &report.drift_csv())?;
    if let Some(&(t, eu, ephi, c)) = report.history.last() {
        println!("t={t:.6} E_u={eu:.6e} E_phi={ephi:.6e} constraint_err={c:.6e}");
    }
    print!("{}", report.drift_csv());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let threads = thread_count(cli.common.threads)?;
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Evolve { config } => evolve(&cli.common, config),
        Command::Eoc { mode, init, final_time } => eoc(&cli.common, *mode, *init, *final_time),
        Command::Stability { config } => stability(&cli.common, config),
        Command::Montecarlo { config } => montecarlo(&cli.common, config, threads),
        Command::SolitonValidate { tau, h, final_time } => soliton_validate(&cli.common, *tau, *h, *final_time),
    }
}
