//! Density sweeps: every (protocol, density, seed) combination of a
//! scenario, optionally on a worker pool.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig};
use crate::engine::EngineError;
use crate::metrics::{aggregate_sweep, plot_data, sort_summaries, to_csv, MetricsSummary, PLOT_METRICS};
use crate::mobility::MobilityError;
use crate::protocols::ProtocolKind;
use crate::radio::ObstacleMap;
use crate::world::{simulate, Injection, RunOutput};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run {protocol} with {density} vehicles, seed {seed} failed: {source}")]
    Run {
        protocol: ProtocolKind,
        density: u32,
        seed: u64,
        #[source]
        source: RunError,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepOptions {
    /// Spread runs over the rayon pool. Output is identical either way.
    pub parallel: bool,
    /// Capture every run's event log.
    pub event_log: bool,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Sorted by protocol label, vehicle count, seed.
    pub summaries: Vec<MetricsSummary>,
    /// Concatenated event logs, each run introduced by a `# run` line, in
    /// the same order as `summaries`.
    pub event_log: Option<Vec<u8>>,
}

impl SweepResult {
    pub fn csv(&self) -> String {
        to_csv(&self.summaries)
    }
}

/// One run of the scenario with a fixed protocol, density and seed.
pub fn run_one(
    cfg: &ScenarioConfig,
    obstacles: &Arc<ObstacleMap>,
    protocol: ProtocolKind,
    density: u32,
    seed: u64,
    script: Vec<Injection>,
    log: Option<&mut dyn Write>,
) -> Result<RunOutput, SweepError> {
    let wrap = |source: RunError| SweepError::Run {
        protocol,
        density,
        seed,
        source,
    };
    let (mob, stations) = cfg.build_world(density, seed).map_err(|e| wrap(e.into()))?;
    simulate(cfg.run_params(protocol, seed), mob, stations, Arc::clone(obstacles), script, log).map_err(|e| wrap(e.into()))
}

type Job = (ProtocolKind, u32, u64);

fn run_job(cfg: &ScenarioConfig, obstacles: &Arc<ObstacleMap>, job: Job, capture: bool) -> Result<(MetricsSummary, Vec<u8>), SweepError> {
    let (protocol, density, seed) = job;
    let mut buf = Vec::new();
    if capture {
        let _ = writeln!(buf, "# run protocol={protocol} vehicles={density} seed={seed}");
    }
    let out = run_one(
        cfg,
        obstacles,
        protocol,
        density,
        seed,
        Vec::new(),
        if capture { Some(&mut buf as &mut dyn Write) } else { None },
    )?;
    Ok((out.summary(), buf))
}

pub fn run_sweep(cfg: &ScenarioConfig, opts: SweepOptions) -> Result<SweepResult, SweepError> {
    let obstacles = Arc::new(cfg.build_obstacles()?);
    let mut jobs: Vec<Job> = Vec::new();
    for &p in &cfg.protocols {
        for &d in &cfg.densities {
            for &s in &cfg.seeds {
                jobs.push((p, d, s));
            }
        }
    }
    let results: Vec<Result<(MetricsSummary, Vec<u8>), SweepError>> = if opts.parallel {
        jobs.par_iter().map(|&j| run_job(cfg, &obstacles, j, opts.event_log)).collect()
    } else {
        jobs.iter().map(|&j| run_job(cfg, &obstacles, j, opts.event_log)).collect()
    };
    // Report the first failure in job order so the error is deterministic too.
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r?);
    }
    rows.sort_by(|a, b| {
        let key = |s: &MetricsSummary| (s.protocol.label(), s.vehicle_count, s.seed);
        key(&a.0).cmp(&key(&b.0))
    });
    let event_log = opts.event_log.then(|| rows.iter().flat_map(|(_, log)| log.iter().copied()).collect());
    let mut summaries: Vec<MetricsSummary> = rows.into_iter().map(|(s, _)| s).collect();
    sort_summaries(&mut summaries);
    Ok(SweepResult { summaries, event_log })
}

/// Writes one `<protocol>_<metric>.dat` file per protocol and metric.
pub fn write_plot_data(dir: &Path, summaries: &[MetricsSummary]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let rows = aggregate_sweep(summaries);
    let mut protocols: Vec<ProtocolKind> = rows.iter().map(|r| r.protocol).collect();
    protocols.sort_by_key(|p| p.label());
    protocols.dedup();
    let mut written = Vec::new();
    for p in protocols {
        for metric in PLOT_METRICS {
            let path = dir.join(format!("{}_{metric}.dat", p.label()));
            fs::write(&path, plot_data(&rows, p, metric))?;
            written.push(path);
        }
    }
    Ok(written)
}
