//! Running configured experiments and writing their CSV artifacts.

use crate::config::{ConfigError, Experiment, ExperimentConfig, OutputFile};
use coulomb_gas::observables::{
    loglog_fit, write_positions_csv, write_rate_scan_csv, write_scalars_csv, write_stats_csv,
};
use coulomb_gas::sampler::{run_chain_from_default_start, ChainRecord, RejectionStats, SamplerError, SamplerParams};
use rayon::prelude::*;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("chain {chain} failed: {source}")]
    Sampler { chain: usize, source: SamplerError },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("invalid dt list: {0}")]
    DtList(String),
}

/// Overrides and parallelism given on the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Independent chains, using generator streams `0..chains`.
    pub chains: usize,
    /// Worker threads; `None` lets rayon decide.
    pub threads: Option<usize>,
}

impl RunOptions {
    pub fn single() -> Self {
        Self { chains: 1, ..Self::default() }
    }

    /// Applies the seed and output overrides to a parsed config.
    pub fn apply(&self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = cfg.clone();
        if let Some(seed) = self.seed {
            cfg.sampler.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        cfg
    }
}

#[derive(Debug)]
pub struct RunSummary {
    /// One record per chain, in stream order.
    pub records: Vec<ChainRecord>,
    /// Counters summed over chains.
    pub stats: RejectionStats,
    pub files: Vec<PathBuf>,
}

impl RunSummary {
    pub fn max_constraint_residual(&self) -> f64 {
        self.records.iter().map(|r| r.max_constraint_residual).fold(0.0, f64::max)
    }
}

/// Runs the chains of an experiment, merging in stream order.
pub fn run_chains(exp: &Experiment, params: &SamplerParams, opts: &RunOptions) -> Result<Vec<ChainRecord>, RunError> {
    let chains = opts.chains.max(1);
    let one = |chain: usize| {
        let p = SamplerParams { stream: chain as u64, ..params.clone() };
        run_chain_from_default_start(&exp.model, &exp.constraints, &p, &exp.schedule)
            .map_err(|source| RunError::Sampler { chain, source })
    };
    if chains == 1 {
        return Ok(vec![one(0)?]);
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = opts.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| RunError::Pool(e.to_string()))?;
    pool.install(|| (0..chains).into_par_iter().map(one).collect())
}

/// Validates `cfg` after applying the overrides, runs it and
/// writes the CSV suite plus `config.toml` into the output directory.
pub fn run_config(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, RunError> {
    let cfg = opts.apply(cfg);
    let exp = cfg.build()?;
    let records = run_chains(&exp, &exp.params, opts)?;
    let mut stats = RejectionStats::default();
    for r in &records {
        stats.merge(&r.stats);
    }

    let dir = &exp.output.dir;
    std::fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.clone(), source })?;
    let mut files = Vec::new();
    let n = exp.model.n();
    let d = exp.model.dim();
    if exp.output.wants(OutputFile::Positions) {
        files.push(write_file(dir, "positions.csv", |w| {
            for (chain, r) in records.iter().enumerate() {
                write_positions_csv(&mut *w, d, &r.snapshots, chain * n, chain == 0)?;
            }
            Ok(())
        })?);
    }
    if exp.output.wants(OutputFile::Scalars) {
        files.push(write_file(dir, "scalars.csv", |w| {
            for (chain, r) in records.iter().enumerate() {
                write_scalars_csv(&mut *w, &r.scalars, chain == 0)?;
            }
            Ok(())
        })?);
    }
    if exp.output.wants(OutputFile::Stats) {
        files.push(write_file(dir, "stats.csv", |w| write_stats_csv(w, &stats))?);
    }
    files.push(write_file(dir, "config.toml", |w| w.write_all(cfg.to_toml_string().as_bytes()))?);
    Ok(RunSummary { records, stats, files })
}

pub fn run_path(path: &Path, opts: &RunOptions) -> Result<RunSummary, RunError> {
    run_config(&ExperimentConfig::load(path)?, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    /// `(dt, metropolis rejection fraction)` in the order given.
    pub rows: Vec<(f64, f64)>,
    /// Least-squares slope and intercept of `log fraction` against
    /// `log dt`, over the usable rows.
    pub fit: Option<(f64, f64)>,
    /// Rows left out of the fit: fraction 0 (log undefined) or 1
    /// (saturated).
    pub excluded: Vec<(f64, f64)>,
    pub file: PathBuf,
}

/// Runs the experiment once per `dt` and writes `rate_scan.csv`. With a
/// `horizon` in the config the simulated time is held fixed, so smaller
/// steps get proportionally more iterations.
pub fn scan_dt(cfg: &ExperimentConfig, dts: &[f64], opts: &RunOptions) -> Result<ScanResult, RunError> {
    if dts.len() < 3 {
        return Err(RunError::DtList(format!("need at least 3 values, got {}", dts.len())));
    }
    if let Some(bad) = dts.iter().find(|dt| !(**dt > 0.0 && dt.is_finite())) {
        return Err(RunError::DtList(format!("dt must be positive and finite, got {bad}")));
    }
    let cfg = opts.apply(cfg);
    let mut exp = cfg.build()?;
    exp.schedule = exp.schedule.clone().scalars_only().with_stride(usize::MAX);

    let mut rows = Vec::with_capacity(dts.len());
    for &dt in dts {
        let n_iter = match exp.horizon {
            Some(t) => SamplerParams::steps_for_horizon(t, dt),
            None => exp.params.n_iter,
        };
        let params = SamplerParams { dt, n_iter, ..exp.params.clone() };
        let mut stats = RejectionStats::default();
        for r in run_chains(&exp, &params, opts)? {
            stats.merge(&r.stats);
        }
        rows.push((dt, stats.metropolis_reject_fraction()));
    }

    let dir = &exp.output.dir;
    std::fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.clone(), source })?;
    let file = write_file(dir, "rate_scan.csv", |w| write_rate_scan_csv(w, &rows))?;
    let excluded = rows.iter().copied().filter(|(_, f)| !(*f > 0.0 && *f < 1.0)).collect();
    let fit = loglog_fit(&rows);
    Ok(ScanResult { rows, fit, excluded, file })
}

fn write_file(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<PathBuf, RunError> {
    let path = dir.join(name);
    let io = |source| RunError::Io { path: path.clone(), source };
    let mut w = BufWriter::new(File::create(&path).map_err(io)?);
    body(&mut w).map_err(io)?;
    w.flush().map_err(io)?;
    Ok(path)
}
