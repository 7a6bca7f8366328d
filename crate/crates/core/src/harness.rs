//! Experiment driver: warm-up, success-table estimation, throughput sweeps,
//! statistics, CSV output and the figure presets.
//!
//! Every sweep point evaluates all its `p` values in one pass over the slots
//! (see [`run_slot_multi`]), so the curves of one replication share their
//! channel draws.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{Cell, Provenance, Source, SuccessTable, TableKind, ThroughputRecord};
use crate::channel::make_interference_spaces;
use crate::config::{ConfigError, NetworkConfig};
use crate::mac::CdfBank;
use crate::matkernels::ComplexMatrix;
use crate::phy::{zf_decode_linear, Stream};
use crate::protocols::{
    conditioned_seed, run_conditioned_slot_with, run_slot_multi, warm_up, ProtocolContext, ProtocolError, ProtocolKind, Receiver,
};
use crate::rng::{derive_seed, Purpose, StreamSource};
use crate::UserId;

/// Environment variable that caps the worker pool.
pub const WORKERS_ENV: &str = "OIA_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("point {point}: {source}")]
    Point {
        point: String,
        #[source]
        source: ProtocolError,
    },
    #[error("protocol {0} is not in the sweep")]
    MissingProtocol(ProtocolKind),
    #[error("{0}")]
    Protocol(#[from] ProtocolError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One curve of a sweep: a protocol at a fixed `S` (`None` keeps the base
/// value).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Series {
    pub protocol: ProtocolKind,
    pub s: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentPlan {
    pub base: NetworkConfig,
    pub series: Vec<Series>,
    pub p_values: Vec<f64>,
    /// Empty keeps `base.k`.
    pub k_values: Vec<usize>,
    /// Sets `M = L = S = K` at every `K` point.
    pub antennas_follow_k: bool,
    pub slots: u64,
    pub replications: u64,
    pub warmup_samples: usize,
    pub shared_cdf: bool,
    pub seed: u64,
}

impl ExperimentPlan {
    pub const DEFAULT_SLOTS: u64 = 100_000;
    pub const DEFAULT_REPLICATIONS: u64 = 3;
    pub const DEFAULT_WARMUP: usize = 100_000;

    pub fn new(base: NetworkConfig, series: Vec<Series>, p_values: Vec<f64>) -> Self {
        let seed = base.seed;
        Self {
            base,
            series,
            p_values,
            k_values: Vec::new(),
            antennas_follow_k: false,
            slots: Self::DEFAULT_SLOTS,
            replications: Self::DEFAULT_REPLICATIONS,
            warmup_samples: Self::DEFAULT_WARMUP,
            shared_cdf: true,
            seed,
        }
    }

    /// Every protocol at every `S`, except MPR, which ignores `S` and gets a
    /// single curve.
    pub fn cross_series(protocols: &[ProtocolKind], s_values: &[usize]) -> Vec<Series> {
        let mut out = Vec::new();
        for &protocol in protocols {
            if protocol == ProtocolKind::Mpr || s_values.is_empty() {
                out.push(Series { protocol, s: None });
            } else {
                out.extend(s_values.iter().map(|&s| Series { protocol, s: Some(s) }));
            }
        }
        out
    }

    /// `start, start + step, ...` up to `end` inclusive, snapped to 1e-9.
    pub fn p_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>, ConfigError> {
        if !(step > 0.0) || !(start <= end) {
            return Err(ConfigError::Invalid(format!("empty p grid: start {start}, end {end}, step {step}")));
        }
        let n = ((end - start) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect())
    }

    fn k_points(&self) -> Vec<usize> {
        if self.k_values.is_empty() {
            vec![self.base.k]
        } else {
            self.k_values.clone()
        }
    }

    /// The configuration of one curve at one `K` (with `p` = first grid
    /// value).
    pub fn point_config(&self, series: Series, k: usize) -> NetworkConfig {
        let mut cfg = self.base.clone();
        cfg.k = k;
        if self.antennas_follow_k {
            cfg.m = k;
            cfg.l = k;
            cfg.s = k;
        }
        if let Some(s) = series.s {
            cfg.s = s;
        }
        cfg.p = self.p_values.first().copied().unwrap_or(0.0);
        cfg.seed = self.seed;
        cfg
    }

    /// Checks the whole plan before anything runs.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.slots < 1 {
            return Err(HarnessError::Plan("slots must be >= 1".into()));
        }
        if self.replications < 1 {
            return Err(HarnessError::Plan("replications must be >= 1".into()));
        }
        if self.series.is_empty() || self.p_values.is_empty() {
            return Err(HarnessError::Plan("the grid is empty".into()));
        }
        for &p in &self.p_values {
            if !(0.0..=1.0).contains(&p) {
                return Err(HarnessError::Plan(format!("p = {p} is out of range ([0, 1])")));
            }
        }
        for &series in &self.series {
            for k in self.k_points() {
                let cfg = self.point_config(series, k);
                let check = cfg.validate().and_then(|_| series.protocol.validate(&cfg));
                if let Err(e) = check {
                    return Err(HarnessError::Point { point: point_name(series.protocol, &cfg), source: e.into() });
                }
                if series.protocol.is_opportunistic() && self.warmup_samples == 0 {
                    return Err(HarnessError::Plan(format!(
                        "{} needs warm-up samples",
                        point_name(series.protocol, &cfg)
                    )));
                }
            }
        }
        Ok(())
    }
}

fn point_name(protocol: ProtocolKind, cfg: &NetworkConfig) -> String {
    format!("{protocol} K={} N={} M={} L={} S={}", cfg.k, cfg.n, cfg.m, cfg.l, cfg.s)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepMetadata {
    pub plan: ExperimentPlan,
    pub seed: u64,
    pub build: String,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Sorted by protocol, `K`, `S`, `p`.
    pub records: Vec<ThroughputRecord>,
    /// Standard error of the replication means, parallel to `records`
    /// (0 with a single replication).
    pub replication_stderr: Vec<f64>,
    pub metadata: SweepMetadata,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        records_to_csv(&self.records)
    }

    pub fn metadata_json(&self) -> String {
        serde_json::to_string_pretty(&self.metadata).expect("metadata serializes")
    }

    /// Writes the CSV to `path` and the metadata next to it as
    /// `<path>.meta.json`, each via write-then-rename.
    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        write_atomic(path, self.to_csv().as_bytes())?;
        write_atomic(&metadata_path(path), self.metadata_json().as_bytes())
    }
}

pub fn metadata_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn records_to_csv(records: &[ThroughputRecord]) -> String {
    let mut out = String::new();
    writeln!(out, "{}", ThroughputRecord::CSV_HEADER).unwrap();
    for r in records {
        writeln!(out, "{}", r.to_csv_line()).unwrap();
    }
    out
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// Writes `bytes` to a temporary file beside `path`, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().ok_or_else(|| HarnessError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "not a file path"),
    })?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = dir.join(tmp_name);
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(io_err(path))
}

/// Fails unless a file can be created in `path`'s directory.
pub fn check_writable(path: &Path) -> Result<(), HarnessError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    if path.is_dir() {
        return Err(HarnessError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "is a directory"),
        });
    }
    let probe = dir.join(format!(".oia-write-probe{}", std::process::id()));
    std::fs::File::create(&probe).map_err(io_err(path))?;
    let _ = std::fs::remove_file(&probe);
    Ok(())
}

/// Runs `f` on a pool sized by [`WORKERS_ENV`] when set, else on the global
/// pool.
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n >= 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .unwrap_or_else(|_| panic!("cannot build a pool of {n} workers")),
        _ => f(),
    }
}

/// Seed of one replication of one configuration. Protocols sharing `K` and
/// `S` share it, so their curves see the same channels.
pub fn replication_seed(seed: u64, cfg: &NetworkConfig, replication: u64) -> u64 {
    derive_seed(seed, &[0x5EE9, replication, cfg.k as u64, cfg.s as u64, cfg.m as u64, cfg.l as u64, cfg.n as u64])
}

/// Sums of per-slot delivered packets for each `p`.
#[derive(Debug, Clone, Default)]
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

fn run_replication(
    protocol: ProtocolKind,
    cfg: &NetworkConfig,
    p_values: &[f64],
    slots: u64,
    warmup: usize,
    shared_cdf: bool,
    seed: u64,
) -> Result<Moments, ProtocolError> {
    let streams = StreamSource::new(seed);
    let spaces = make_interference_spaces(cfg, &streams)?;
    let cdfs: Option<CdfBank> = if protocol.is_opportunistic() {
        Some(warm_up(protocol, cfg, &spaces, &streams, warmup, shared_cdf)?)
    } else {
        None
    };
    let ctx = ProtocolContext::new(protocol, cfg, &spaces, cdfs.as_ref())?;
    let mut m = Moments { sum: vec![0.0; p_values.len()], sum_sq: vec![0.0; p_values.len()] };
    for slot in 0..slots {
        for (i, out) in run_slot_multi(&ctx, &streams, slot, p_values)?.iter().enumerate() {
            let d = out.total_delivered() as f64;
            m.sum[i] += d;
            m.sum_sq[i] += d * d;
        }
    }
    Ok(m)
}

/// Runs every (curve, `K`, replication) task on the worker pool and
/// aggregates per `p`. Deterministic for a fixed plan.
pub fn run_sweep(plan: &ExperimentPlan) -> Result<SweepResult, HarnessError> {
    plan.validate()?;
    let started = Instant::now();
    let mut tasks = Vec::new();
    for &series in &plan.series {
        for k in plan.k_points() {
            let cfg = plan.point_config(series, k);
            for rep in 0..plan.replications {
                tasks.push((series.protocol, cfg.clone(), rep));
            }
        }
    }
    let results: Vec<Result<Moments, HarnessError>> = with_workers(|| {
        tasks
            .par_iter()
            .map(|(protocol, cfg, rep)| {
                run_replication(
                    *protocol,
                    cfg,
                    &plan.p_values,
                    plan.slots,
                    plan.warmup_samples,
                    plan.shared_cdf,
                    replication_seed(plan.seed, cfg, *rep),
                )
                .map_err(|source| HarnessError::Point { point: point_name(*protocol, cfg), source })
            })
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let reps = plan.replications as usize;
    let mut rows: Vec<(ThroughputRecord, f64)> = Vec::new();
    for (chunk, tasks) in results.chunks(reps).zip(tasks.chunks(reps)) {
        let (protocol, cfg, _) = &tasks[0];
        for (i, &p) in plan.p_values.iter().enumerate() {
            let n = (plan.slots * plan.replications) as f64;
            let sum: f64 = chunk.iter().map(|m| m.sum[i]).sum();
            let sum_sq: f64 = chunk.iter().map(|m| m.sum_sq[i]).sum();
            let mean = sum / n;
            let var = if n > 1.0 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
            let rep_means: Vec<f64> = chunk.iter().map(|m| m.sum[i] / plan.slots as f64).collect();
            let rep_se = if reps > 1 {
                let mu = rep_means.iter().sum::<f64>() / reps as f64;
                let v = rep_means.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
                (v / reps as f64).sqrt()
            } else {
                0.0
            };
            rows.push((
                ThroughputRecord {
                    protocol: *protocol,
                    k: cfg.k,
                    n: cfg.n,
                    m: cfg.m,
                    l: cfg.l,
                    s: cfg.s,
                    p,
                    slots: plan.slots,
                    replications: plan.replications,
                    seed: plan.seed,
                    throughput: mean,
                    stderr: (var / n).sqrt(),
                    source: Source::Simulated,
                },
                rep_se,
            ));
        }
    }
    rows.sort_by(|(a, _), (b, _)| {
        let key = |r: &ThroughputRecord| (protocol_rank(r.protocol), r.k, r.s, r.m, r.l);
        key(a).cmp(&key(b)).then(a.p.total_cmp(&b.p))
    });
    let (records, replication_stderr) = rows.into_iter().unzip();
    Ok(SweepResult {
        records,
        replication_stderr,
        metadata: SweepMetadata {
            plan: plan.clone(),
            seed: plan.seed,
            build: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    })
}

fn protocol_rank(p: ProtocolKind) -> usize {
    ProtocolKind::ALL.iter().position(|&q| q == p).unwrap_or(usize::MAX)
}

/// Peak of one curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxPoint {
    pub p: f64,
    pub throughput: f64,
    pub stderr: f64,
}

/// Grid argmax over the records of `protocol`; ties go to the smaller `p`.
pub fn find_max_throughput(records: &[ThroughputRecord], protocol: ProtocolKind) -> Result<MaxPoint, HarnessError> {
    find_max_where(records, |r| r.protocol == protocol).ok_or(HarnessError::MissingProtocol(protocol))
}

/// Grid argmax over the records accepted by `filter`.
pub fn find_max_where(records: &[ThroughputRecord], filter: impl Fn(&ThroughputRecord) -> bool) -> Option<MaxPoint> {
    let mut best: Option<&ThroughputRecord> = None;
    for r in records.iter().filter(|r| filter(r)) {
        best = match best {
            None => Some(r),
            Some(b) if r.throughput > b.throughput || (r.throughput == b.throughput && r.p < b.p) => Some(r),
            keep => keep,
        };
    }
    best.map(|r| MaxPoint { p: r.p, throughput: r.throughput, stderr: r.stderr })
}

/// Success-table estimation request.
#[derive(Debug, Clone, PartialEq)]
pub struct TablePlan {
    pub protocol: ProtocolKind,
    pub cfg: NetworkConfig,
    pub cells: Vec<(usize, usize)>,
    pub samples_per_cell: u64,
    pub warmup_samples: usize,
    pub shared_cdf: bool,
    pub receiver: Receiver,
}

pub const MIN_TABLE_SAMPLES: u64 = 100;

/// Estimates `P_{m,j}` for each cell from `samples_per_cell` conditioned
/// trials: the fraction of network-0 streams decoded, with the stream count
/// as the trial count. Cells that cannot be sampled are left out.
pub fn estimate_success_tables(plan: &TablePlan) -> Result<SuccessTable, HarnessError> {
    let cfg = &plan.cfg;
    if plan.samples_per_cell < MIN_TABLE_SAMPLES {
        return Err(HarnessError::Plan(format!("samples per cell must be >= {MIN_TABLE_SAMPLES}")));
    }
    let point = point_name(plan.protocol, cfg);
    let wrap = |source: ProtocolError| HarnessError::Point { point: point.clone(), source };
    cfg.validate().map_err(|e| wrap(e.into()))?;
    plan.protocol.validate(cfg).map_err(|e| wrap(e.into()))?;
    let streams = StreamSource::new(derive_seed(cfg.seed, &[0x7AB1E]));
    let spaces = make_interference_spaces(cfg, &streams).map_err(|e| wrap(e.into()))?;
    let cdfs = if plan.protocol.is_opportunistic() {
        Some(warm_up(plan.protocol, cfg, &spaces, &streams, plan.warmup_samples, plan.shared_cdf).map_err(wrap)?)
    } else {
        None
    };
    let ctx = ProtocolContext::new(plan.protocol, cfg, &spaces, cdfs.as_ref()).map_err(wrap)?;

    let cells: Vec<Option<((usize, usize), Cell)>> = with_workers(|| {
        plan.cells
            .par_iter()
            .map(|&(m, j)| {
                let mut ok = 0u64;
                let mut trials = 0u64;
                for sample in 0..plan.samples_per_cell {
                    let src = StreamSource::new(conditioned_seed(cfg.seed, m, j, sample));
                    let res = run_conditioned_slot_with(&ctx, &src, m, j, plan.receiver).ok()?;
                    trials += res.len() as u64;
                    ok += res.iter().filter(|&&s| s).count() as u64;
                }
                (trials > 0).then(|| ((m, j), Cell { prob: ok as f64 / trials as f64, trials }))
            })
            .collect()
    });
    let mut table = SuccessTable::new(TableKind::Oia, Provenance::Measured).with_scenario(cfg);
    if plan.receiver == Receiver::SignalSpace {
        table.scenario.push(("receiver".into(), "signal-space".into()));
    }
    for ((m, j), cell) in cells.into_iter().flatten() {
        table.insert(m, j, cell);
    }
    Ok(table)
}

/// `P_{t,M}` for `t = 1..=min(M, N)` total users, from MPR trials with all
/// `t` users in one network (the channels are isotropic, so where they sit
/// does not matter).
pub fn estimate_mpr_total_table(cfg: &NetworkConfig, samples_per_cell: u64) -> Result<SuccessTable, HarnessError> {
    let plan = TablePlan {
        protocol: ProtocolKind::Mpr,
        cfg: cfg.clone(),
        cells: (1..=cfg.m.min(cfg.n)).map(|t| (t, 0)).collect(),
        samples_per_cell,
        warmup_samples: 0,
        shared_cdf: true,
        receiver: Receiver::Adaptive,
    };
    let mut table = estimate_success_tables(&plan)?;
    table.kind = TableKind::MprByTotal;
    Ok(table)
}

/// `P_{m,dim}`: `m` streams with i.i.d. CN(0, I_dim) effective channels,
/// zero-forced in a `dim`-dimensional space at the configured SNR, for
/// `m = 1..=max_m`. Models decoding inside an interference-free signal
/// space.
pub fn estimate_mpr_dim_table(
    cfg: &NetworkConfig,
    dim: usize,
    max_m: usize,
    samples_per_cell: u64,
) -> Result<SuccessTable, HarnessError> {
    if samples_per_cell < MIN_TABLE_SAMPLES {
        return Err(HarnessError::Plan(format!("samples per cell must be >= {MIN_TABLE_SAMPLES}")));
    }
    if dim == 0 {
        return Err(HarnessError::Plan("dimension must be >= 1".into()));
    }
    let noise = cfg.noise_power();
    let threshold = cfg.threshold_linear();
    let cells: Vec<((usize, usize), Cell)> = with_workers(|| {
        (1..=max_m)
            .into_par_iter()
            .map(|m| {
                let mut ok = 0u64;
                for sample in 0..samples_per_cell {
                    let src = StreamSource::new(derive_seed(cfg.seed, &[0xD1A, dim as u64, m as u64, sample]));
                    let mut rng = src.stream(Purpose::Probe, 0, 0, 0, 0);
                    let h = ComplexMatrix::random_gaussian(dim, m, &mut rng);
                    let desired: Vec<Stream> =
                        (0..m).map(|i| Stream { owner: UserId::new(0, i), channel: h.column(i) }).collect();
                    let report = zf_decode_linear(&desired, &[], noise, 1.0, threshold);
                    ok += report.successes() as u64;
                }
                let trials = samples_per_cell * m as u64;
                ((m, 0), Cell { prob: ok as f64 / trials as f64, trials })
            })
            .collect()
    });
    let mut table = SuccessTable::new(TableKind::MprByDim(dim), Provenance::Measured).with_scenario(cfg);
    for ((m, j), c) in cells {
        table.insert(m, j, c);
    }
    Ok(table)
}

/// A named figure recipe.
#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    Sweep(ExperimentPlan),
    Table(TablePlan),
}

pub const PRESET_NAMES: [&str; 4] = ["fig4", "fig5", "fig6", "fig7"];

fn fig_base(seed: u64) -> NetworkConfig {
    NetworkConfig { k: 3, n: 10, m: 3, l: 3, s: 3, p: 0.15, seed, ..Default::default() }
}

/// Expands a figure preset. `fig4`: the OIA success table at `p = 0.15`;
/// `fig5`: MPR, IN and OIA with `S` in {1, 2, 3} against `p`; `fig6`: OIA
/// and both ablations at `S = 3`; `fig7`: `K = M = L = S` from 2 to 8.
pub fn preset(name: &str, seed: u64) -> Option<Preset> {
    let p_sweep = ExperimentPlan::p_grid(0.01, 0.30, 0.01).expect("static grid");
    let base = fig_base(seed);
    let plan = match name {
        "fig4" => {
            let cells = (1..=3).flat_map(|m| (0..=20).map(move |j| (m, j))).collect();
            return Some(Preset::Table(TablePlan {
                protocol: ProtocolKind::Oia,
                cfg: base,
                cells,
                samples_per_cell: 2_000,
                warmup_samples: ExperimentPlan::DEFAULT_WARMUP,
                shared_cdf: true,
                receiver: Receiver::SignalSpace,
            }));
        }
        "fig5" => {
            let series = vec![
                Series { protocol: ProtocolKind::Mpr, s: None },
                Series { protocol: ProtocolKind::In, s: Some(1) },
                Series { protocol: ProtocolKind::Oia, s: Some(1) },
                Series { protocol: ProtocolKind::Oia, s: Some(2) },
                Series { protocol: ProtocolKind::Oia, s: Some(3) },
            ];
            ExperimentPlan::new(base, series, p_sweep)
        }
        "fig6" => {
            let series = ExperimentPlan::cross_series(
                &[ProtocolKind::Mpr, ProtocolKind::Oia, ProtocolKind::OiaNoTxbf, ProtocolKind::OiaNoOra],
                &[3],
            );
            ExperimentPlan::new(base, series, p_sweep)
        }
        "fig7" => {
            let series = ExperimentPlan::cross_series(
                &[ProtocolKind::Mpr, ProtocolKind::OiaNoTxbf, ProtocolKind::OiaNoOra, ProtocolKind::Oia],
                &[],
            );
            let mut plan = ExperimentPlan::new(base, series, ExperimentPlan::p_grid(0.01, 0.30, 0.01).unwrap());
            plan.k_values = (2..=8).collect();
            plan.antennas_follow_k = true;
            plan.slots = 20_000;
            // a shared CDF at K = 8 already pools 8e5 samples
            plan.warmup_samples = 10_000;
            plan
        }
        _ => return None,
    };
    Some(Preset::Sweep(plan))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> NetworkConfig {
        NetworkConfig { k: 3, n: 10, m: 3, l: 3, s: 3, p: 0.1, seed: 5, ..Default::default() }
    }

    fn small_plan(series: Vec<Series>, ps: Vec<f64>) -> ExperimentPlan {
        let mut plan = ExperimentPlan::new(base(), series, ps);
        plan.slots = 300;
        plan.replications = 2;
        plan.warmup_samples = 2_000;
        plan
    }

    fn rec(p: f64, t: f64) -> ThroughputRecord {
        ThroughputRecord { throughput: t, p, ..ThroughputRecord::analytic(ProtocolKind::Oia, &base(), 0.0) }
    }

    #[test]
    fn p_grid_endpoints() {
        let g = ExperimentPlan::p_grid(0.01, 0.30, 0.01).unwrap();
        assert_eq!(g.len(), 30);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[29], 0.3);
        assert_eq!(ExperimentPlan::p_grid(0.2, 0.2, 0.1).unwrap(), vec![0.2]);
        assert!(ExperimentPlan::p_grid(0.3, 0.1, 0.1).is_err());
        assert!(ExperimentPlan::p_grid(0.1, 0.3, 0.0).is_err());
    }

    #[test]
    fn cross_series_collapses_mpr() {
        let s = ExperimentPlan::cross_series(&[ProtocolKind::Mpr, ProtocolKind::Oia], &[1, 2]);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], Series { protocol: ProtocolKind::Mpr, s: None });
    }

    #[test]
    fn validation_names_the_point() {
        let plan = small_plan(vec![Series { protocol: ProtocolKind::In, s: Some(2) }], vec![0.1]);
        let err = run_sweep(&plan).unwrap_err().to_string();
        assert!(err.contains("in K=3 N=10 M=3 L=3 S=2"), "{err}");
        assert!(err.contains("S < min{L/(K-1), M}"), "{err}");

        let mut plan = small_plan(vec![Series { protocol: ProtocolKind::Mpr, s: None }], vec![0.1]);
        plan.slots = 0;
        assert!(matches!(run_sweep(&plan), Err(HarnessError::Plan(_))));
        plan.slots = 1;
        plan.p_values.clear();
        assert!(matches!(run_sweep(&plan), Err(HarnessError::Plan(_))));
    }

    #[test]
    fn zero_p_gives_zero_throughput() {
        let series = ExperimentPlan::cross_series(&ProtocolKind::ALL, &[1]);
        let r = run_sweep(&small_plan(series, vec![0.0])).unwrap();
        assert_eq!(r.records.len(), 5);
        assert!(r.records.iter().all(|x| x.throughput == 0.0 && x.stderr == 0.0));
    }

    #[test]
    fn sweep_is_deterministic_and_sorted() {
        let series = ExperimentPlan::cross_series(&[ProtocolKind::Oia, ProtocolKind::Mpr], &[2, 1]);
        let plan = small_plan(series, vec![0.2, 0.05, 0.1]);
        let a = run_sweep(&plan).unwrap();
        let b = run_sweep(&plan).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let keys: Vec<(ProtocolKind, usize, String)> =
            a.records.iter().map(|r| (r.protocol, r.s, format!("{:.2}", r.p))).collect();
        assert_eq!(keys[0], (ProtocolKind::Mpr, 3, "0.05".into()));
        assert_eq!(keys[3], (ProtocolKind::Oia, 1, "0.05".into()));
        assert_eq!(keys[8], (ProtocolKind::Oia, 2, "0.20".into()));
        for r in &a.records {
            assert!(r.stderr >= 0.0);
            assert!(r.throughput <= (r.k * r.m) as f64 + 3.0 * r.stderr);
        }
        assert!(a.to_csv().starts_with("protocol,K,N,M,L,S,p,slots,replications,seed,throughput,stderr\nmpr,3,10,3,3,3,0.050000,300,2,5,"));
    }

    #[test]
    fn antennas_follow_k() {
        let mut plan = small_plan(vec![Series { protocol: ProtocolKind::Mpr, s: None }], vec![0.1]);
        plan.k_values = vec![2, 4];
        plan.antennas_follow_k = true;
        plan.slots = 50;
        let r = run_sweep(&plan).unwrap();
        let dims: Vec<_> = r.records.iter().map(|x| (x.k, x.m, x.l, x.s)).collect();
        assert_eq!(dims, vec![(2, 2, 2, 2), (4, 4, 4, 4)]);
    }

    #[test]
    fn max_throughput_ties_and_lookup() {
        assert_eq!(find_max_throughput(&[rec(0.1, 1.0)], ProtocolKind::Oia).unwrap().p, 0.1);
        let recs = vec![rec(0.1, 1.0), rec(0.2, 1.5), rec(0.3, 1.5), rec(0.4, 0.7)];
        let m = find_max_throughput(&recs, ProtocolKind::Oia).unwrap();
        assert_eq!((m.p, m.throughput), (0.2, 1.5));
        assert!(matches!(find_max_throughput(&recs, ProtocolKind::Mpr), Err(HarnessError::MissingProtocol(_))));
        let unimodal: Vec<_> = (1..=9).map(|i| rec(i as f64 / 10.0, -((i as f64 - 6.0).powi(2)))).collect();
        assert_eq!(find_max_throughput(&unimodal, ProtocolKind::Oia).unwrap().p, 0.6);
    }

    #[test]
    fn single_stream_success_matches_gamma_tail() {
        // ||h||^2 ~ Gamma(M, 1); at 0 dB SNR and 0 dB threshold success is
        // P(||h||^2 >= 1) = e^-1 sum_{k<M} 1/k!.
        let cfg = NetworkConfig { seed: 9, ..base() };
        let samples = 20_000;
        let d1 = estimate_mpr_dim_table(&cfg, 1, 1, samples).unwrap();
        let want1 = (-1.0f64).exp();
        let c = d1.cell(1, 0).unwrap();
        assert!((c.prob - want1).abs() < 4.0 * c.stderr(), "{} vs {want1}", c.prob);

        let t = estimate_mpr_total_table(&cfg, samples).unwrap();
        assert_eq!(t.kind, TableKind::MprByTotal);
        let want3 = (-1.0f64).exp() * 2.5;
        let c = t.cell(1, 0).unwrap();
        assert!((c.prob - want3).abs() < 4.0 * c.stderr(), "{} vs {want3}", c.prob);
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn mpr_table_regimes() {
        let cfg = NetworkConfig { snr_db: 20.0, ..base() };
        let plan = TablePlan {
            protocol: ProtocolKind::Mpr,
            cfg,
            cells: vec![(1, 0), (2, 2), (1, 3)],
            samples_per_cell: 500,
            warmup_samples: 0,
            shared_cdf: true,
            receiver: Receiver::Adaptive,
        };
        let t = estimate_success_tables(&plan).unwrap();
        let c = t.cell(1, 0).unwrap();
        // P(||h||^2 >= 0.01) for Gamma(3, 1) is 1 - 1.6e-7
        assert!(c.prob > 0.99, "{}", c.prob);
        assert_eq!(t.get(2, 2), Some(0.0));
        assert_eq!(t.get(1, 3), Some(0.0));
        assert_eq!(t.cell(2, 2).unwrap().trials, 1000);

        let few = TablePlan { samples_per_cell: 10, ..plan.clone() };
        assert!(matches!(estimate_success_tables(&few), Err(HarnessError::Plan(_))));
        let bad = TablePlan { cells: vec![(11, 0), (1, 0)], ..plan };
        let t = estimate_success_tables(&bad).unwrap();
        assert_eq!(t.get(11, 0), None);
        assert!(t.get(1, 0).is_some());
    }

    #[test]
    fn atomic_writes_and_sidecar() {
        let dir = std::env::temp_dir().join(format!("oia-harness-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let plan = small_plan(vec![Series { protocol: ProtocolKind::Mpr, s: None }], vec![0.1]);
        let r = run_sweep(&plan).unwrap();
        let out = dir.join("r.csv");
        check_writable(&out).unwrap();
        r.write(&out).unwrap();
        assert_eq!(std::fs::read_to_string(&out).unwrap(), r.to_csv());
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(metadata_path(&out)).unwrap()).unwrap();
        assert_eq!(meta["seed"], 5);
        assert!(meta["wall_time_s"].as_f64().unwrap() >= 0.0);
        let leftovers: Vec<_> = std::fs::read_dir(&dir)
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().contains(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
        assert!(check_writable(&dir.join("missing").join("r.csv")).is_err());
        assert!(check_writable(&dir).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn presets_expand() {
        for name in PRESET_NAMES {
            match preset(name, 7).unwrap() {
                Preset::Sweep(plan) => plan.validate().unwrap(),
                Preset::Table(t) => assert_eq!(t.cells.len(), 63),
            }
        }
        assert!(preset("fig9", 1).is_none());
        let Some(Preset::Sweep(p7)) = preset("fig7", 1) else { panic!() };
        assert_eq!(p7.slots, 20_000);
        assert_eq!(p7.k_values, (2..=8).collect::<Vec<_>>());
    }
}
