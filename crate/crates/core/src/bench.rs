//! Walltime and peak-memory measurement of metric computation.
//!
//! Inputs are generated before the timed region. Peak memory is read from
//! [`TrackingAllocator`] when the running binary installs it as its global
//! allocator, and from the process resident-set high-water mark otherwise.

use std::alloc::{GlobalAlloc, Layout, System};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::harness::synthetic::gaussian_pool;
use crate::kernel::{Bandwidth, KernelMode};
use crate::metric::{Metric, MetricConfig, MetricKind};
use crate::ot::{Alpha, Epsilon};
use crate::rng::{derive_seed, role};

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static ACTIVE: AtomicBool = AtomicBool::new(false);

/// System allocator wrapper counting live and peak bytes.
///
/// Install with `#[global_allocator]` in a binary or test target.
pub struct TrackingAllocator;

impl TrackingAllocator {
    fn grow(size: usize) {
        let now = CURRENT.fetch_add(size, Ordering::Relaxed) + size;
        PEAK.fetch_max(now, Ordering::Relaxed);
    }
}

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            Self::grow(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc_zeroed(layout) };
        if !p.is_null() {
            Self::grow(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = unsafe { System.realloc(ptr, layout, new_size) };
        if !p.is_null() {
            if new_size >= layout.size() {
                Self::grow(new_size - layout.size());
            } else {
                CURRENT.fetch_sub(layout.size() - new_size, Ordering::Relaxed);
            }
        }
        p
    }
}

/// Whether [`TrackingAllocator`] is serving this process's allocations.
pub fn tracking_active() -> bool {
    if !ACTIVE.load(Ordering::Relaxed) {
        let before = CURRENT.load(Ordering::Relaxed);
        let probe = std::hint::black_box(vec![0u8; 4096]);
        let seen = CURRENT.load(Ordering::Relaxed) >= before + probe.len();
        drop(probe);
        if seen {
            ACTIVE.store(true, Ordering::Relaxed);
        }
    }
    ACTIVE.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryProbe {
    /// Bytes requested through the tracking allocator.
    Allocator,
    /// Growth of the resident-set high-water mark.
    RssHighWater,
}

fn status_kib(field: &str) -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with(field))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// Measures additional memory used between [`PeakMeter::start`] and
/// [`PeakMeter::finish`].
pub struct PeakMeter {
    probe: MemoryProbe,
    baseline: u64,
}

impl PeakMeter {
    pub fn start() -> Self {
        if tracking_active() {
            let now = CURRENT.load(Ordering::Relaxed);
            PEAK.store(now, Ordering::Relaxed);
            Self { probe: MemoryProbe::Allocator, baseline: now as u64 }
        } else {
            // resets the kernel's high-water mark to the current RSS
            let _ = std::fs::write("/proc/self/clear_refs", "5");
            Self { probe: MemoryProbe::RssHighWater, baseline: status_kib("VmRSS:").unwrap_or(0) * 1024 }
        }
    }

    pub fn probe(&self) -> MemoryProbe {
        self.probe
    }

    pub fn finish(&self) -> u64 {
        match self.probe {
            MemoryProbe::Allocator => (PEAK.load(Ordering::Relaxed) as u64).saturating_sub(self.baseline),
            MemoryProbe::RssHighWater => (status_kib("VmHWM:").unwrap_or(0) * 1024).saturating_sub(self.baseline),
        }
    }
}

/// One benchmark cell. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub metric: String,
    pub n: usize,
    pub d: usize,
    /// Metric-specific parameter such as `M=1000`.
    pub param: String,
    pub reps: usize,
    pub threads: usize,
    pub t_median_s: f64,
    pub t_min_s: f64,
    pub t_max_s: f64,
    pub peak_bytes: u64,
}

impl BenchRecord {
    fn validate(&self) -> Result<()> {
        let times = [self.t_min_s, self.t_median_s, self.t_max_s];
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidParameter(format!("non-finite timing in record for {}", self.metric)));
        }
        if !(self.t_min_s <= self.t_median_s && self.t_median_s <= self.t_max_s) || self.reps < MIN_REPS {
            return Err(Error::InvalidParameter(format!("inconsistent record for {}", self.metric)));
        }
        Ok(())
    }
}

pub const MIN_REPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub reps: usize,
    /// Worker threads available to the metric; 0 keeps the global pool.
    pub threads: usize,
    pub warmup: bool,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { reps: 5, threads: 1, warmup: true, seed: 0 }
    }
}

/// Short description of the metric parameter recorded with each cell.
pub fn param_label(cfg: &MetricConfig) -> String {
    match cfg.kind {
        MetricKind::Mind => match cfg.mind.alpha {
            Alpha::Auto => format!("M={}", cfg.mind.projections),
            Alpha::Explicit(a) => format!("M={};alpha={a}", cfg.mind.projections),
        },
        MetricKind::SigmaFid => format!("M={}", cfg.sigma_fid.projections),
        MetricKind::Mmd => {
            let sigma = match cfg.mmd.sigma {
                Bandwidth::Median => "median".to_string(),
                Bandwidth::Explicit(s) => s.to_string(),
            };
            let mode = match cfg.mmd.mode {
                KernelMode::Full => "full".to_string(),
                KernelMode::Tiled { tile } => format!("tile{tile}"),
            };
            format!("sigma={sigma};{mode}")
        }
        MetricKind::Sinkhorn => match cfg.sinkhorn.epsilon {
            Epsilon::Auto => "eps=auto".to_string(),
            Epsilon::Relative(r) => format!("eps={r}*meanC"),
            Epsilon::Absolute(e) => format!("eps={e}"),
        },
        MetricKind::Fid => "solver=faer-eigh+svd".to_string(),
        MetricKind::MuFid => "-".to_string(),
    }
}

fn median(sorted: &[f64]) -> f64 {
    let k = sorted.len();
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    }
}

/// Inputs for one cell: two `n x d` standard Gaussian sets, the second
/// shifted by one unit along every axis.
pub fn bench_inputs(n: usize, d: usize, seed: u64) -> Result<(EmbeddingSet, EmbeddingSet)> {
    let a = gaussian_pool(n, &vec![0.0; d], None, derive_seed(seed, &[role::BENCH, n as u64, d as u64, 0]))?;
    let b = gaussian_pool(n, &vec![1.0; d], None, derive_seed(seed, &[role::BENCH, n as u64, d as u64, 1]))?;
    Ok((a, b))
}

/// Times `metric` on pre-generated inputs.
pub fn time_metric(
    metric: &MetricConfig,
    a: &EmbeddingSet,
    b: &EmbeddingSet,
    cfg: &BenchConfig,
) -> Result<(BenchRecord, MemoryProbe)> {
    if cfg.reps < MIN_REPS {
        return Err(Error::InvalidParameter(format!("reps must be >= {MIN_REPS}")));
    }
    let run = || -> Result<(BenchRecord, MemoryProbe)> {
        if cfg.warmup {
            metric.eval(a, b)?;
        }
        let mut times = Vec::with_capacity(cfg.reps);
        let mut peak = 0;
        let mut probe = MemoryProbe::Allocator;
        for _ in 0..cfg.reps {
            let meter = PeakMeter::start();
            let start = Instant::now();
            let v = metric.eval(a, b)?;
            let elapsed = start.elapsed().as_secs_f64();
            std::hint::black_box(v);
            peak = peak.max(meter.finish());
            probe = meter.probe();
            times.push(elapsed);
        }
        times.sort_by(f64::total_cmp);
        let record = BenchRecord {
            metric: metric.name().to_string(),
            n: a.n(),
            d: a.d(),
            param: param_label(metric),
            reps: cfg.reps,
            threads: rayon::current_num_threads(),
            t_median_s: median(&times),
            t_min_s: times[0],
            t_max_s: times[times.len() - 1],
            peak_bytes: peak,
        };
        Ok((record, probe))
    };
    if cfg.threads == 0 {
        return run();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(run)
}

/// Benchmarks `metric` on every `(n, d)` cell, one cell at a time.
pub fn bench_metric(
    metric: &MetricConfig,
    n_grid: &[usize],
    d_grid: &[usize],
    cfg: &BenchConfig,
) -> Result<(Vec<BenchRecord>, MemoryProbe)> {
    metric.validate()?;
    let mut records = Vec::new();
    let mut probe = MemoryProbe::Allocator;
    for &n in n_grid {
        for &d in d_grid {
            let (a, b) = bench_inputs(n, d, cfg.seed)?;
            let (r, p) = time_metric(metric, &a, &b, cfg).map_err(|e| {
                Error::InvalidParameter(format!("bench cell {} n={n} d={d}: {e}", metric.name()))
            })?;
            log::info!("{} n={n} d={d}: median {:.4}s peak {} B", r.metric, r.t_median_s, r.peak_bytes);
            records.push(r);
            probe = p;
        }
    }
    Ok((records, probe))
}

/// JSON companion of the CSV report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    pub memory_probe: MemoryProbe,
    pub eigensolver: String,
}

pub const EIGENSOLVER: &str = "faer self-adjoint eigendecomposition (f64)";

/// Path of the JSON file written next to a CSV report.
pub fn json_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `path` as CSV and the same records as JSON next to it.
pub fn emit_bench_report(records: &[BenchRecord], probe: MemoryProbe, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if records.is_empty() {
        return Err(Error::InvalidParameter("no bench records to write".into()));
    }
    for r in records {
        r.validate()?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let report = BenchReport { records: records.to_vec(), memory_probe: probe, eigensolver: EIGENSOLVER.to_string() };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Serialization(e.to_string()))?;
    let jp = json_path(path);
    std::fs::write(&jp, json).map_err(|e| Error::io(jp, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Serialization(format!("{other:?}")),
    }
}

pub fn read_bench_csv(path: impl AsRef<Path>) -> Result<Vec<BenchRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_io(path, e))).collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: f64) -> BenchRecord {
        BenchRecord {
            metric: "mind".into(),
            n: 10,
            d: 2,
            param: "M=5".into(),
            reps: 3,
            threads: 1,
            t_median_s: t,
            t_min_s: 0.5 * t,
            t_max_s: 2.0 * t,
            peak_bytes: 123,
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.csv");
        let records = vec![record(0.125), record(1.0 / 3.0)];
        emit_bench_report(&records, MemoryProbe::Allocator, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "metric,n,d,param,reps,threads,t_median_s,t_min_s,t_max_s,peak_bytes");
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_bench_csv(&path).unwrap(), records);
        let report: BenchReport = serde_json::from_str(&std::fs::read_to_string(json_path(&path)).unwrap()).unwrap();
        assert_eq!(report.records, records);
    }

    #[test]
    fn rejects_bad_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.csv");
        assert!(emit_bench_report(&[], MemoryProbe::Allocator, &path).is_err());
        assert!(emit_bench_report(&[record(f64::NAN)], MemoryProbe::Allocator, &path).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.25)).collect();
        assert!((loglog_slope(&xs, &ys) - 1.25).abs() < 1e-12);
    }

    #[test]
    fn times_a_metric() {
        let (a, b) = bench_inputs(20, 3, 1).unwrap();
        let cfg = BenchConfig { reps: 3, threads: 1, warmup: true, seed: 1 };
        let (r, _) = time_metric(&MetricConfig::new(MetricKind::MuFid), &a, &b, &cfg).unwrap();
        assert_eq!((r.n, r.d, r.reps, r.threads), (20, 3, 3, 1));
        assert!(r.t_min_s <= r.t_median_s && r.t_median_s <= r.t_max_s);
        let bad = BenchConfig { reps: 2, ..cfg };
        assert!(time_metric(&MetricConfig::new(MetricKind::MuFid), &a, &b, &bad).is_err());
    }
}
