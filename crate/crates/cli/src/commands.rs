//! The five subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mind_core::bench::{bench_metric, emit_bench_report, BenchConfig, BenchRecord, BenchReport, MemoryProbe, EIGENSOLVER};
use mind_core::hacking::{robustness_sweep, AttackResult, DEFAULT_T_GRID};
use mind_core::harness::{sample_size_sweep, write_rows_csv, Experiment, GaussianNoise, Mixture, Perturbation, SweepRow};
use mind_core::rng::{derive_seed, role};
use mind_core::{
    load_embeddings, save_embeddings, subsample, EmbeddingSet, Flag, Metric, MetricConfig, MetricKind, Resolved,
};
use serde::Serialize;

use crate::args::{format_for, parse_list, AttackArgs, BenchArgs, Common, ComputeArgs, ConvertArgs, HarnessArgs};
use crate::failure::Failure;

/// Output of `compute`.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub metric: MetricKind,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<f64>,
    pub flags: Vec<Flag>,
    pub resolved: Resolved,
    pub n_a: usize,
    pub n_b: usize,
    pub d: usize,
    pub seed: u64,
    pub walltime_s: f64,
    pub metric_config: MetricConfig,
    /// Settings that reproduce this run when passed back through `--config`.
    pub config: ComputeArgs,
}

#[derive(Debug, Clone, Serialize)]
struct AttackReport {
    #[serde(flatten)]
    result: AttackResult,
    walltime_s: f64,
    config: AttackArgs,
}

#[derive(Debug, Clone, Serialize)]
struct HarnessReport {
    experiment: String,
    rows: Vec<SweepRow>,
    walltime_s: f64,
    config: HarnessArgs,
}

#[derive(Debug, Clone, Serialize)]
struct ConvertReport {
    input: PathBuf,
    output: PathBuf,
    n: usize,
    d: usize,
    weighted: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Output {
    Json,
    Csv,
}

impl Common {
    fn seed_or_default(&mut self) -> u64 {
        *self.seed.get_or_insert(0)
    }

    fn output_mode(&self) -> Result<Output, Failure> {
        match self.output.as_deref().map(str::trim) {
            None | Some("json") => Ok(Output::Json),
            Some("csv") => Ok(Output::Csv),
            Some(other) => Err(Failure::usage(format!("--output: expected json or csv, got `{other}`"))),
        }
    }

    fn require(path: &Option<PathBuf>, flag: &str) -> Result<PathBuf, Failure> {
        path.clone().ok_or_else(|| Failure::usage(format!("missing --{flag}")))
    }

    fn load(&self, path: &Path) -> Result<EmbeddingSet, Failure> {
        let format = format_for(self.format.as_deref(), path)?;
        load_embeddings(path, format).map_err(|e| Failure::file(format!("{}: {e}", path.display())))
    }

    fn load_a(&self) -> Result<EmbeddingSet, Failure> {
        self.load(&Self::require(&self.a, "a")?)
    }

    fn load_b(&self) -> Result<EmbeddingSet, Failure> {
        self.load(&Self::require(&self.b, "b")?)
    }

    /// Sends `text` to `--out-file` or stdout.
    fn emit(&self, text: &str) -> Result<(), Failure> {
        match &self.out_file {
            Some(path) => std::fs::write(path, text).map_err(|e| Failure::file(format!("{}: {e}", path.display()))),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| Failure::file(format!("stdout: {e}")))
            }
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(Failure::metric)
}

fn csv_text(write: impl FnOnce(&mut Vec<u8>) -> Result<(), Failure>) -> Result<String, Failure> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    String::from_utf8(buf).map_err(Failure::metric)
}

pub fn compute(mut args: ComputeArgs) -> Result<(), Failure> {
    let seed = args.common.seed_or_default();
    let output = args.common.output_mode()?;
    let name = args.metric.metric.clone().ok_or_else(|| Failure::usage("missing --metric"))?;
    let kind = crate::args::parse_kind(&name)?;
    let cfg = args.metric.config(kind, seed)?;
    let mut a = args.common.load_a()?;
    let mut b = args.common.load_b()?;
    if let Some(n) = args.n {
        a = subsample(&a, n, derive_seed(seed, &[role::SUBSAMPLE, 0])).map_err(Failure::metric)?;
        b = subsample(&b, n, derive_seed(seed, &[role::SUBSAMPLE, 1])).map_err(Failure::metric)?;
    }
    let start = Instant::now();
    let v = cfg.eval(&a, &b).map_err(Failure::metric)?;
    let walltime_s = start.elapsed().as_secs_f64();
    if !v.value.is_finite() {
        return Err(Failure::metric(format!("{kind} produced a non-finite value")));
    }
    let report = MetricReport {
        metric: kind,
        value: v.value,
        raw: v.raw,
        flags: v.flags,
        resolved: v.resolved,
        n_a: a.n(),
        n_b: b.n(),
        d: a.d(),
        seed,
        walltime_s,
        metric_config: cfg,
        config: args.clone(),
    };
    let text = match output {
        Output::Json => to_json(&report)?,
        Output::Csv => {
            let flags: Vec<String> = report.flags.iter().map(|f| serde_json::to_string(f).unwrap().replace('"', "")).collect();
            format!(
                "metric,value,n_a,n_b,d,seed,flags,walltime_s\n{},{:?},{},{},{},{},{},{}\n",
                kind,
                report.value,
                report.n_a,
                report.n_b,
                report.d,
                seed,
                flags.join(";"),
                walltime_s
            )
        }
    };
    args.common.emit(&text)
}

fn metric_configs(flags: &crate::args::MetricFlags, default: &str, seed: u64) -> Result<Vec<MetricConfig>, Failure> {
    flags.kinds(default)?.into_iter().map(|k| flags.config(k, seed)).collect()
}

pub fn attack(mut args: AttackArgs) -> Result<(), Failure> {
    let seed = args.common.seed_or_default();
    let output = args.common.output_mode()?;
    let metrics = metric_configs(&args.metric, "fid,mind", seed)?;
    let t_grid = match &args.t_grid {
        Some(raw) => parse_list::<f64>("t-grid", raw)?,
        None => DEFAULT_T_GRID.to_vec(),
    };
    let data = args.common.load_a()?;
    let initial = args.common.load_b()?;
    let start = Instant::now();
    let result = robustness_sweep(&data, &initial, &metrics, &t_grid, seed).map_err(Failure::metric)?;
    let walltime_s = start.elapsed().as_secs_f64();
    let text = match output {
        Output::Json => to_json(&AttackReport { result, walltime_s, config: args.clone() })?,
        Output::Csv => {
            let mut s = String::from("metric,t,value\n");
            for (name, values) in &result.metrics {
                for (t, v) in result.t_grid.iter().zip(values) {
                    s.push_str(&format!("{name},{t:?},{v:?}\n"));
                }
            }
            s
        }
    };
    args.common.emit(&text)
}

const DEFAULT_EPS_GRID: &str = "0.01,0.03,0.05,0.07,0.10";

pub fn harness(mut args: HarnessArgs) -> Result<(), Failure> {
    let seed = args.common.seed_or_default();
    let output = args.common.output_mode()?;
    let experiment = args.experiment.clone().ok_or_else(|| Failure::usage("missing --experiment"))?;
    let metrics = metric_configs(&args.metric, "mind", seed)?;
    let n_grid: Vec<usize> = parse_list("n", args.n.as_deref().ok_or_else(|| Failure::usage("missing --n"))?)?;
    let trials = *args.trials.get_or_insert(512);
    let data = args.common.load_a()?;
    let dyn_metrics: Vec<&dyn Metric> = metrics.iter().map(|m| m as &dyn Metric).collect();

    let start = Instant::now();
    let rows = match experiment.trim() {
        "discrimination" => {
            let model = args.common.load_b()?;
            let exp = Experiment::Discrimination { data: &data, model: &model };
            sample_size_sweep(&exp, &n_grid, &dyn_metrics, trials, seed)
        }
        "monotonicity" => {
            let raw = args.pools.as_deref().ok_or_else(|| Failure::usage("missing --pools"))?;
            let paths: Vec<String> = parse_list("pools", raw)?;
            let pools: Vec<EmbeddingSet> =
                paths.iter().map(|p| args.common.load(Path::new(p))).collect::<Result<_, _>>()?;
            let refs: Vec<&EmbeddingSet> = pools.iter().collect();
            let exp = Experiment::Monotonicity { data: &data, models: &refs };
            sample_size_sweep(&exp, &n_grid, &dyn_metrics, trials, seed)
        }
        "perturbation" => {
            let grid: Vec<f64> = parse_list("eps", args.eps.get_or_insert_with(|| DEFAULT_EPS_GRID.to_string()))?;
            let contaminant;
            let noise;
            let perturbation: &dyn Perturbation = match args.perturbation.get_or_insert_with(|| "mixture".into()).trim() {
                "mixture" => {
                    contaminant = args.common.load_b()?;
                    &Mixture { contaminant: &contaminant }
                }
                "noise" => {
                    noise = GaussianNoise { scale: *args.noise_scale.get_or_insert(1.0) };
                    &noise
                }
                other => return Err(Failure::usage(format!("--perturbation: expected mixture or noise, got `{other}`"))),
            };
            let exp = Experiment::Perturbation { data: &data, perturbation, grid: &grid };
            sample_size_sweep(&exp, &n_grid, &dyn_metrics, trials, seed)
        }
        other => {
            return Err(Failure::usage(format!(
                "--experiment: expected discrimination, monotonicity or perturbation, got `{other}`"
            )))
        }
    }
    .map_err(Failure::metric)?;
    let walltime_s = start.elapsed().as_secs_f64();
    let text = match output {
        Output::Json => to_json(&HarnessReport { experiment, rows, walltime_s, config: args.clone() })?,
        Output::Csv => csv_text(|buf| write_rows_csv(&rows, buf).map_err(Failure::metric))?,
    };
    args.common.emit(&text)
}

pub fn bench(mut args: BenchArgs) -> Result<(), Failure> {
    let seed = args.common.seed_or_default();
    let output = args.common.output_mode()?;
    let metrics = metric_configs(&args.metric, "mind,fid", seed)?;
    let n_grid: Vec<usize> = parse_list("n", args.n.as_deref().unwrap_or("1000,5000"))?;
    let d_grid: Vec<usize> = parse_list("d", args.d.as_deref().unwrap_or("2048"))?;
    let csv_path = args.common.out_file.clone().unwrap_or_else(|| PathBuf::from("bench.csv"));
    let cfg = BenchConfig { reps: args.reps.unwrap_or(5), threads: 0, warmup: true, seed };

    let mut records: Vec<BenchRecord> = Vec::new();
    let mut probe = MemoryProbe::Allocator;
    for m in &metrics {
        let (r, p) = bench_metric(m, &n_grid, &d_grid, &cfg).map_err(Failure::metric)?;
        records.extend(r);
        probe = p;
    }
    emit_bench_report(&records, probe, &csv_path).map_err(|e| match e {
        mind_core::Error::Io { .. } => Failure::file(e.to_string()),
        other => Failure::metric(other),
    })?;
    let text = match output {
        Output::Json => to_json(&BenchReport { records, memory_probe: probe, eigensolver: EIGENSOLVER.to_string() })?,
        Output::Csv => std::fs::read_to_string(&csv_path).map_err(|e| Failure::file(format!("{}: {e}", csv_path.display())))?,
    };
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes()).map_err(|e| Failure::file(format!("stdout: {e}")))
}

pub fn convert(args: ConvertArgs) -> Result<(), Failure> {
    let output = args.common.output_mode()?;
    let input = Common::require(&args.common.a, "a")?;
    let target = Common::require(&args.common.out_file, "out-file")?;
    let set = args.common.load(&input)?;
    let to = format_for(args.to.as_deref(), &target)?;
    save_embeddings(&set, &target, to).map_err(|e| Failure::file(e.to_string()))?;
    let report = ConvertReport { input, output: target, n: set.n(), d: set.d(), weighted: set.is_weighted() };
    let text = match output {
        Output::Json => to_json(&report)?,
        Output::Csv => format!(
            "input,output,n,d,weighted\n{},{},{},{},{}\n",
            report.input.display(),
            report.output.display(),
            report.n,
            report.d,
            report.weighted
        ),
    };
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes()).map_err(|e| Failure::file(format!("stdout: {e}")))
}
