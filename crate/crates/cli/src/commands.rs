use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use log::warn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use odrelease::ingest::{
    bike_preprocess, read_label_list_file, synth_generate, taxi_preprocess, BikeConfig, IngestOutput, IngestStats,
    SynthFile, TaxiConfig,
};
use odrelease::metrics::{measure as measure_distances, BootstrapOptions};
use odrelease::pipeline::{run_release, run_sweep, write_json, PipelineConfig, PrivacySettings, SweepGrid};
use odrelease::privacy::{privatize_with, PrivacyParams};
use odrelease::repair::repair as repair_histogram;
use odrelease::{AttributeSchema, Execution, Histogram, RepairSpec, Rounding, Weighting};

use crate::{Common, Failure, HistogramInput, Status};

type CmdResult = Result<Status, Failure>;

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn data_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

fn execution(common: &Common) -> Execution {
    if common.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(config_err)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))
        .map_err(config_err)
}

fn require_config(common: &Common) -> Result<&Path, Failure> {
    common
        .config
        .as_deref()
        .ok_or_else(|| config_err(anyhow!("--config is required for this command")))
}

fn relative_to(config: &Path, p: &Path) -> PathBuf {
    match config.parent() {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

fn out_dir(common: &Common, fallback: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = common.out.clone().or(fallback).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(data_err)?;
    Ok(dir)
}

fn load_histogram(schema: &Path, input: &Path) -> Result<Histogram, Failure> {
    let schema = Arc::new(AttributeSchema::read_json(schema).map_err(|e| config_err(anyhow!(e).context("reading schema")))?);
    Histogram::read_csv_file(input, schema).map_err(|e| {
        let ctx = format!("reading {}", input.display());
        match Failure::from(e) {
            Failure::Config(e) => Failure::Config(e.context(ctx)),
            Failure::Data(e) => Failure::Data(e.context(ctx)),
        }
    })
}

fn write_histogram(h: &Histogram, dir: &Path, name: &str) -> Result<(), Failure> {
    h.write_csv_file(dir.join(name))?;
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Source {
    Taxi,
    Bike,
}

#[derive(Debug, Deserialize)]
struct IngestConfig {
    source: Source,
    /// Trip CSV (taxi: trip data joined with fares).
    trips: PathBuf,
    /// Bike rider survey CSV.
    survey: Option<PathBuf>,
    /// Bike neighborhood list, one label per line.
    neighborhoods: Option<PathBuf>,
    #[serde(default)]
    taxi: TaxiConfig,
    #[serde(default)]
    bike: BikeConfig,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct IngestReport<'a> {
    stats: &'a IngestStats,
    warnings: &'a [String],
    buckets: usize,
    total: f64,
}

pub fn ingest(common: &Common) -> CmdResult {
    let path = require_config(common)?;
    let cfg: IngestConfig = read_config(path)?;
    let open = |p: &Path| {
        let p = relative_to(path, p);
        fs::File::open(&p).with_context(|| format!("opening {}", p.display())).map_err(data_err)
    };
    let output: IngestOutput = match cfg.source {
        Source::Taxi => taxi_preprocess(open(&cfg.trips)?, &cfg.taxi)?,
        Source::Bike => {
            let survey = cfg.survey.as_deref().ok_or_else(|| config_err(anyhow!("bike ingest needs `survey`")))?;
            let nhoods = cfg
                .neighborhoods
                .as_deref()
                .ok_or_else(|| config_err(anyhow!("bike ingest needs `neighborhoods`")))?;
            let labels = read_label_list_file(relative_to(path, nhoods)).map_err(|e| config_err(anyhow!(e)))?;
            bike_preprocess(open(&cfg.trips)?, open(survey)?, &cfg.bike, &labels)?
        }
    };
    for w in &output.warnings {
        warn!("{w}");
    }
    let dir = out_dir(common, cfg.out.map(|o| relative_to(path, &o)))?;
    let h = &output.histogram;
    write_histogram(h, &dir, "histogram.csv")?;
    h.schema().write_json(dir.join("schema.json"))?;
    write_json(
        dir.join("ingest_report.json"),
        &IngestReport {
            stats: &output.stats,
            warnings: &output.warnings,
            buckets: h.len(),
            total: h.total(),
        },
    )?;
    println!(
        "ingested {} of {} rows into {} buckets",
        output.stats.retained,
        output.stats.rows,
        h.len()
    );
    Ok(Status::Ok)
}

pub fn synth(common: &Common) -> CmdResult {
    let (file, base) = match &common.config {
        Some(p) => (read_config::<SynthFile>(p)?, p.parent().map(Path::to_path_buf)),
        None => (SynthFile::default(), None),
    };
    let mut file = file;
    if let Some(seed) = common.seed {
        file.seed = seed;
    }
    let cfg = file.into_config(base.as_deref())?;
    let h = synth_generate(&cfg)?;
    let dir = out_dir(common, None)?;
    write_histogram(&h, &dir, "histogram.csv")?;
    h.schema().write_json(dir.join("schema.json"))?;
    println!("generated {} trips in {} buckets", h.total(), h.len());
    Ok(Status::Ok)
}

#[derive(Debug, Deserialize)]
struct RepairConfig {
    #[serde(flatten)]
    spec: RepairSpec,
    #[serde(default)]
    rounding: Rounding,
}

pub fn repair(common: &Common, hist: &HistogramInput) -> CmdResult {
    let cfg: RepairConfig = read_config(require_config(common)?)?;
    let h = load_histogram(&hist.schema, &hist.input)?;
    let result = repair_histogram(&h, &cfg.spec, cfg.rounding)?;
    let dir = out_dir(common, None)?;
    write_histogram(&result.rounded, &dir, "repaired.csv")?;
    write_histogram(&result.fractional, &dir, "repaired_fractional.csv")?;
    let report = result.report(&h);
    write_json(dir.join("repair_report.json"), &report)?;
    println!("cmi {:.6} -> {:.3e} nats", report.cmi_before, report.cmi_after);
    Ok(Status::Ok)
}

pub fn privatize(common: &Common, hist: &HistogramInput, fail_on_empty: bool) -> CmdResult {
    let cfg: PrivacySettings = read_config(require_config(common)?)?;
    let h = load_histogram(&hist.schema, &hist.input)?;
    let params = PrivacyParams::for_histogram(&h, cfg.epsilon, cfg.rho, cfg.n)?;
    let seed = common.seed.or(cfg.seed).unwrap_or(0);
    let result = privatize_with(&h, &params, seed, execution(common))?;
    let dir = out_dir(common, None)?;
    write_histogram(&result.histogram, &dir, "released.csv")?;
    write_json(dir.join("release_report.json"), &result.report())?;
    println!(
        "released {} buckets (tau {:.3}, {} spurious)",
        result.histogram.len(),
        params.tau,
        result.spurious_added
    );
    Ok(empty_status(result.histogram.is_empty(), params.tau, fail_on_empty))
}

fn empty_status(empty: bool, tau: f64, fail_on_empty: bool) -> Status {
    if empty {
        warn!("release is empty: every bucket fell below the threshold {tau:.3}");
        if fail_on_empty {
            return Status::EmptyRelease;
        }
    }
    Status::Ok
}

fn load_pipeline(common: &Common) -> Result<PipelineConfig, Failure> {
    let path = require_config(common)?;
    let mut cfg = PipelineConfig::read_json(path).map_err(|e| config_err(anyhow!(e).context(format!("reading config {}", path.display()))))?;
    if let Some(seed) = common.seed {
        cfg.plan.seed = seed;
    }
    cfg.plan.execution = execution(common);
    Ok(cfg)
}

fn pipeline_input(cfg: &PipelineConfig) -> Result<Histogram, Failure> {
    load_histogram(&cfg.resolve(&cfg.schema), &cfg.resolve(&cfg.input))
}

pub fn release(common: &Common, fail_on_empty: bool) -> CmdResult {
    let cfg = load_pipeline(common)?;
    cfg.plan.resolved_order()?;
    let input = pipeline_input(&cfg)?;
    let outcome = run_release(&input, &cfg.plan)?;
    let dir = out_dir(common, cfg.out.as_deref().map(|o| cfg.resolve(o)))?;
    outcome.write_to(&dir)?;
    match &outcome.distances {
        Some(d) => println!(
            "{:?}: released {} buckets, pwkt {:.6}, hellinger {:.6}",
            outcome.order,
            outcome.released.len(),
            d.pwkt,
            d.hellinger
        ),
        None => println!("{:?}: empty release", outcome.order),
    }
    if outcome.is_empty() && fail_on_empty {
        return Ok(Status::EmptyRelease);
    }
    Ok(Status::Ok)
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct MeasureConfig {
    weighting: Weighting,
}

pub fn measure(common: &Common, schema: &Path, reference: &Path, other: &Path, replicates: usize) -> CmdResult {
    let cfg: MeasureConfig = match &common.config {
        Some(p) => read_config(p)?,
        None => MeasureConfig::default(),
    };
    let a = load_histogram(schema, reference)?;
    let b = load_histogram(schema, other)?;
    let opts = (replicates > 0).then(|| BootstrapOptions {
        replicates,
        seed: common.seed.unwrap_or(0),
        weighting: cfg.weighting,
        execution: execution(common),
    });
    let (report, sample) = measure_distances(&a, &b, cfg.weighting, opts.as_ref())?;
    let dir = out_dir(common, None)?;
    write_json(dir.join("distance_report.json"), &report)?;
    if let Some(s) = &sample {
        let f = fs::File::create(dir.join("replicates.csv")).map_err(data_err)?;
        s.write_csv(f)?;
    }
    println!("pwkt {:.6}, hellinger {:.6}", report.pwkt, report.hellinger);
    Ok(Status::Ok)
}

pub fn sweep(common: &Common) -> CmdResult {
    let cfg = load_pipeline(common)?;
    let grid: SweepGrid = cfg.sweep.clone().unwrap_or_default();
    let input = pipeline_input(&cfg)?;
    let result = run_sweep(&input, &cfg.plan, &grid)?;
    let dir = out_dir(common, cfg.out.as_deref().map(|o| cfg.resolve(o)))?;
    result.write_to(&dir)?;
    for c in &result.cells {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        println!(
            "eps {:<6} rho {:<5} hellinger {} pwkt {} bins {:.1}",
            c.epsilon,
            c.rho,
            fmt(c.mean_hellinger),
            fmt(c.mean_pwkt),
            c.mean_bins_released
        );
    }
    Ok(Status::Ok)
}
