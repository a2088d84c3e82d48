//! End-to-end runs: privatize and repair in either order, measure the result
//! against the input, and sweep privacy parameters.
//!
//! Every randomized stage draws from a seed derived from one master seed and
//! the stage name, so switching a stage on or off leaves the others' draws
//! unchanged.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{CountMode, Histogram};
use crate::metrics::{measure, BootstrapOptions, BootstrapSample, DistanceReport, Distances, Weighting};
use crate::par::{try_map_indices, Execution};
use crate::privacy::{privatize_with, PrivacyParams, ReleaseReport};
use crate::repair::{random_x_baseline, repair, RepairReport, RepairSpec, Rounding};
use crate::rng::{derive_indexed_seed, derive_seed};
use crate::schema::AttributeSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    /// Privatize, then repair the released histogram.
    PrivacyFirst,
    /// Repair, then privatize the rounded repair.
    BiasFirst,
    RepairOnly,
    PrivacyOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySettings {
    pub epsilon: f64,
    pub rho: f64,
    /// Inactive-bucket count; defaults to global size minus active size.
    #[serde(default)]
    pub n: Option<u64>,
    /// Overrides the seed derived from the master seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapSettings {
    /// 0 disables the band.
    pub replicates: usize,
    pub seed: Option<u64>,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        BootstrapSettings {
            replicates: BootstrapOptions::DEFAULT_REPLICATES,
            seed: None,
        }
    }
}

/// What to run on an in-memory histogram.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ReleasePlan {
    pub repair: Option<RepairSpec>,
    pub privacy: Option<PrivacySettings>,
    /// Inferred from the configured stages when absent (privacy-first when
    /// both are present).
    pub order: Option<Order>,
    pub bootstrap: BootstrapSettings,
    pub rounding: Rounding,
    pub weighting: Weighting,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl ReleasePlan {
    pub fn resolved_order(&self) -> Result<Order> {
        let has_repair = self.repair.is_some();
        let has_privacy = self.privacy.is_some();
        let order = match self.order {
            Some(o) => o,
            None => match (has_repair, has_privacy) {
                (true, true) => Order::PrivacyFirst,
                (true, false) => Order::RepairOnly,
                (false, true) => Order::PrivacyOnly,
                (false, false) => return Err(Error::param("configure at least one of repair and privacy")),
            },
        };
        let (need_repair, need_privacy) = match order {
            Order::PrivacyFirst | Order::BiasFirst => (true, true),
            Order::RepairOnly => (true, false),
            Order::PrivacyOnly => (false, true),
        };
        if need_repair && !has_repair {
            return Err(Error::param(format!("order {order:?} needs a repair spec")));
        }
        if need_privacy && !has_privacy {
            return Err(Error::param(format!("order {order:?} needs privacy settings")));
        }
        Ok(order)
    }

    pub fn privacy_seed(&self) -> u64 {
        self.privacy.and_then(|p| p.seed).unwrap_or_else(|| derive_seed(self.seed, "privatize"))
    }

    pub fn bootstrap_seed(&self) -> u64 {
        self.bootstrap.seed.unwrap_or_else(|| derive_seed(self.seed, "bootstrap"))
    }

    pub fn baseline_seed(&self) -> u64 {
        derive_seed(self.seed, "baseline")
    }
}

#[derive(Debug, Clone)]
pub struct ReleaseOutcome {
    pub order: Order,
    /// Final output with real-valued counts, as measured.
    pub output: Histogram,
    /// Integer histogram written as the release.
    pub released: Histogram,
    pub repair: Option<RepairReport>,
    pub release: Option<ReleaseReport>,
    /// `None` when the release is empty.
    pub distances: Option<DistanceReport>,
    pub replicates: Option<BootstrapSample>,
    pub warnings: Vec<String>,
}

impl ReleaseOutcome {
    pub fn is_empty(&self) -> bool {
        self.released.is_empty()
    }

    /// Writes `released.csv`, `release_report.json`, `repair_report.json`,
    /// `distance_report.json` and `replicates.csv` (those that apply).
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.released.write_csv_file(dir.join("released.csv"))?;
        if let Some(r) = &self.repair {
            write_json(dir.join("repair_report.json"), r)?;
        }
        if let Some(r) = &self.release {
            write_json(dir.join("release_report.json"), r)?;
        }
        if let Some(d) = &self.distances {
            write_json(dir.join("distance_report.json"), d)?;
        }
        if let Some(s) = &self.replicates {
            s.write_csv(fs::File::create(dir.join("replicates.csv"))?)?;
        }
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

struct Staged {
    output: Histogram,
    released: Histogram,
    repair: Option<RepairReport>,
    release: Option<ReleaseReport>,
}

fn privatize_stage(h: &Histogram, plan: &ReleasePlan) -> Result<crate::privacy::ReleaseResult> {
    let p = plan.privacy.expect("checked by resolved_order");
    let params = PrivacyParams::for_histogram(h, p.epsilon, p.rho, p.n)?;
    privatize_with(h, &params, plan.privacy_seed(), plan.execution)
}

fn run_stages(input: &Histogram, plan: &ReleasePlan, order: Order) -> Result<Staged> {
    let stage_privacy = |h: &Histogram| privatize_stage(h, plan).map_err(|e| e.in_stage("privatize"));
    let stage_repair = |h: &Histogram| {
        repair(h, plan.repair.as_ref().expect("checked by resolved_order"), plan.rounding)
            .map_err(|e| e.in_stage("repair"))
    };
    Ok(match order {
        Order::RepairOnly => {
            let r = stage_repair(input)?;
            Staged {
                repair: Some(r.report(input)),
                output: r.fractional,
                released: r.rounded,
                release: None,
            }
        }
        Order::PrivacyOnly => {
            let p = stage_privacy(input)?;
            Staged {
                release: Some(p.report()),
                output: p.histogram.clone(),
                released: p.histogram,
                repair: None,
            }
        }
        Order::PrivacyFirst => {
            let p = stage_privacy(input)?;
            let release = Some(p.report());
            if p.histogram.is_empty() {
                Staged {
                    output: p.histogram.clone(),
                    released: p.histogram,
                    repair: None,
                    release,
                }
            } else {
                let r = stage_repair(&p.histogram)?;
                Staged {
                    repair: Some(r.report(&p.histogram)),
                    output: r.fractional,
                    released: r.rounded,
                    release,
                }
            }
        }
        Order::BiasFirst => {
            let r = stage_repair(input)?;
            let p = stage_privacy(&r.rounded)?;
            Staged {
                repair: Some(r.report(input)),
                release: Some(p.report()),
                output: p.histogram.clone(),
                released: p.histogram,
            }
        }
    })
}

/// Runs the configured stages on `input` and measures the output against
/// it, with the bootstrap band of `input` and the random-X baseline when a
/// repair spec is present. An empty release is returned with a warning and
/// no distances.
pub fn run_release(input: &Histogram, plan: &ReleasePlan) -> Result<ReleaseOutcome> {
    run_release_inner(input, plan, true)
}

fn run_release_inner(input: &Histogram, plan: &ReleasePlan, extras: bool) -> Result<ReleaseOutcome> {
    let order = plan.resolved_order()?;
    if input.is_empty() {
        return Err(Error::EmptyInput("input histogram is empty".into()));
    }
    let staged = run_stages(input, plan, order)?;
    let mut warnings = Vec::new();

    let (distances, replicates) = if staged.released.is_empty() {
        let tau = staged.release.map_or(0.0, |r| r.tau);
        warnings.push(format!(
            "release is empty: every bucket fell below the threshold {tau:.3}; no distances computed"
        ));
        (None, None)
    } else {
        let opts = (extras && plan.bootstrap.replicates > 0).then(|| BootstrapOptions {
            replicates: plan.bootstrap.replicates,
            seed: plan.bootstrap_seed(),
            weighting: plan.weighting,
            execution: plan.execution,
        });
        let opts = match opts {
            Some(_) if input.mode() != CountMode::Integer => {
                warnings.push("input has fractional counts; bootstrap band skipped".into());
                None
            }
            o => o,
        };
        let (mut report, sample) =
            measure(input, &staged.output, plan.weighting, opts.as_ref()).map_err(|e| e.in_stage("measure"))?;
        if let (true, Some(spec), CountMode::Integer) = (extras, &plan.repair, input.mode()) {
            let baseline = random_x_baseline(input, spec, plan.baseline_seed()).map_err(|e| e.in_stage("baseline"))?;
            report.baseline = Some(Distances::between(input, &baseline, plan.weighting)?);
        }
        (Some(report), sample)
    };
    for w in &warnings {
        warn!("{w}");
    }
    Ok(ReleaseOutcome {
        order,
        output: staged.output,
        released: staged.released,
        repair: staged.repair,
        release: staged.release,
        distances,
        replicates,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub epsilons: Vec<f64>,
    pub rhos: Vec<f64>,
    pub trials: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            epsilons: vec![0.1, 0.3, 1.0, 3.0, 10.0],
            rhos: vec![0.5, 0.99],
            trials: 10,
        }
    }
}

/// One trial of one grid cell. Distances are `None` when the release is
/// empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub rho: f64,
    pub trial: usize,
    pub pwkt: Option<f64>,
    pub hellinger: Option<f64>,
    pub bins_released: usize,
}

/// Averages over the trials of one cell; distance means skip empty releases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub epsilon: f64,
    pub rho: f64,
    pub trials: usize,
    pub empty_trials: usize,
    pub mean_pwkt: Option<f64>,
    pub mean_hellinger: Option<f64>,
    pub mean_bins_released: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
}

/// Seed of trial `t`; shared by every cell so cells differ only in their
/// parameters.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    derive_indexed_seed(master, "sweep-trial", trial as u64)
}

/// Runs the plan for every `(epsilon, rho, trial)`. Trial `t` behaves like
/// [`run_release`] with master seed [`trial_seed`]`(plan.seed, t)`, without
/// the bootstrap band and baseline. Any explicit privacy seed is ignored.
pub fn run_sweep(input: &Histogram, plan: &ReleasePlan, grid: &SweepGrid) -> Result<SweepResult> {
    let base = plan.privacy.ok_or_else(|| Error::param("sweep needs privacy settings"))?;
    if grid.epsilons.is_empty() || grid.rhos.is_empty() || grid.trials == 0 {
        return Err(Error::param("sweep grid needs epsilons, rhos and at least one trial"));
    }
    let cells: Vec<(f64, f64)> = grid
        .rhos
        .iter()
        .flat_map(|&rho| grid.epsilons.iter().map(move |&eps| (eps, rho)))
        .collect();
    let jobs = cells.len() * grid.trials;
    let rows = try_map_indices(plan.execution, jobs, |j| {
        let (epsilon, rho) = cells[j / grid.trials];
        let trial = j % grid.trials;
        let trial_plan = ReleasePlan {
            privacy: Some(PrivacySettings {
                epsilon,
                rho,
                n: base.n,
                seed: None,
            }),
            seed: trial_seed(plan.seed, trial),
            execution: Execution::Sequential,
            ..plan.clone()
        };
        let out = run_release_inner(input, &trial_plan, false)?;
        Ok::<_, Error>(SweepRow {
            epsilon,
            rho,
            trial,
            pwkt: out.distances.as_ref().map(|d| d.pwkt),
            hellinger: out.distances.as_ref().map(|d| d.hellinger),
            bins_released: out.released.len(),
        })
    })?;
    let cells = rows
        .chunks(grid.trials)
        .map(|chunk| {
            let mean = |f: fn(&SweepRow) -> Option<f64>| {
                let v: Vec<f64> = chunk.iter().filter_map(f).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            };
            SweepCell {
                epsilon: chunk[0].epsilon,
                rho: chunk[0].rho,
                trials: chunk.len(),
                empty_trials: chunk.iter().filter(|r| r.hellinger.is_none()).count(),
                mean_pwkt: mean(|r| r.pwkt),
                mean_hellinger: mean(|r| r.hellinger),
                mean_bins_released: chunk.iter().map(|r| r.bins_released as f64).sum::<f64>() / chunk.len() as f64,
            }
        })
        .collect();
    Ok(SweepResult { rows, cells })
}

impl SweepResult {
    /// Writes `sweep.csv` (one row per trial) and `sweep_summary.csv` (one
    /// row per cell). Undefined distances are left blank.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("sweep_summary.csv"))?;
        for c in &self.cells {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// File-level configuration for `release` and `sweep`. Relative paths are
/// resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub schema: PathBuf,
    pub input: PathBuf,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(flatten)]
    pub plan: ReleasePlan,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
    #[serde(skip)]
    base_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn read_json<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json_str(&fs::read_to_string(path)?)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn load_schema(&self) -> Result<Arc<AttributeSchema>> {
        Ok(Arc::new(AttributeSchema::read_json(self.resolve(&self.schema))?))
    }

    pub fn load_input(&self) -> Result<Histogram> {
        Histogram::read_csv_file(self.resolve(&self.input), self.load_schema()?)
    }
}
