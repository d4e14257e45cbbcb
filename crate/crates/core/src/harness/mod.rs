//! Experiment orchestration: configuration, single runs, and multi-arm
//! comparisons at equal communication budget.

mod metrics;

pub use metrics::{read_metrics, rows_of, write_metrics, MetricsRow, CSV_HEADER};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, Compressor, EngineError, RunMetrics, TrainConfig};
use crate::problems::{
    load_idx, shard_dataset, synthetic_images, Dataset, LogisticProblem, MlpProblem,
    Problem, ProblemError, QuadraticProblem, SyntheticSpec,
};
use crate::schedule::{self, ScheduleError};

/// Environment variable overriding the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "ADAPTOPK_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    /// Process exit code: 1 usage, 2 config/invariant, 3 runtime/IO.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Usage(_) => 1,
            HarnessError::Config(_) => 2,
            HarnessError::Io(_) | HarnessError::Runtime(_) => 3,
        }
    }
}

impl From<EngineError> for HarnessError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::InvalidConfig(_)
            | EngineError::WorkerShardMismatch { .. }
            | EngineError::Schedule(_) => HarnessError::Config(e.to_string()),
            EngineError::Estimation(_) | EngineError::Sparsify(_) => {
                HarnessError::Runtime(e.to_string())
            }
            EngineError::Problem(p) => p.into(),
        }
    }
}

impl From<ProblemError> for HarnessError {
    fn from(e: ProblemError) -> Self {
        match e {
            ProblemError::Idx(idx) => HarnessError::Runtime(idx.to_string()),
            other => HarnessError::Config(other.to_string()),
        }
    }
}

impl From<ScheduleError> for HarnessError {
    fn from(e: ScheduleError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Config(format!("bad JSON config: {e}"))
    }
}

/// One comparison arm: a compressor, optionally overriding the shared
/// error-compensation flag. Rendered as `adaptopk`, `topk_fixed+ec`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arm {
    pub compressor: Compressor,
    pub error_compensation: Option<bool>,
}

impl Arm {
    pub fn name(&self) -> String {
        match self.error_compensation {
            Some(true) => format!("{}+ec", self.compressor),
            _ => self.compressor.to_string(),
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (base, ec) = match s.strip_suffix("+ec") {
            Some(base) => (base, Some(true)),
            None => (s, None),
        };
        Ok(Arm {
            compressor: base.parse()?,
            error_compensation: ec,
        })
    }
}

impl Serialize for Arm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Arm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Problem selection; mirrors the `problem` object of the JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Quadratic {
        #[serde(default = "default_quad_dim")]
        d: usize,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_quad_noise")]
        sigma_sq: f64,
        /// Seed fixing the optimum (independent of the run seed).
        #[serde(default = "default_problem_seed")]
        seed: u64,
    },
    Logistic {
        #[serde(flatten)]
        data: DataSpec,
    },
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: usize,
        #[serde(flatten)]
        data: DataSpec,
    },
}

fn default_quad_dim() -> usize {
    200
}
fn default_lambda() -> f64 {
    1.0
}
fn default_quad_noise() -> f64 {
    0.5
}
fn default_problem_seed() -> u64 {
    7
}
fn default_hidden() -> usize {
    32
}
fn default_train_limit() -> usize {
    10_000
}
fn default_test_limit() -> usize {
    2_000
}

/// Where image data comes from: IDX files on disk, or the built-in
/// generated stand-in when no paths are given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default)]
    pub images: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub test_images: Option<PathBuf>,
    #[serde(default)]
    pub test_labels: Option<PathBuf>,
    /// Parameters for the generated dataset when no paths are given.
    #[serde(default)]
    pub synthetic: Option<SyntheticDataSpec>,
    #[serde(default = "default_train_limit")]
    pub train_limit: usize,
    #[serde(default = "default_test_limit")]
    pub test_limit: usize,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            images: None,
            labels: None,
            test_images: None,
            test_labels: None,
            synthetic: None,
            train_limit: default_train_limit(),
            test_limit: default_test_limit(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDataSpec {
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_synth_seed")]
    pub seed: u64,
    #[serde(default = "default_synth_noise")]
    pub noise: f64,
    #[serde(default = "default_label_noise")]
    pub label_noise: f64,
}

fn default_classes() -> usize {
    10
}
fn default_synth_seed() -> u64 {
    5
}
fn default_synth_noise() -> f64 {
    0.5
}
fn default_label_noise() -> f64 {
    0.05
}

impl Default for SyntheticDataSpec {
    fn default() -> Self {
        Self {
            classes: default_classes(),
            seed: default_synth_seed(),
            noise: default_synth_noise(),
            label_noise: default_label_noise(),
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}
fn default_arms() -> Vec<Arm> {
    vec![
        Arm {
            compressor: Compressor::Adaptopk,
            error_compensation: None,
        },
        Arm {
            compressor: Compressor::TopkFixed,
            error_compensation: None,
        },
    ]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Full experiment description; the JSON config mirrors this struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_problem_spec")]
    pub problem: ProblemSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_arms")]
    pub arms: Vec<Arm>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Thread-pool size; `None` uses every core.
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_problem_spec() -> ProblemSpec {
    ProblemSpec::Quadratic {
        d: default_quad_dim(),
        lambda: default_lambda(),
        sigma_sq: default_quad_noise(),
        seed: default_problem_seed(),
    }
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults are total")
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Output directory after the environment override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output_dir.clone())
    }
}

/// Data and model shared by every run of an experiment; sharding happens
/// per run seed.
pub enum ProblemSource {
    Quadratic {
        d: usize,
        lambda: f64,
        sigma_sq: f64,
        seed: u64,
    },
    Images {
        model: ImageModel,
        train: Dataset,
        test: Dataset,
    },
}

pub enum ImageModel {
    Logistic,
    Mlp { hidden: usize },
}

fn load_data(data: &DataSpec) -> Result<(Dataset, Dataset), HarnessError> {
    match (&data.images, &data.labels) {
        (Some(images), Some(labels)) => {
            let mut train = load_idx(images, labels).map_err(ProblemError::from)?;
            train.truncate(data.train_limit);
            let mut test = match (&data.test_images, &data.test_labels) {
                (Some(ti), Some(tl)) => load_idx(ti, tl).map_err(ProblemError::from)?,
                (None, None) => Dataset::new(vec![], train.num_features(), vec![]).unwrap_or_else(
                    |_| unreachable!("empty dataset is always consistent"),
                ),
                _ => {
                    return Err(HarnessError::Config(
                        "test_images and test_labels must be given together".into(),
                    ))
                }
            };
            test.truncate(data.test_limit);
            Ok((train, test))
        }
        (None, None) => {
            let synth = data.synthetic.unwrap_or_default();
            let generated = synthetic_images(&SyntheticSpec {
                classes: synth.classes,
                train: data.train_limit,
                test: data.test_limit,
                seed: synth.seed,
                noise: synth.noise,
                label_noise: synth.label_noise,
            });
            Ok((generated.train, generated.test))
        }
        _ => Err(HarnessError::Config(
            "images and labels must be given together".into(),
        )),
    }
}

pub fn load_source(spec: &ProblemSpec) -> Result<ProblemSource, HarnessError> {
    match spec {
        ProblemSpec::Quadratic {
            d,
            lambda,
            sigma_sq,
            seed,
        } => Ok(ProblemSource::Quadratic {
            d: *d,
            lambda: *lambda,
            sigma_sq: *sigma_sq,
            seed: *seed,
        }),
        ProblemSpec::Logistic { data } => {
            let (train, test) = load_data(data)?;
            Ok(ProblemSource::Images {
                model: ImageModel::Logistic,
                train,
                test,
            })
        }
        ProblemSpec::Mlp { hidden, data } => {
            let (train, test) = load_data(data)?;
            Ok(ProblemSource::Images {
                model: ImageModel::Mlp { hidden: *hidden },
                train,
                test,
            })
        }
    }
}

/// Builds the problem instance for one run (shards are seeded per run).
pub fn instantiate(
    source: &ProblemSource,
    workers: usize,
    run_seed: u64,
) -> Result<Box<dyn Problem>, HarnessError> {
    match source {
        ProblemSource::Quadratic {
            d,
            lambda,
            sigma_sq,
            seed,
        } => Ok(Box::new(QuadraticProblem::new(*d, *lambda, *sigma_sq, *seed))),
        ProblemSource::Images { model, train, test } => {
            let shards = shard_dataset(train, workers, run_seed)?;
            let classes = 1 + train_max_label(train).max(train_max_label(test)) as usize;
            let test = (!test.is_empty()).then(|| test.clone());
            match model {
                ImageModel::Logistic => {
                    Ok(Box::new(LogisticProblem::new(shards, classes.max(2), test)?))
                }
                ImageModel::Mlp { hidden } => Ok(Box::new(MlpProblem::new(
                    shards,
                    *hidden,
                    classes.max(2),
                    test,
                )?)),
            }
        }
    }
}

fn train_max_label(ds: &Dataset) -> u8 {
    (0..ds.len()).map(|i| ds.label(i)).max().unwrap_or(0)
}

/// A finished (arm, seed) run.
pub struct ArmRun {
    pub arm: Arm,
    pub seed: u64,
    pub metrics: RunMetrics,
}

fn arm_config(train: &TrainConfig, arm: Arm, seed: u64) -> TrainConfig {
    TrainConfig {
        compressor: arm.compressor,
        error_compensation: arm.error_compensation.unwrap_or(train.error_compensation),
        seed,
        ..train.clone()
    }
}

/// Runs one arm at one seed.
pub fn run_single(
    source: &ProblemSource,
    train: &TrainConfig,
    arm: Arm,
    seed: u64,
) -> Result<ArmRun, HarnessError> {
    let cfg = arm_config(train, arm, seed);
    let problem = instantiate(source, cfg.workers, seed)?;
    let metrics = engine::run_training(&cfg, problem.as_ref())?;
    Ok(ArmRun { arm, seed, metrics })
}

/// Runs every (arm, seed) pair; pairs execute in parallel, results return
/// in deterministic (arm-major) order.
pub fn run_all(
    source: &ProblemSource,
    train: &TrainConfig,
    arms: &[Arm],
    seeds: &[u64],
) -> Result<Vec<ArmRun>, HarnessError> {
    let jobs: Vec<(Arm, u64)> = arms
        .iter()
        .flat_map(|&arm| seeds.iter().map(move |&s| (arm, s)))
        .collect();
    jobs.into_par_iter()
        .map(|(arm, seed)| run_single(source, train, arm, seed))
        .collect()
}

/// Summary of one arm over its seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSummary {
    pub arm: Arm,
    pub seeds: usize,
    pub mean_final_acc: Option<f64>,
    pub std_final_acc: Option<f64>,
    pub mean_final_loss: f64,
    pub std_final_loss: f64,
    /// Per-seed coordinate total (identical across seeds of an arm).
    pub total_coords: u64,
    pub total_bits: u64,
    /// Optimality-gap bound evaluated with seed-mean gradient norms, when
    /// the constants are known and satisfy the bound's preconditions.
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSummary {
    pub arms: Vec<ArmSummary>,
    /// Winning arm: highest mean accuracy, then lowest mean loss.
    pub winner: Arm,
}

/// Aggregates per-arm statistics and flags the winner.
///
/// Every run must share the same round count; arms must each cover the same
/// seed set.
pub fn compare_summary(runs: &[ArmRun]) -> Result<CompareSummary, HarnessError> {
    if runs.is_empty() {
        return Err(HarnessError::Config("no runs to summarize".into()));
    }
    let rounds = runs[0].metrics.records.len();
    if runs.iter().any(|r| r.metrics.records.len() != rounds) {
        return Err(HarnessError::Config(
            "arms disagree on round count; budgets are not comparable".into(),
        ));
    }
    let mut arms: Vec<Arm> = Vec::new();
    for r in runs {
        if !arms.contains(&r.arm) {
            arms.push(r.arm);
        }
    }
    let mut summaries = Vec::with_capacity(arms.len());
    for &arm in &arms {
        let arm_runs: Vec<&ArmRun> = runs.iter().filter(|r| r.arm == arm).collect();
        let first = arm_runs[0];
        if arm_runs
            .iter()
            .any(|r| r.metrics.total_coords != first.metrics.total_coords)
        {
            return Err(HarnessError::Config(format!(
                "arm {arm} sent different coordinate totals across seeds"
            )));
        }
        let losses: Vec<f64> = arm_runs.iter().map(|r| r.metrics.final_loss).collect();
        let accs: Vec<f64> = arm_runs
            .iter()
            .filter_map(|r| r.metrics.final_accuracy)
            .collect();
        let (mean_loss, std_loss) = stats(&losses);
        let (mean_acc, std_acc) = if accs.len() == arm_runs.len() {
            let (m, s) = stats(&accs);
            (Some(m), Some(s))
        } else {
            (None, None)
        };
        let bound = arm_bound(&arm_runs, rounds);
        summaries.push(ArmSummary {
            arm,
            seeds: arm_runs.len(),
            mean_final_acc: mean_acc,
            std_final_acc: std_acc,
            mean_final_loss: mean_loss,
            std_final_loss: std_loss,
            total_coords: first.metrics.total_coords,
            total_bits: first.metrics.total_bits,
            bound,
        });
    }
    let winner = summaries
        .iter()
        .max_by(|a, b| {
            match (a.mean_final_acc, b.mean_final_acc) {
                (Some(x), Some(y)) => x.partial_cmp(&y).unwrap(),
                _ => b.mean_final_loss.partial_cmp(&a.mean_final_loss).unwrap(),
            }
        })
        .map(|s| s.arm)
        .expect("non-empty summaries");
    Ok(CompareSummary {
        arms: summaries,
        winner,
    })
}

fn stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

fn arm_bound(arm_runs: &[&ArmRun], rounds: usize) -> Option<f64> {
    let params = arm_runs[0].metrics.bound_params?;
    if params.validate().is_err() {
        return None;
    }
    let mut mean_norms = vec![0.0; rounds];
    for run in arm_runs {
        for (acc, r) in mean_norms.iter_mut().zip(&run.metrics.records) {
            *acc += r.grad_norm_sq / arm_runs.len() as f64;
        }
    }
    schedule::theorem1_bound(&params, &arm_runs[0].metrics.schedule, &mean_norms).ok()
}

/// Refuses compressed arms whose schedule totals differ (the dense `none`
/// arm is a reference baseline and is exempt).
pub fn check_equal_budget(runs: &[ArmRun]) -> Result<(), HarnessError> {
    let mut budget: Option<(Arm, u64)> = None;
    for run in runs {
        if run.arm.compressor == Compressor::None {
            continue;
        }
        let total = run.metrics.records.iter().map(|r| r.k_t as u64).sum::<u64>();
        match budget {
            None => budget = Some((run.arm, total)),
            Some((first_arm, first_total)) => {
                if total != first_total {
                    return Err(HarnessError::Config(format!(
                        "unequal communication budgets: {first_arm} sends {first_total} \
                         coordinates per worker but {} sends {total}; pass \
                         --allow-unequal-budget to compare anyway",
                        run.arm
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Renders the summary as an aligned text table.
pub fn render_summary(summary: &CompareSummary) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:>5} {:>20} {:>24} {:>14} {:>14}\n",
        "arm", "seeds", "final_acc", "final_loss", "total_coords", "bound"
    ));
    for s in &summary.arms {
        let acc = match (s.mean_final_acc, s.std_final_acc) {
            (Some(m), Some(sd)) => format!("{:.4} ± {:.4}", m, sd),
            _ => "-".to_string(),
        };
        let bound = s.bound.map(|b| format!("{b:.6}")).unwrap_or("-".into());
        out.push_str(&format!(
            "{:<14} {:>5} {:>20} {:>24} {:>14} {:>14}\n",
            s.arm.name(),
            s.seeds,
            acc,
            format!("{:.6} ± {:.6}", s.mean_final_loss, s.std_final_loss),
            s.total_coords,
            bound
        ));
    }
    out.push_str(&format!("winner: {}\n", summary.winner.name()));
    out
}

/// Writes the summary as CSV next to the per-run metrics.
pub fn write_summary_csv(summary: &CompareSummary, path: &Path) -> Result<(), HarnessError> {
    let mut out = String::from(
        "arm,seeds,mean_final_acc,std_final_acc,mean_final_loss,std_final_loss,total_coords,total_bits,bound\n",
    );
    for s in &summary.arms {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.arm.name(),
            s.seeds,
            s.mean_final_acc.map(|v| v.to_string()).unwrap_or_default(),
            s.std_final_acc.map(|v| v.to_string()).unwrap_or_default(),
            s.mean_final_loss,
            s.std_final_loss,
            s.total_coords,
            s.total_bits,
            s.bound.map(|v| v.to_string()).unwrap_or_default(),
        ));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("csv.tmp");
    std::fs::write(&tmp, out)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_spec() -> ExperimentSpec {
        let mut spec = ExperimentSpec::default();
        spec.train = TrainConfig {
            rounds: 20,
            workers: 2,
            eta: 0.25,
            batch_size: 1,
            ratio: 8.0,
            gamma: 0.5,
            eval_every: 0,
            ..TrainConfig::default()
        };
        spec.problem = ProblemSpec::Quadratic {
            d: 32,
            lambda: 1.0,
            sigma_sq: 0.5,
            seed: 7,
        };
        spec.seeds = vec![1, 2];
        spec
    }

    #[test]
    fn config_roundtrip_is_idempotent() {
        let spec = quadratic_spec();
        let json = serde_json::to_string_pretty(&spec).unwrap();
        let parsed = ExperimentSpec::from_json(&json).unwrap();
        assert_eq!(spec, parsed);
        let json2 = serde_json::to_string_pretty(&parsed).unwrap();
        assert_eq!(json, json2);
    }

    #[test]
    fn arm_parse_and_render() {
        let a: Arm = "adaptopk+ec".parse().unwrap();
        assert_eq!(a.compressor, Compressor::Adaptopk);
        assert_eq!(a.error_compensation, Some(true));
        assert_eq!(a.name(), "adaptopk+ec");
        assert!("wat".parse::<Arm>().is_err());
    }

    #[test]
    fn compare_summary_single_run() {
        let spec = quadratic_spec();
        let source = load_source(&spec.problem).unwrap();
        let runs = run_all(
            &source,
            &spec.train,
            &[Arm {
                compressor: Compressor::TopkFixed,
                error_compensation: None,
            }],
            &[1],
        )
        .unwrap();
        let summary = compare_summary(&runs).unwrap();
        assert_eq!(summary.arms.len(), 1);
        assert_eq!(summary.arms[0].seeds, 1);
        assert_eq!(summary.arms[0].std_final_loss, 0.0);
        assert_eq!(summary.arms[0].mean_final_loss, runs[0].metrics.final_loss);
    }

    #[test]
    fn compare_rejects_mismatched_rounds() {
        let spec = quadratic_spec();
        let source = load_source(&spec.problem).unwrap();
        let arm = Arm {
            compressor: Compressor::TopkFixed,
            error_compensation: None,
        };
        let mut runs = run_all(&source, &spec.train, &[arm], &[1]).unwrap();
        let mut other_train = spec.train.clone();
        other_train.rounds = 10;
        runs.extend(run_all(&source, &other_train, &[arm], &[2]).unwrap());
        assert!(compare_summary(&runs).is_err());
    }

    #[test]
    fn equal_budget_check_catches_odd_horizon() {
        let mut spec = quadratic_spec();
        spec.train.rounds = 21; // odd horizon: adaptive schedule sends m fewer coords
        let source = load_source(&spec.problem).unwrap();
        let runs = run_all(&source, &spec.train, &default_arms(), &[1]).unwrap();
        assert!(check_equal_budget(&runs).is_err());
        spec.train.rounds = 20;
        let runs = run_all(&source, &spec.train, &default_arms(), &[1]).unwrap();
        assert!(check_equal_budget(&runs).is_ok());
    }

    #[test]
    fn none_arm_is_exempt_from_budget_check() {
        let spec = quadratic_spec();
        let source = load_source(&spec.problem).unwrap();
        let arms = vec![
            Arm {
                compressor: Compressor::None,
                error_compensation: None,
            },
            Arm {
                compressor: Compressor::TopkFixed,
                error_compensation: None,
            },
        ];
        let runs = run_all(&source, &spec.train, &arms, &[1]).unwrap();
        assert!(check_equal_budget(&runs).is_ok());
    }
}
