//! Ablation grids: run every (configuration, seed) pair and collect the
//! metrics into one summary table plus plot-ready long-format curves.
//!
//! Output files under `output_dir`:
//!
//! * `summary.csv`: `plan,config,seed,epoch,train_rmse,valid_rmse`, final epoch of each successful run
//! * `curves.csv`: `plan,config,seed,epoch,metric,value`, every epoch of every run (failed runs included)
//! * `failures.csv`: `plan,config,seed,epoch,error`
//! * `models.csv`: `config,parameters`
//! * `runs/<config>-s<seed>/metrics.csv`: per-run metrics stream

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::arch::{parse_architecture, ArchitectureSpec};
use crate::data::{read_ratings_file, EvalSet, RatingDataset};
use crate::error::{Error, Result};
use crate::model::Autoencoder;
use crate::train::{fit_with, model_seed, EpochMetrics, TrainConfig, METRICS_HEADER};

pub const SUMMARY_HEADER: &str = "plan,config,seed,epoch,train_rmse,valid_rmse";
pub const CURVES_HEADER: &str = "plan,config,seed,epoch,metric,value";
pub const FAILURES_HEADER: &str = "plan,config,seed,epoch,error";

fn default_activation() -> Activation {
    Activation::Selu
}

/// One configuration of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    /// Name used in the output tables; derived from the settings when absent.
    #[serde(default)]
    pub label: Option<String>,
    pub arch: String,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    /// Overrides the dropout probability written in `arch`.
    #[serde(default)]
    pub dropout: Option<f64>,
    pub lr: f64,
    #[serde(default)]
    pub refeed: usize,
    #[serde(default)]
    pub tied: bool,
}

impl GridPoint {
    pub fn new(arch: impl Into<String>, activation: Activation, lr: f64) -> Self {
        GridPoint {
            label: None,
            arch: arch.into(),
            activation,
            dropout: None,
            lr,
            refeed: 0,
            tied: false,
        }
    }

    pub fn architecture(&self) -> Result<ArchitectureSpec> {
        let mut spec = parse_architecture(&self.arch)?
            .with_activation(self.activation)
            .with_tied(self.tied);
        if let Some(p) = self.dropout {
            spec = spec.with_dropout(p);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn name(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let mut s = format!("{} {} lr={}", self.arch, self.activation, self.lr);
        if let Some(p) = self.dropout {
            s += &format!(" dp={p}");
        }
        if self.refeed > 0 {
            s += &format!(" refeed={}", self.refeed);
        }
        if self.tied {
            s += " tied";
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        parse_architecture(&self.architecture()?.to_string())?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{}: learning rate must be positive",
                self.name()
            )));
        }
        Ok(())
    }
}

fn default_epochs() -> usize {
    30
}
fn default_batch() -> usize {
    128
}
fn default_momentum() -> f64 {
    0.9
}
fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationPlan {
    pub name: String,
    pub grid: Vec<GridPoint>,
    /// Directory holding `train.csv` and optionally `valid.csv`, as written by a split.
    pub dataset: PathBuf,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "one")]
    pub eval_every: usize,
    /// Runs executed concurrently.
    #[serde(default = "one")]
    pub workers: usize,
}

impl AblationPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        let plan: AblationPlan = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("plan needs at least one seed".into()));
        }
        if self.workers == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::InvalidArgument(
                "workers, batch_size and eval_every must be positive".into(),
            ));
        }
        for p in &self.grid {
            p.validate()?;
        }
        Ok(())
    }

    pub fn train_path(&self) -> PathBuf {
        self.dataset.join("train.csv")
    }

    pub fn valid_path(&self) -> Option<PathBuf> {
        Some(self.dataset.join("valid.csv")).filter(|p| p.exists())
    }

    pub fn jobs(&self) -> Vec<RunJob> {
        let mut jobs = Vec::new();
        for point in &self.grid {
            for &seed in &self.seeds {
                let dir_name = format!("{}-s{seed}", sanitize(&point.name()));
                jobs.push(RunJob {
                    point: point.clone(),
                    seed,
                    train_path: self.train_path(),
                    valid_path: self.valid_path(),
                    run_dir: self.output_dir.join("runs").join(dir_name),
                    config: TrainConfig {
                        epochs: self.epochs,
                        batch_size: self.batch_size,
                        learning_rate: point.lr,
                        momentum: self.momentum,
                        refeed_count: point.refeed,
                        seed,
                        eval_every: self.eval_every,
                        ..TrainConfig::default()
                    },
                });
            }
        }
        jobs
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One (configuration, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunJob {
    pub point: GridPoint,
    pub seed: u64,
    pub train_path: PathBuf,
    pub valid_path: Option<PathBuf>,
    /// Where the run writes `metrics.csv`.
    pub run_dir: PathBuf,
    pub config: TrainConfig,
}

impl RunJob {
    pub fn metrics_path(&self) -> PathBuf {
        self.run_dir.join("metrics.csv")
    }

    /// Arguments of the equivalent `train` invocation.
    pub fn cli_args(&self) -> Vec<String> {
        let c = &self.config;
        let arch = self
            .point
            .architecture()
            .map(|a| a.to_string())
            .unwrap_or(self.point.arch.clone());
        let mut args = vec![
            "train".to_string(),
            "--data".into(),
            self.train_path.display().to_string(),
            "--arch".into(),
            arch,
            "--activation".into(),
            self.point.activation.to_string(),
            "--lr".into(),
            c.learning_rate.to_string(),
            "--momentum".into(),
            c.momentum.to_string(),
            "--batch-size".into(),
            c.batch_size.to_string(),
            "--epochs".into(),
            c.epochs.to_string(),
            "--eval-every".into(),
            c.eval_every.to_string(),
            "--seed".into(),
            self.seed.to_string(),
            "--threads".into(),
            c.threads.to_string(),
            "--metrics-out".into(),
            self.metrics_path().display().to_string(),
        ];
        if let Some(v) = &self.valid_path {
            args.extend(["--eval-data".into(), v.display().to_string()]);
        }
        if self.point.tied {
            args.push("--tied".into());
        }
        if c.refeed_count > 0 {
            args.extend(["--refeed".into(), c.refeed_count.to_string()]);
        }
        args
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub history: Vec<EpochMetrics>,
    pub parameters: usize,
}

/// Executes single runs; implementations must be usable from several threads.
pub trait GridRunner: Sync {
    fn run(&self, job: &RunJob) -> Result<RunOutcome>;
}

/// Trains inside the current process. Datasets are loaded once and shared.
#[derive(Default)]
pub struct InProcessRunner {
    data: OnceLock<std::result::Result<(RatingDataset, Option<EvalSet>), String>>,
}

impl InProcessRunner {
    pub fn new() -> Self {
        Self::default()
    }

    fn data(&self, job: &RunJob) -> Result<&(RatingDataset, Option<EvalSet>)> {
        self.data
            .get_or_init(|| {
                let load = || -> Result<_> {
                    let train = RatingDataset::from_records(&read_ratings_file(&job.train_path)?)?;
                    let valid = match &job.valid_path {
                        Some(p) => Some(EvalSet::from_records(&train, &read_ratings_file(p)?).0),
                        None => None,
                    };
                    Ok((train, valid))
                };
                load().map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| Error::InvalidArgument(format!("dataset: {e}")))
    }
}

impl GridRunner for InProcessRunner {
    fn run(&self, job: &RunJob) -> Result<RunOutcome> {
        let (train, valid) = self.data(job)?;
        let arch = job.point.architecture()?;
        let mut model = Autoencoder::<f32>::new(&arch, train.n_items(), model_seed(job.seed))?;
        fs::create_dir_all(&job.run_dir)?;
        let mut out = fs::File::create(job.metrics_path())?;
        writeln!(out, "{METRICS_HEADER}")?;
        let mut write_err = None;
        let fitted = fit_with(&mut model, train, valid.as_ref(), &job.config, |m| {
            if let Err(e) = writeln!(out, "{}", m.to_csv_row()) {
                write_err.get_or_insert(e);
            }
        })?;
        if let Some(e) = write_err {
            return Err(e.into());
        }
        Ok(RunOutcome {
            history: fitted.history,
            parameters: model.parameter_count(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub config: String,
    pub seed: u64,
    pub epoch: usize,
    pub train_rmse: f64,
    pub valid_rmse: Option<f64>,
    /// Lowest validation RMSE of the run.
    pub best_valid_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureRow {
    pub config: String,
    pub seed: u64,
    /// Last completed epoch.
    pub epoch: usize,
    pub error: String,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AblationReport {
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<FailureRow>,
    /// Full history of every run, successful or not, in job order.
    pub curves: Vec<(String, u64, Vec<EpochMetrics>)>,
    pub parameters: Vec<(String, usize)>,
}

impl AblationReport {
    pub fn row(&self, config: &str, seed: u64) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.config == config && r.seed == seed)
    }

    pub fn failure(&self, config: &str, seed: u64) -> Option<&FailureRow> {
        self.failures.iter().find(|r| r.config == config && r.seed == seed)
    }
}

/// Runs every job of `plan` with up to `plan.workers` concurrent runs and
/// writes the output tables. A failing run becomes a failure row.
pub fn run_ablation(plan: &AblationPlan, runner: &dyn GridRunner) -> Result<AblationReport> {
    plan.validate()?;
    if !plan.grid.is_empty() && !plan.train_path().is_file() {
        return Err(Error::InvalidArgument(format!(
            "dataset {} has no train.csv",
            plan.dataset.display()
        )));
    }
    fs::create_dir_all(&plan.output_dir)?;
    let jobs = plan.jobs();
    let results: Vec<Mutex<Option<Result<RunOutcome>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..plan.workers.min(jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let r = runner.run(job);
                *results[i].lock().expect("result slot") = Some(r);
            });
        }
    });

    let mut report = AblationReport::default();
    for (job, slot) in jobs.iter().zip(results) {
        let config = job.point.name();
        let result = slot.into_inner().expect("result slot").expect("every job ran");
        match result {
            Ok(outcome) => {
                if !report.parameters.iter().any(|(c, _)| *c == config) {
                    report.parameters.push((config.clone(), outcome.parameters));
                }
                if let Some(last) = outcome.history.last() {
                    report.summary.push(SummaryRow {
                        config: config.clone(),
                        seed: job.seed,
                        epoch: last.epoch,
                        train_rmse: last.train_rmse,
                        valid_rmse: last.valid_rmse,
                        best_valid_rmse: outcome.history.iter().filter_map(|m| m.valid_rmse).reduce(f64::min),
                    });
                }
                report.curves.push((config, job.seed, outcome.history));
            }
            Err(e) => {
                let (diverged, history) = match &e {
                    Error::Diverged { history, .. } => (true, history.clone()),
                    _ => (false, Vec::new()),
                };
                report.failures.push(FailureRow {
                    config: config.clone(),
                    seed: job.seed,
                    epoch: history.last().map_or(0, |m| m.epoch),
                    error: e.to_string(),
                    diverged,
                });
                report.curves.push((config, job.seed, history));
            }
        }
    }
    write_report(plan, &report)?;
    Ok(report)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_report(plan: &AblationPlan, report: &AblationReport) -> Result<()> {
    let dir = &plan.output_dir;
    let name = csv_field(&plan.name);
    let mut summary = format!("{SUMMARY_HEADER}\n");
    for r in &report.summary {
        summary += &format!(
            "{name},{},{},{},{},{}\n",
            csv_field(&r.config),
            r.seed,
            r.epoch,
            r.train_rmse,
            opt(r.valid_rmse)
        );
    }
    fs::write(dir.join("summary.csv"), summary)?;

    let mut curves = format!("{CURVES_HEADER}\n");
    for (config, seed, history) in &report.curves {
        let config = csv_field(config);
        for m in history {
            let metrics = [
                ("train_mmse", Some(m.train_mmse)),
                ("train_rmse", Some(m.train_rmse)),
                ("refeed_mmse", m.refeed_mmse),
                ("valid_rmse", m.valid_rmse),
            ];
            for (metric, value) in metrics {
                if let Some(v) = value {
                    curves += &format!("{name},{config},{seed},{},{metric},{v}\n", m.epoch);
                }
            }
        }
    }
    fs::write(dir.join("curves.csv"), curves)?;

    let mut failures = format!("{FAILURES_HEADER}\n");
    for f in &report.failures {
        failures += &format!(
            "{name},{},{},{},{}\n",
            csv_field(&f.config),
            f.seed,
            f.epoch,
            csv_field(&f.error)
        );
    }
    fs::write(dir.join("failures.csv"), failures)?;

    let mut models = String::from("config,parameters\n");
    for (config, n) in &report.parameters {
        models += &format!("{},{n}\n", csv_field(config));
    }
    fs::write(dir.join("models.csv"), models)?;
    Ok(())
}
