use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use deeprec::data::{read_ratings_file, write_ratings, Delimiter, SplitSpec};
use deeprec::experiments::{run_ablation, AblationPlan, GridRunner, InProcessRunner};
use deeprec::synth::{generate, SynthConfig};
use deeprec::train::{fit_with, model_seed, METRICS_HEADER};
use deeprec::{
    checkpoint, evaluate, parse_architecture, time_split, Activation, Autoencoder, CheckpointRecord, Error, EvalSet,
    RatingDataset, TrainConfig,
};

mod runner;

use runner::ProcessRunner;

/// Exit status of a run stopped by divergence detection.
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "deeprec", version, about = "Deep autoencoders for rating prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a timestamped rating log into train, test and validation files.
    Split(SplitArgs),
    /// Train a model and write a metrics CSV and the best checkpoint.
    Train(TrainArgs),
    /// Print the RMSE of a checkpoint on a rating file.
    Evaluate(EvaluateArgs),
    /// Write predicted scores for some users as `user,item,score`.
    Predict(PredictArgs),
    /// Run every configuration of an ablation plan.
    Ablate(AblateArgs),
    /// Generate a synthetic timestamped rating log.
    Synth(SynthArgs),
}

#[derive(Args)]
struct SplitArgs {
    /// Ratings as `user,item,rating,timestamp` (`.tsv` for tab-separated).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    train_start: Option<NaiveDate>,
    /// Last training day, inclusive.
    #[arg(long)]
    train_end: NaiveDate,
    /// First evaluation day, inclusive.
    #[arg(long)]
    test_start: NaiveDate,
    #[arg(long)]
    test_end: Option<NaiveDate>,
    /// Share of evaluation-window ratings sent to validation.
    #[arg(long, default_value_t = 0.5)]
    valid_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Receives train.csv, test.csv, valid.csv and manifest.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Validation ratings used for checkpoint selection.
    #[arg(long)]
    eval_data: Option<PathBuf>,
    #[arg(long, default_value = "n,128,n")]
    arch: String,
    #[arg(long, default_value = "selu")]
    activation: Activation,
    /// Decoder reuses the transposed encoder weights.
    #[arg(long)]
    tied: bool,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Dense re-feeding passes per iteration; `--refeed` alone means 1.
    #[arg(long, num_args = 0..=1, default_value_t = 0, default_missing_value = "1")]
    refeed: usize,
    /// Disable coding-layer dropout during re-feed passes.
    #[arg(long)]
    no_refeed_dropout: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for evaluation; results are reproducible only with 1.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 1)]
    eval_every: usize,
    /// Receives best.ckpt (lowest validation RMSE) and last.ckpt.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    /// Clamp predictions to the rating scale when evaluating.
    #[arg(long)]
    clip_predictions: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Ratings to score.
    #[arg(long)]
    data: PathBuf,
    /// Ratings fed to the model as user input; defaults to train.csv next to `--data`.
    #[arg(long)]
    train_data: Option<PathBuf>,
    /// Fail unless the checkpoint was trained with this architecture.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long)]
    tied: bool,
    #[arg(long)]
    clip_predictions: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Ratings fed to the model as user input.
    #[arg(long)]
    train_data: PathBuf,
    /// Comma-separated user tokens; every user of `--train-data` when absent.
    #[arg(long, value_delimiter = ',')]
    users: Vec<String>,
    /// Keep the K best unrated items per user; all items when absent.
    #[arg(long)]
    top_k: Option<usize>,
    /// Defaults to standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Train in this process instead of one child process per run.
    #[arg(long)]
    in_process: bool,
    /// Overrides the plan's worker count.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    users: usize,
    #[arg(long, default_value_t = 500)]
    items: usize,
    #[arg(long, default_value_t = 40.0)]
    ratings_per_user: f64,
    #[arg(long, default_value_t = 8)]
    rank: usize,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value = "2005-01-01")]
    start: NaiveDate,
    #[arg(long, default_value_t = 365)]
    days: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Ablate(a) => ablate(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Diverged { .. }) {
                ExitCode::from(EXIT_DIVERGED)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn write_file(path: &Path, records: &[deeprec::RatingRecord]) -> deeprec::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_ratings(&mut out, records, Delimiter::for_path(path))?;
    out.flush()?;
    Ok(())
}

fn split(a: SplitArgs) -> deeprec::Result<()> {
    let records = read_ratings_file(&a.input)?;
    let spec = SplitSpec {
        train_start: a.train_start,
        train_end: a.train_end,
        test_start: a.test_start,
        test_end: a.test_end,
        valid_fraction: a.valid_fraction,
        seed: a.seed,
    };
    let s = time_split(&records, &spec)?;
    fs::create_dir_all(&a.out_dir)?;
    write_file(&a.out_dir.join("train.csv"), &s.train.to_records())?;
    write_file(&a.out_dir.join("test.csv"), &s.test.to_records(&s.train))?;
    write_file(&a.out_dir.join("valid.csv"), &s.validation.to_records(&s.train))?;
    fs::write(
        a.out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&s.manifest)?,
    )?;
    let m = &s.manifest;
    eprintln!(
        "train {} ratings ({} users, {} items), test {}, validation {}, cold dropped {}, outside windows {}",
        m.train.ratings,
        m.train.users,
        m.train.items,
        m.test.ratings,
        m.validation.ratings,
        m.cold_dropped,
        m.outside_windows
    );
    Ok(())
}

fn load_eval(train: &RatingDataset, path: &Path) -> deeprec::Result<EvalSet> {
    let (set, dropped) = EvalSet::from_records(train, &read_ratings_file(path)?);
    if dropped > 0 {
        eprintln!(
            "{}: skipped {dropped} ratings of unknown users or items",
            path.display()
        );
    }
    Ok(set)
}

fn train(a: TrainArgs) -> deeprec::Result<()> {
    let arch = parse_architecture(&a.arch)?
        .with_activation(a.activation)
        .with_tied(a.tied);
    let train = RatingDataset::from_records(&read_ratings_file(&a.data)?)?;
    let valid = a.eval_data.as_deref().map(|p| load_eval(&train, p)).transpose()?;
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        momentum: a.momentum,
        refeed_count: a.refeed,
        seed: a.seed,
        eval_every: a.eval_every,
        refeed_dropout: !a.no_refeed_dropout,
        clip_predictions: a.clip_predictions,
        threads: a.threads,
        checkpoint_dir: a.checkpoint_dir.clone(),
        ..TrainConfig::default()
    };
    config.validate()?;
    let mut model = Autoencoder::<f32>::new(&arch, train.n_items(), model_seed(a.seed))?;
    eprintln!(
        "{} users, {} items, {} ratings; model {arch} ({}, {} parameters)",
        train.n_users(),
        train.n_items(),
        train.n_ratings(),
        a.activation,
        model.parameter_count()
    );

    let mut metrics: Option<Box<dyn Write + Send>> = match &a.metrics_out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            let mut f = File::create(p)?;
            writeln!(f, "{METRICS_HEADER}")?;
            Some(Box::new(f))
        }
        None => None,
    };
    let mut write_err = None;
    let outcome = fit_with(&mut model, &train, valid.as_ref(), &config, |m| {
        eprintln!(
            "epoch {:>4}  train rmse {:.5}{}",
            m.epoch,
            m.train_rmse,
            m.valid_rmse.map(|v| format!("  valid rmse {v:.5}")).unwrap_or_default()
        );
        if let Some(out) = metrics.as_mut() {
            if let Err(e) = writeln!(out, "{}", m.to_csv_row()).and_then(|_| out.flush()) {
                write_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    if let Some(dir) = &a.checkpoint_dir {
        fs::create_dir_all(dir)?;
        let last = CheckpointRecord {
            epoch: outcome.history.last().map_or(0, |m| m.epoch),
            model: model.clone(),
            velocity: outcome.best.velocity.clone(),
            eval_rmse: outcome
                .history
                .last()
                .and_then(|m| m.valid_rmse)
                .unwrap_or(outcome.best.eval_rmse),
            train_mmse: outcome.history.last().map_or(outcome.best.train_mmse, |m| m.train_mmse),
            item_tokens: train.item_tokens().to_vec(),
        };
        checkpoint::save_checkpoint(&last, &dir.join("last.ckpt"))?;
        if outcome.history.is_empty() {
            checkpoint::save_checkpoint(&outcome.best, &dir.join("best.ckpt"))?;
        }
    }
    println!(
        "best_epoch={} best_rmse={} parameters={}",
        outcome.best.epoch,
        outcome.best.eval_rmse,
        model.parameter_count()
    );
    Ok(())
}

fn load_model(
    path: &Path,
    arch: Option<&str>,
    activation: Option<Activation>,
    tied: bool,
) -> deeprec::Result<CheckpointRecord<f32>> {
    match arch {
        Some(s) => {
            let expected = parse_architecture(s)?
                .with_activation(activation.unwrap_or(Activation::Selu))
                .with_tied(tied);
            checkpoint::load_checkpoint_expecting(path, &expected)
        }
        None => checkpoint::load_checkpoint(path),
    }
}

fn input_dataset(path: &Path, record: &CheckpointRecord<f32>) -> deeprec::Result<RatingDataset> {
    let records = read_ratings_file(path)?;
    if record.item_tokens.is_empty() {
        return Err(Error::InvalidArgument("checkpoint has no item vocabulary".into()));
    }
    RatingDataset::with_items(&records, record.item_tokens.clone())
}

fn evaluate_cmd(a: EvaluateArgs) -> deeprec::Result<()> {
    let record = load_model(&a.checkpoint, a.arch.as_deref(), a.activation, a.tied)?;
    let train_path = match a.train_data {
        Some(p) => p,
        None => a.data.parent().unwrap_or(Path::new(".")).join("train.csv"),
    };
    let train = input_dataset(&train_path, &record)?;
    let set = load_eval(&train, &a.data)?;
    let rmse = evaluate(&record.model, &train, &set, a.clip_predictions)?;
    println!("rmse={rmse}");
    Ok(())
}

fn predict(a: PredictArgs) -> deeprec::Result<()> {
    let record = load_model(&a.checkpoint, None, None, false)?;
    let train = input_dataset(&a.train_data, &record)?;
    let users: Vec<u32> = if a.users.is_empty() {
        (0..train.n_users() as u32).collect()
    } else {
        a.users
            .iter()
            .map(|t| train.user_id(t).ok_or_else(|| Error::UnknownUser(t.clone())))
            .collect::<deeprec::Result<_>>()?
    };
    let mut out: Box<dyn Write> = match &a.output {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    writeln!(out, "user,item,score")?;
    for chunk in users.chunks(256) {
        let input = deeprec::data::densify::<f32>(&train, chunk)?;
        let scores = record.model.predict(input.view())?;
        for (row, &u) in chunk.iter().enumerate() {
            let rated: Vec<bool> = input.row(row).iter().map(|&v| v != 0.0).collect();
            let mut ranked: Vec<(u32, f32)> = scores
                .row(row)
                .iter()
                .enumerate()
                .filter(|(i, _)| a.top_k.is_none() || !rated[*i])
                .map(|(i, &s)| (i as u32, s))
                .collect();
            if let Some(k) = a.top_k {
                ranked.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
                ranked.truncate(k);
            }
            for (item, score) in ranked {
                writeln!(out, "{},{},{score}", train.user_token(u), train.item_token(item))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn ablate(a: AblateArgs) -> deeprec::Result<()> {
    let mut plan = AblationPlan::load(&a.plan)?;
    if let Some(w) = a.workers {
        plan.workers = w;
    }
    let runner: Box<dyn GridRunner> = if a.in_process {
        Box::new(InProcessRunner::new())
    } else {
        Box::new(ProcessRunner::current_exe()?)
    };
    let report = run_ablation(&plan, runner.as_ref())?;
    for f in &report.failures {
        eprintln!("failed: {} seed {}: {}", f.config, f.seed, f.error);
    }
    eprintln!(
        "{} runs finished, {} failed; tables in {}",
        report.summary.len(),
        report.failures.len(),
        plan.output_dir.display()
    );
    Ok(())
}

fn synth(a: SynthArgs) -> deeprec::Result<()> {
    let config = SynthConfig {
        n_users: a.users,
        n_items: a.items,
        ratings_per_user: a.ratings_per_user,
        rank: a.rank,
        noise: a.noise,
        start: a.start,
        days: a.days,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let records = generate(&config)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_file(&a.out, &records)?;
    eprintln!("wrote {} ratings to {}", records.len(), a.out.display());
    Ok(())
}
