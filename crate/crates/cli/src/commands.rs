use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde_json::{json, Value};

use ncae::data::{load_ratings, split, InteractionMatrix};
use ncae::eval::{write_per_user, write_reports, EvalReport, Metric};
use ncae::model::predict_dense;
use ncae::pipeline::{self, Prepared};
use ncae::pretrain::Stage;
use ncae::{Checkpoint, Error, Mode, ModelParams, Orientation};

use crate::options::{DataArgs, ModeArg, SplitArgs, TrainArgs, DEFAULT_CUTOFFS};
use crate::UsageError;

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub options: TrainArgs,
    /// Where to write the checkpoint.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Target {
    Valid,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MetricArg {
    Rmse,
    Hr,
    Ndcg,
}

#[derive(Debug, Args)]
pub struct EvaluateCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub on: Target,
    /// Restrict the report to these metrics.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub metric: Option<Vec<MetricArg>>,
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<usize>>,
    /// Summary TSV path; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Per-user TSV path.
    #[arg(long)]
    pub per_user: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct RecommendCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// User id as written in the ratings file.
    #[arg(long)]
    pub user: String,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

#[derive(Debug, Args)]
pub struct SplitCmd {
    #[command(flatten)]
    pub data: DataArgs,
    /// Only picks the default protocol.
    #[arg(long, value_enum, default_value = "explicit")]
    pub mode: ModeArg,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Directory for train.tsv, valid.tsv and test.tsv.
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// One JSON object per line on stdout.
struct Log {
    out: BufWriter<io::Stdout>,
}

impl Log {
    fn new() -> Self {
        Log {
            out: BufWriter::new(io::stdout()),
        }
    }

    fn emit(&mut self, record: Value) -> Result<()> {
        serde_json::to_writer(&mut self.out, &record)?;
        writeln!(self.out)?;
        self.out.flush()?;
        Ok(())
    }
}

fn metric_name(r: &EvalReport) -> String {
    match r.cutoff {
        Some(m) => format!("{}@{}", r.metric, m),
        None => r.metric.to_string(),
    }
}

fn metrics_object(reports: &[EvalReport]) -> Value {
    Value::Object(reports.iter().map(|r| (metric_name(r), json!(r.value))).collect())
}

fn ensure_parent(path: &Path) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        return Err(UsageError(format!("output directory {} does not exist", parent.display())).into());
    }
    Ok(())
}

fn load(data: &DataArgs) -> Result<InteractionMatrix> {
    load_ratings(&data.data, data.delimiter).with_context(|| format!("loading {}", data.data.display()))
}

pub fn train(cmd: &TrainCmd) -> Result<()> {
    let run = cmd.options.resolve()?;
    ensure_parent(&cmd.out)?;
    if !cmd.data.data.is_file() {
        return Err(UsageError(format!("data file {} not found", cmd.data.data.display())).into());
    }
    let raw = load(&cmd.data)?;
    let prepared = pipeline::prepare(&raw, &run.train, &run.split)?;
    let config = &run.train;
    let mut log = Log::new();
    log.emit(json!({
        "event": "data",
        "users": raw.num_users(),
        "items": raw.num_items(),
        "ratings": raw.nnz(),
        "train": prepared.split.train.nnz(),
        "valid": prepared.split.valid.nnz(),
        "test": prepared.split.test.nnz(),
        "excluded_users": prepared.split.excluded_users,
        "synthetic_users": prepared.synthetic_users,
    }))?;

    let has_valid = !prepared.split.valid.is_empty();
    let params = pipeline::train(&prepared, &run.hidden, config, &run.plan, &mut |record, params| {
        let mut line = json!({ "event": "epoch" });
        if let (Value::Object(map), Value::Object(fields)) = (&mut line, serde_json::to_value(record)?) {
            map.extend(fields);
        }
        if record.stage == Stage::FineTune && has_valid {
            let reports = evaluate_on(params, config.mode, &prepared, &prepared.split.valid, &run.cutoffs)
                .map_err(|e| Error::Eval(e.to_string()))?;
            line["valid"] = metrics_object(&reports);
        }
        log.emit(line).map_err(|e| Error::Io(io::Error::other(e.to_string())))
    })?;

    let ckpt = Checkpoint::new(
        params,
        config.clone(),
        Some(run.split),
        raw.user_ids().to_vec(),
        raw.item_ids().to_vec(),
    );
    ckpt.save(&cmd.out).with_context(|| format!("writing {}", cmd.out.display()))?;
    log.emit(json!({ "event": "checkpoint", "path": cmd.out.display().to_string() }))?;

    for (name, target) in [("valid", &prepared.split.valid), ("test", &prepared.split.test)] {
        if target.is_empty() {
            continue;
        }
        for r in evaluate_on(&ckpt.params, config.mode, &prepared, target, &run.cutoffs)? {
            log.emit(json!({
                "event": "eval",
                "split": name,
                "metric": r.metric,
                "cutoff": r.cutoff,
                "value": r.value,
                "users": r.users_evaluated,
            }))?;
        }
    }
    Ok(())
}

fn evaluate_on(
    params: &ModelParams,
    mode: Mode,
    prepared: &Prepared,
    target: &InteractionMatrix,
    cutoffs: &[usize],
) -> Result<Vec<EvalReport>> {
    Ok(pipeline::evaluate(params, mode, &prepared.split.train, target, cutoffs)?)
}

/// Reloads the data the checkpoint was trained on and rebuilds its split.
fn restore(data: &DataArgs, ckpt: &Checkpoint) -> Result<(InteractionMatrix, Prepared)> {
    let raw = load(data)?;
    if raw.user_ids() != ckpt.user_ids.as_slice() || raw.item_ids() != ckpt.item_ids.as_slice() {
        return Err(Error::Compatibility(format!(
            "{} does not match the data the checkpoint was trained on",
            data.data.display()
        ))
        .into());
    }
    let spec = ckpt
        .split
        .clone()
        .ok_or_else(|| Error::Compatibility("checkpoint has no split description".into()))?;
    let prepared = pipeline::prepare(&raw, &ckpt.config, &spec)?;
    if ckpt.params.num_items() != prepared.num_items() {
        return Err(Error::Compatibility(format!(
            "checkpoint input width {} but data gives {}",
            ckpt.params.num_items(),
            prepared.num_items()
        ))
        .into());
    }
    Ok((raw, prepared))
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("reading {}", path.display()))
}

pub fn evaluate(cmd: &EvaluateCmd) -> Result<()> {
    if cmd.threads == 0 {
        return Err(UsageError("--threads must be at least 1".into()).into());
    }
    if let Some(out) = &cmd.output {
        ensure_parent(out)?;
    }
    if let Some(out) = &cmd.per_user {
        ensure_parent(out)?;
    }
    let ckpt = read_checkpoint(&cmd.checkpoint)?;
    let wanted: Option<Vec<Metric>> = cmd.metric.as_ref().map(|ms| {
        ms.iter()
            .map(|m| match m {
                MetricArg::Rmse => Metric::Rmse,
                MetricArg::Hr => Metric::Hr,
                MetricArg::Ndcg => Metric::Ndcg,
            })
            .collect()
    });
    let ranking_requested = wanted.iter().flatten().any(|m| *m != Metric::Rmse);
    match ckpt.mode {
        Mode::Explicit if ranking_requested || cmd.cutoffs.is_some() => {
            return Err(UsageError("explicit checkpoints are evaluated with RMSE only".into()).into());
        }
        Mode::Implicit if wanted.iter().flatten().any(|m| *m == Metric::Rmse) => {
            return Err(UsageError("implicit checkpoints are evaluated with HR and NDCG".into()).into());
        }
        _ => {}
    }
    let cutoffs = cmd.cutoffs.clone().unwrap_or_else(|| DEFAULT_CUTOFFS.to_vec());
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(UsageError("--cutoffs must be positive".into()).into());
    }

    let (raw, prepared) = restore(&cmd.data, &ckpt)?;
    let target = match cmd.on {
        Target::Valid => &prepared.split.valid,
        Target::Test => &prepared.split.test,
    };
    let mut reports = pipeline::with_threads(cmd.threads, || {
        evaluate_on(&ckpt.params, ckpt.mode, &prepared, target, &cutoffs)
    })??;
    if let Some(wanted) = &wanted {
        reports.retain(|r| wanted.contains(&r.metric));
    }

    match &cmd.output {
        Some(path) => write_reports(File::create(path)?, &reports)?,
        None => write_reports(io::stdout().lock(), &reports)?,
    }
    if let Some(path) = &cmd.per_user {
        // per-user rows are in model-row terms, which are items when item-based
        let ids = match ckpt.orientation {
            Orientation::User => raw.user_ids(),
            Orientation::Item => raw.item_ids(),
        };
        write_per_user(BufWriter::new(File::create(path)?), &reports, ids)?;
    }
    Ok(())
}

pub fn recommend(cmd: &RecommendCmd) -> Result<()> {
    let ckpt = read_checkpoint(&cmd.checkpoint)?;
    let (raw, prepared) = restore(&cmd.data, &ckpt)?;
    let user = raw.user_index(&cmd.user).ok_or_else(|| Error::Lookup {
        kind: "user",
        id: cmd.user.clone(),
    })?;
    let train = &prepared.split.train;
    let (scores, seen): (Vec<f64>, Vec<usize>) = match ckpt.orientation {
        Orientation::User => (
            predict_dense(&ckpt.params, &train.row_vector(user), ckpt.mode)?,
            train.row(user).iter().map(|o| o.item).collect(),
        ),
        Orientation::Item => {
            // each item's reconstructed row holds its score for every user
            let mut scores = Vec::with_capacity(train.num_users());
            let mut seen = Vec::new();
            for item in 0..train.num_users() {
                if train.get(item, user).is_some() {
                    seen.push(item);
                }
                scores.push(predict_dense(&ckpt.params, &train.row_vector(item), ckpt.mode)?[user]);
            }
            (scores, seen)
        }
    };
    let ranked = ncae::eval::rank_items(&scores, &seen);
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "rank\titem\tscore")?;
    for (pos, &j) in ranked.iter().take(cmd.top).enumerate() {
        writeln!(out, "{}\t{}\t{}", pos + 1, raw.item_ids()[j], scores[j])?;
    }
    Ok(())
}

pub fn split_data(cmd: &SplitCmd) -> Result<()> {
    let mode = match cmd.mode {
        ModeArg::Explicit => Mode::Explicit,
        ModeArg::Implicit => Mode::Implicit,
    };
    let spec = cmd.split.resolve(mode, 0)?;
    if !cmd.out_dir.is_dir() {
        return Err(UsageError(format!("{} is not a directory", cmd.out_dir.display())).into());
    }
    let raw = load(&cmd.data)?;
    let parts = split(&raw, &spec)?;
    let mut log = Log::new();
    for (name, part) in [("train", &parts.train), ("valid", &parts.valid), ("test", &parts.test)] {
        let path = cmd.out_dir.join(format!("{}.tsv", name));
        part.write_delimited(&path, cmd.data.delimiter)
            .with_context(|| format!("writing {}", path.display()))?;
        log.emit(json!({ "event": "split", "part": name, "ratings": part.nnz(), "path": path.display().to_string() }))?;
    }
    Ok(())
}
