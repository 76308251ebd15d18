//! Command-line surface: `train`, `eval`, `thresholds`, `report`.
//!
//! Exit status is 0 on success, 1 on runtime errors and 2 on usage errors.
//! Results go to the output stream, diagnostics to the error stream.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use crate::io::checkpoint::{load_checkpoint, save_checkpoint};
use crate::io::config::{load_config, RunConfig};
use crate::io::mlse::read_embeddings;
use crate::metrics::MetricsReport;
use crate::model::{predict_scores, ModelConfig};
use crate::thresholding::{
    apply_thresholds, format_thresholds, parse_thresholds, select_thresholds, ScoredSet,
    ThresholdVector,
};
use crate::trainer::{train_with_observer, EpochRecord, TrainObserver};
use crate::types::EmbeddedDataset;

pub const CHECKPOINT_FILE: &str = "model.mlmc";
pub const THRESHOLDS_FILE: &str = "thresholds.tsv";
pub const LOG_FILE: &str = "train_log.jsonl";

#[derive(Debug, Parser)]
#[command(
    name = "mlfocal",
    version,
    about = "Imbalanced multi-label classification over token-embedding files"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a classifier; several --train/--val files are merged.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "train", required = true, num_args = 1..)]
        train: Vec<PathBuf>,
        #[arg(long = "val", required = true, num_args = 1..)]
        val: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a labeled MLSE file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Threshold file; defaults to thresholds.tsv next to the checkpoint.
        #[arg(long)]
        thresholds: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Select per-class thresholds on a labeled MLSE file.
    Thresholds {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-class F1 table, optionally written as CSV bar-chart data.
    Report {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        thresholds: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// Runs the CLI with the process streams.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_command_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_command_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                0
            } else {
                let _ = write!(err, "{e}");
                2
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> anyhow::Result<()> {
    match command {
        Command::Train {
            config,
            train,
            val,
            out: dir,
        } => cmd_train(config.as_deref(), &train, &val, &dir, out, err),
        Command::Eval {
            model,
            data,
            thresholds,
            json,
        } => cmd_eval(&model, &data, thresholds.as_deref(), json, out),
        Command::Thresholds {
            model,
            data,
            out: path,
        } => cmd_thresholds(&model, &data, &path, out),
        Command::Report {
            model,
            data,
            thresholds,
            csv,
        } => cmd_report(&model, &data, thresholds.as_deref(), csv.as_deref(), out),
    }
}

fn load_merged(paths: &[PathBuf]) -> anyhow::Result<EmbeddedDataset> {
    let parts = paths
        .iter()
        .map(|p| read_embeddings(p).with_context(|| format!("reading {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if parts.len() == 1 {
        return Ok(parts.into_iter().next().expect("one part"));
    }
    let tags: Vec<String> = paths
        .iter()
        .enumerate()
        .map(|(k, p)| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| k.to_string())
        })
        .collect();
    let tags = if tags.iter().collect::<std::collections::HashSet<_>>().len() == tags.len() {
        tags
    } else {
        (0..paths.len()).map(|k| k.to_string()).collect()
    };
    EmbeddedDataset::merge(&parts, Some(&tags)).context("merging datasets")
}

struct JsonLog<'a> {
    file: fs::File,
    err: &'a mut dyn Write,
    failed: Option<std::io::Error>,
}

impl TrainObserver for JsonLog<'_> {
    fn on_epoch(&mut self, record: &EpochRecord) {
        if self.failed.is_none() {
            if let Err(e) = writeln!(self.file, "{}", record.to_json_line()) {
                self.failed = Some(e);
            }
        }
        let _ = writeln!(
            self.err,
            "epoch {:>3}  train_loss {:.5}  val_macro_f1 {:.4}",
            record.epoch, record.train_loss, record.val_macro_f1
        );
    }
}

fn cmd_train(
    config: Option<&Path>,
    train: &[PathBuf],
    val: &[PathBuf],
    dir: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> anyhow::Result<()> {
    let run = match config {
        Some(p) => load_config(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    let train_set = load_merged(train).context("training data")?;
    let val_set = load_merged(val).context("validation data")?;
    if train_set.class_names != val_set.class_names {
        crate::types::check_class_names(&train_set.class_names, &val_set.class_names)
            .context("training and validation class names differ")?;
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let model = ModelConfig {
        cell: run.arch.cell,
        hidden_size: run.arch.hidden_size,
        num_layers: run.arch.num_layers,
        input_dim: train_set.embedding_dim,
        num_classes: train_set.num_classes(),
    };
    let mut log = JsonLog {
        file: fs::File::create(dir.join(LOG_FILE))?,
        err,
        failed: None,
    };
    let trained = train_with_observer(&train_set, &val_set, &model, &run.train, &mut log)?;
    if let Some(e) = log.failed {
        return Err(e).context("writing training log");
    }

    save_checkpoint(&trained.params, dir.join(CHECKPOINT_FILE))?;
    fs::write(
        dir.join(THRESHOLDS_FILE),
        format_thresholds(&trained.class_names, &trained.thresholds)?,
    )?;
    writeln!(
        out,
        "{}",
        serde_json::json!({
            "best_epoch": trained.best_epoch,
            "epochs_run": trained.history.len(),
            "val_macro_f1": trained.best_val_macro_f1(),
            "checkpoint": dir.join(CHECKPOINT_FILE),
        })
    )?;
    Ok(())
}

fn resolve_thresholds(
    model: &Path,
    explicit: Option<&Path>,
    data: &EmbeddedDataset,
) -> anyhow::Result<ThresholdVector> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => model
            .parent()
            .unwrap_or(Path::new("."))
            .join(THRESHOLDS_FILE),
    };
    if !path.exists() {
        bail!(
            "no threshold file at {}; pass --thresholds or create one with the `thresholds` command",
            path.display()
        );
    }
    let (names, tau) = parse_thresholds(&fs::read_to_string(&path)?)
        .with_context(|| format!("reading {}", path.display()))?;
    crate::types::check_class_names(&data.class_names, &names)
        .context("threshold file classes differ from data")?;
    Ok(tau)
}

fn scored(model: &Path, data: &Path) -> anyhow::Result<(EmbeddedDataset, ScoredSet)> {
    let params = load_checkpoint(model)
        .with_context(|| format!("reading checkpoint {}", model.display()))?;
    let data_set = read_embeddings(data).with_context(|| format!("reading {}", data.display()))?;
    if data_set.num_classes() != params.config.num_classes {
        bail!(
            "data has {} classes, model has {}",
            data_set.num_classes(),
            params.config.num_classes
        );
    }
    let scores = predict_scores(&params, &data_set.instances)?;
    let golds = data_set.gold_matrix()?;
    Ok((data_set, ScoredSet::new(scores, golds)?))
}

fn metrics_for(
    model: &Path,
    data: &Path,
    thresholds: Option<&Path>,
) -> anyhow::Result<(EmbeddedDataset, MetricsReport)> {
    let (data_set, set) = scored(model, data)?;
    let tau = resolve_thresholds(model, thresholds, &data_set)?;
    let preds = apply_thresholds(set.scores.view(), &tau)?;
    let report = MetricsReport::compute(preds.view(), set.golds.view())?;
    Ok((data_set, report))
}

fn cmd_eval(
    model: &Path,
    data: &Path,
    thresholds: Option<&Path>,
    json: bool,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    let (data_set, report) = metrics_for(model, data, thresholds)?;
    if json {
        writeln!(
            out,
            "{}",
            serde_json::json!({
                "class_names": data_set.class_names,
                "per_class_f1": report.per_class_f1,
                "macro_f1": report.macro_f1,
                "micro_f1": report.micro_f1,
                "jaccard": report.jaccard,
            })
        )?;
    } else {
        writeln!(out, "macro_f1\t{}", report.macro_f1)?;
        writeln!(out, "micro_f1\t{}", report.micro_f1)?;
        writeln!(out, "jaccard\t{}", report.jaccard)?;
    }
    Ok(())
}

fn cmd_thresholds(
    model: &Path,
    data: &Path,
    path: &Path,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    let (data_set, set) = scored(model, data)?;
    let tau = select_thresholds(&set)?;
    fs::write(path, format_thresholds(&data_set.class_names, &tau)?)?;
    write!(out, "{}", format_thresholds(&data_set.class_names, &tau)?)?;
    Ok(())
}

fn cmd_report(
    model: &Path,
    data: &Path,
    thresholds: Option<&Path>,
    csv: Option<&Path>,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    let (data_set, report) = metrics_for(model, data, thresholds)?;
    let counts = data_set.positive_counts();
    let width = data_set
        .class_names
        .iter()
        .map(String::len)
        .max()
        .unwrap_or(5)
        .max(5);
    writeln!(out, "{:<width$}  {:>9}  {:>6}", "class", "positives", "f1")?;
    let mut rows: Vec<usize> = (0..data_set.num_classes()).collect();
    rows.sort_by(|&a, &b| report.per_class_f1[b].total_cmp(&report.per_class_f1[a]));
    for a in rows {
        writeln!(
            out,
            "{:<width$}  {:>9}  {:>6.4}",
            data_set.class_names[a], counts[a], report.per_class_f1[a]
        )?;
    }
    writeln!(
        out,
        "{:<width$}  {:>9}  {:>6.4}",
        "macro", "", report.macro_f1
    )?;
    if let Some(path) = csv {
        let mut text = String::from("class,positives,f1\n");
        for (a, name) in data_set.class_names.iter().enumerate() {
            text.push_str(&format!(
                "{name},{},{}\n",
                counts[a], report.per_class_f1[a]
            ));
        }
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
