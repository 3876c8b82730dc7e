use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use log::info;

use penlearn::data::{
    assign_folds, generate_synthetic, load_labels, load_sequences, write_folds, write_labels,
    write_sequences, Sequence,
};
use penlearn::features::{catalog_indices, extract, FeatureSet};
use penlearn::harness::{
    prepare_examples, read_results, report, run_cv, train_selected, write_results, write_summary,
    ExperimentConfig,
};
use penlearn::model::{FittedModel, ModelSpec};
use penlearn::penaltypath::{default_k_max, model_selection_path};
use penlearn::segment::{opart, segment_costs};
use penlearn::{Error, SCHEMA_VERSION};

#[derive(Parser)]
#[command(
    name = "penlearn",
    about = "Learn changepoint penalties from labeled sequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum number of segments explored per sequence.
    #[arg(long)]
    kmax: Option<usize>,
}

#[derive(Args)]
struct DataArgs {
    /// CSV with columns sequenceID,position,value.
    #[arg(long)]
    sequences: Option<PathBuf>,
    /// CSV with columns sequenceID,start,end,changes.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal segmentation of every sequence at a fixed penalty.
    Segment {
        #[arg(long)]
        sequences: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        penalty: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Exact model-selection path of every sequence.
    Path {
        #[arg(long)]
        sequences: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Target log-penalty interval of every labeled sequence.
    Targets {
        #[command(flatten)]
        data: DataArgs,
        /// Directory for cached error functions.
        #[arg(long)]
        errfun_cache: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Feature table of every sequence.
    Features {
        #[arg(long)]
        sequences: PathBuf,
        /// Feature set: 1, 2, 4 or full.
        #[arg(long, default_value = "full")]
        set: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train one model on all labeled sequences and save it as JSON.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Model name such as mlp.4 or linear.full.
        #[arg(long)]
        model: String,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Predict log-penalties with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        sequences: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the cross-validation experiment.
    Cv {
        #[command(flatten)]
        data: DataArgs,
        /// Fold assignment CSV with columns sequenceID,fold.
        #[arg(long)]
        folds: Option<PathBuf>,
        /// Use the synthetic generator with default settings.
        #[arg(long, conflicts_with_all = ["sequences", "labels"])]
        synthetic: bool,
        /// Comma-separated model names; all 13 by default.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        /// Summary CSV; `summary.csv` next to the results by default.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Median and quartiles per model from a results file.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic corpus (sequences, labels, folds) to a directory.
    Synth {
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        n_sequences: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

fn config_from(common: &Common) -> penlearn::Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(k) = common.kmax {
        config.k_max = Some(k);
    }
    Ok(config)
}

fn apply_data(config: &mut ExperimentConfig, data: &DataArgs) {
    if data.sequences.is_some() || data.labels.is_some() {
        config.synthetic = None;
    }
    if let Some(p) = &data.sequences {
        config.sequences = Some(p.clone());
    }
    if let Some(p) = &data.labels {
        config.labels = Some(p.clone());
    }
}

fn output(path: Option<&Path>) -> penlearn::Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Error::io(p.to_path_buf(), e))?),
        None => Box::new(std::io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn finish(mut w: csv::Writer<Box<dyn Write>>) -> penlearn::Result<()> {
    w.flush()
        .map_err(|e| Error::io(PathBuf::from("<output>"), e))
}

fn k_max_for(config: &ExperimentConfig, seq: &Sequence) -> usize {
    config
        .k_max
        .unwrap_or_else(|| default_k_max(seq.len()))
        .min(seq.len())
}

fn run(command: Command) -> penlearn::Result<()> {
    match command {
        Command::Segment {
            sequences,
            penalty,
            out,
            ..
        } => {
            let seqs = load_sequences(&sequences)?;
            let segs = seqs
                .iter()
                .map(|s| opart(s.values(), penalty))
                .collect::<penlearn::Result<Vec<_>>>()?;
            let mut w = output(out.as_deref())?;
            w.write_record(["sequenceID", "changepoint_index", "changepoint_position"])?;
            for (seq, seg) in seqs.iter().zip(&segs) {
                for &cp in &seg.changepoints {
                    w.write_record([
                        seq.id().to_string(),
                        cp.to_string(),
                        seq.changepoint_position(cp).to_string(),
                    ])?;
                }
            }
            finish(w)
        }
        Command::Path {
            sequences,
            out,
            common,
        } => {
            let config = config_from(&common)?;
            let seqs = load_sequences(&sequences)?;
            let mut w = output(out.as_deref())?;
            w.write_record([
                "sequenceID",
                "segments",
                "min_lambda",
                "max_lambda",
                "data_cost",
            ])?;
            for seq in &seqs {
                let path =
                    model_selection_path(&segment_costs(seq.values(), k_max_for(&config, seq))?);
                for p in path.pieces() {
                    w.write_record([
                        seq.id().to_string(),
                        p.segments.to_string(),
                        p.lambda_low.to_string(),
                        p.lambda_high.to_string(),
                        p.data_cost.to_string(),
                    ])?;
                }
            }
            finish(w)
        }
        Command::Targets {
            data,
            errfun_cache,
            out,
            common,
        } => {
            let mut config = config_from(&common)?;
            apply_data(&mut config, &data);
            if errfun_cache.is_some() {
                config.errfun_cache = errfun_cache;
            }
            let (seqs, labels) = config.load_data()?;
            let examples =
                prepare_examples(&seqs, &labels, config.k_max, config.errfun_cache.as_deref())?;
            let mut w = output(out.as_deref())?;
            w.write_record(["sequenceID", "min_log_lambda", "max_log_lambda"])?;
            for ex in &examples {
                w.write_record([
                    ex.id.clone(),
                    ex.target.lower.to_string(),
                    ex.target.upper.to_string(),
                ])?;
            }
            finish(w)
        }
        Command::Features {
            sequences,
            set,
            out,
            ..
        } => {
            let set = FeatureSet::parse(&set)?;
            let names = set.names();
            let indices = catalog_indices(&names)?;
            let seqs = load_sequences(&sequences)?;
            let mut w = output(out.as_deref())?;
            w.write_record(std::iter::once("sequenceID".to_string()).chain(names.iter().cloned()))?;
            for seq in &seqs {
                let catalog = extract(seq.values());
                w.write_record(
                    std::iter::once(seq.id().to_string())
                        .chain(indices.iter().map(|&i| catalog[i].to_string())),
                )?;
            }
            finish(w)
        }
        Command::Train {
            data,
            model,
            out,
            common,
        } => {
            let spec = ModelSpec::parse(&model)?;
            let mut config = config_from(&common)?;
            apply_data(&mut config, &data);
            let (seqs, labels) = config.load_data()?;
            let examples =
                prepare_examples(&seqs, &labels, config.k_max, config.errfun_cache.as_deref())?;
            let refs: Vec<_> = examples.iter().collect();
            let (fitted, _) = train_selected(spec, &refs, &config, 0)?;
            info!(
                "trained {spec} ({}) on {} sequences",
                fitted.hyperparameters,
                refs.len()
            );
            fitted.save(&out)
        }
        Command::Predict {
            model,
            sequences,
            out,
            ..
        } => {
            let model = FittedModel::load(&model)?;
            let seqs = load_sequences(&sequences)?;
            let mut w = output(out.as_deref())?;
            w.write_record(["sequenceID", "pred_log_lambda"])?;
            for seq in &seqs {
                let (pred, imputed) = model.predict_values(seq.values())?;
                if imputed {
                    log::warn!(
                        "{}: non-finite features imputed with training means",
                        seq.id()
                    );
                }
                w.write_record([seq.id().to_string(), pred.to_string()])?;
            }
            finish(w)
        }
        Command::Cv {
            data,
            folds,
            synthetic,
            models,
            threads,
            out,
            summary,
            common,
        } => {
            let mut config = config_from(&common)?;
            apply_data(&mut config, &data);
            if synthetic {
                config.synthetic.get_or_insert_with(Default::default);
                config.sequences = None;
                config.labels = None;
            }
            if folds.is_some() {
                config.folds_file = folds;
            }
            if !models.is_empty() {
                config.models = models
                    .iter()
                    .map(|m| ModelSpec::parse(m))
                    .collect::<penlearn::Result<_>>()?;
            }
            if threads.is_some() {
                config.threads = threads;
            }
            let results = run_cv(&config)?;
            write_results(&out, &results)?;
            let summary_path = summary.unwrap_or_else(|| out.with_file_name("summary.csv"));
            write_summary(&summary_path, &report(&results))?;
            info!("wrote {} and {}", out.display(), summary_path.display());
            Ok(())
        }
        Command::Report { results, out } => {
            let rows = read_results(&results)?;
            if rows.is_empty() {
                return Err(Error::Config(format!(
                    "{} has no result rows",
                    results.display()
                )));
            }
            let summary = report(&rows);
            match out {
                Some(path) => write_summary(path, &summary),
                None => {
                    let mut w = output(None)?;
                    w.write_record(["model", "median", "q25", "q75"])?;
                    let fmt =
                        |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
                    for row in &summary {
                        w.write_record([
                            row.model.clone(),
                            fmt(row.median),
                            fmt(row.q25),
                            fmt(row.q75),
                        ])?;
                    }
                    finish(w)
                }
            }
        }
        Command::Synth {
            out,
            n_sequences,
            common,
        } => {
            let config = config_from(&common)?;
            let mut synthetic = config.synthetic.clone().unwrap_or_default();
            if let Some(n) = n_sequences {
                synthetic.n_sequences = n;
            }
            let corpus = generate_synthetic(&synthetic, config.seed)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(out.clone(), e))?;
            write_sequences(out.join("sequences.csv"), &corpus.sequences)?;
            write_labels(out.join("labels.csv"), &corpus.labels)?;
            let ids: Vec<&str> = corpus.sequences.iter().map(|s| s.id()).collect();
            let folds = assign_folds(&ids, config.folds, config.seed)?;
            write_folds(out.join("folds.csv"), &folds)?;
            // Read back so the written files are checked like any user input.
            let seqs = load_sequences(out.join("sequences.csv"))?;
            load_labels(out.join("labels.csv"), &seqs)?;
            info!("wrote {} sequences to {}", seqs.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let version = format!(
        "{} (config schema {SCHEMA_VERSION})",
        env!("CARGO_PKG_VERSION")
    );
    let matches = match Cli::command()
        .version(&*Box::leak(version.into_boxed_str()))
        .try_get_matches()
    {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
