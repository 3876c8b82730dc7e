//! Nested cross-validation of penalty learners and report emission.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    assign_folds, generate_synthetic, labels_by_sequence, load_folds, load_labels, load_sequences,
    FoldAssignment, Label, Sequence, SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::features::{catalog_names, extract, quantile, FeatureSet, Standardizer};
use crate::learn::{
    mean_squared_hinge, train_linear, train_mlp, train_mmit, IntervalDataset, MlpArch,
    TrainOptions, TrainReport, TreeHyper,
};
use crate::model::{Family, FittedModel, Hyperparameters, ModelSpec, Parameters};
use crate::penaltypath::{
    default_k_max, error_function, read_error_function, target_interval, write_error_function,
    ErrorFunction, LabelErrors, TargetInterval,
};
use crate::seed::derive_seed;
use crate::SCHEMA_VERSION;

/// How inner cross-validation ranks hyperparameter candidates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSelection {
    /// Validation label accuracy.
    #[default]
    Accuracy,
    /// Validation mean squared hinge loss.
    HingeLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmitGrid {
    pub max_depth: Vec<usize>,
    pub min_samples_split: Vec<usize>,
    pub margin: Vec<f64>,
}

impl Default for MmitGrid {
    fn default() -> Self {
        Self {
            max_depth: vec![1, 2, 4, 8],
            min_samples_split: vec![2, 8, 32],
            margin: vec![0.0, 1.0, 2.0],
        }
    }
}

impl MmitGrid {
    pub fn candidates(&self) -> Vec<TreeHyper> {
        let mut out = Vec::new();
        for &max_depth in &self.max_depth {
            for &min_samples_split in &self.min_samples_split {
                for &margin in &self.margin {
                    out.push(TreeHyper {
                        max_depth,
                        min_samples_split,
                        margin,
                    });
                }
            }
        }
        out
    }
}

/// Everything that defines a cross-validation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub sequences: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Fixed fold assignment; drawn from `seed` when absent.
    pub folds_file: Option<PathBuf>,
    /// Used instead of `sequences` and `labels` when present.
    pub synthetic: Option<SyntheticConfig>,
    pub models: Vec<ModelSpec>,
    pub folds: usize,
    pub inner_folds: usize,
    pub seed: u64,
    /// Segment cap per sequence; `min(N, 25)` when absent.
    pub k_max: Option<usize>,
    pub optimizer: TrainOptions,
    pub mlp_grid: Vec<MlpArch>,
    pub mmit_grid: MmitGrid,
    /// Candidate L1 strengths for `linear.full`; on equal scores the earlier entry wins.
    pub l1_grid: Vec<f64>,
    pub inner_selection: InnerSelection,
    /// Worker threads; all available cores when absent.
    pub threads: Option<usize>,
    /// Write wall-clock seconds to the results instead of `NA`.
    pub record_timing: bool,
    /// Directory of cached error functions, one `<sequenceID>.csv` each.
    pub errfun_cache: Option<PathBuf>,
    /// Keep per-iteration losses in the training reports.
    pub keep_loss_traces: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            sequences: None,
            labels: None,
            folds_file: None,
            synthetic: None,
            models: ModelSpec::all(),
            folds: 6,
            inner_folds: 2,
            seed: 1,
            k_max: None,
            optimizer: TrainOptions::default(),
            mlp_grid: MlpArch::grid(),
            mmit_grid: MmitGrid::default(),
            l1_grid: vec![10.0, 1.0, 0.1, 0.01, 0.001],
            inner_selection: InnerSelection::Accuracy,
            threads: None,
            record_timing: false,
            errfun_cache: None,
            keep_loss_traces: false,
        }
    }
}

impl ExperimentConfig {
    /// Read a JSON config; relative paths are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            for p in [
                &mut config.sequences,
                &mut config.labels,
                &mut config.folds_file,
                &mut config.errfun_cache,
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models requested".into()));
        }
        let mut seen = self.models.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.models.len() {
            return Err(Error::Config("model list contains duplicates".into()));
        }
        if self.folds < 2 || self.inner_folds < 2 {
            return Err(Error::Config(
                "folds and inner_folds must be at least 2".into(),
            ));
        }
        if self.k_max == Some(0) {
            return Err(Error::Config("k_max must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        self.optimizer.validate()?;
        for arch in &self.mlp_grid {
            arch.validate()?;
        }
        if self.mlp_grid.is_empty()
            || self.mmit_grid.candidates().is_empty()
            || self.l1_grid.is_empty()
        {
            return Err(Error::Config(
                "hyperparameter grids must be non-empty".into(),
            ));
        }
        if self.l1_grid.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::Config(
                "l1_grid entries must be finite and >= 0".into(),
            ));
        }
        if self
            .mmit_grid
            .candidates()
            .iter()
            .any(|h| h.margin.is_nan() || h.margin < 0.0 || h.max_depth == 0)
        {
            return Err(Error::Config(
                "mmit_grid needs max_depth >= 1 and margin >= 0".into(),
            ));
        }
        match (&self.synthetic, &self.sequences, &self.labels) {
            (Some(_), None, None) | (None, Some(_), Some(_)) => Ok(()),
            (Some(_), _, _) => Err(Error::Config(
                "give either a synthetic section or sequences and labels, not both".into(),
            )),
            _ => Err(Error::Config(
                "config needs either sequences and labels or a synthetic section".into(),
            )),
        }
    }

    /// Load or generate the labeled corpus the config describes.
    pub fn load_data(&self) -> Result<(Vec<Sequence>, Vec<Label>)> {
        if let Some(synthetic) = &self.synthetic {
            let corpus = generate_synthetic(synthetic, self.seed)?;
            return Ok((corpus.sequences, corpus.labels));
        }
        let (Some(seq_path), Some(label_path)) = (&self.sequences, &self.labels) else {
            return Err(Error::Config(
                "sequences and labels paths are required".into(),
            ));
        };
        let sequences = load_sequences(seq_path)?;
        let labels = load_labels(label_path, &sequences)?;
        Ok((sequences, labels))
    }
}

/// A labeled sequence reduced to what learning and scoring need.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub length: usize,
    /// Full feature catalog, see [`crate::features::catalog_names`].
    pub catalog: Vec<f64>,
    pub errfun: ErrorFunction,
    pub target: TargetInterval,
}

impl Example {
    pub fn new(id: impl Into<String>, values: &[f64], errfun: ErrorFunction) -> Self {
        let target = target_interval(&errfun);
        Self {
            id: id.into(),
            length: values.len(),
            catalog: extract(values),
            errfun,
            target,
        }
    }
}

/// Build one example per labeled sequence; unlabeled sequences are skipped.
///
/// With a cache directory, an existing `<id>.csv` is read instead of being
/// recomputed and missing ones are written.
pub fn prepare_examples(
    sequences: &[Sequence],
    labels: &[Label],
    k_max: Option<usize>,
    cache: Option<&Path>,
) -> Result<Vec<Example>> {
    let grouped = labels_by_sequence(labels);
    if let Some(dir) = cache {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let unlabeled = sequences
        .iter()
        .filter(|s| !grouped.contains_key(s.id()))
        .count();
    if unlabeled > 0 {
        warn!("skipping {unlabeled} sequences without labels");
    }
    sequences
        .par_iter()
        .filter_map(|seq| grouped.get(seq.id()).map(|l| (seq, l)))
        .map(|(seq, seq_labels)| {
            let k = k_max
                .unwrap_or_else(|| default_k_max(seq.len()))
                .min(seq.len());
            let errfun = match cache.map(|d| d.join(format!("{}.csv", seq.id()))) {
                Some(path) if path.exists() => read_error_function(&path)?,
                Some(path) => {
                    let e = error_function(seq, seq_labels, k)?;
                    write_error_function(&path, &e)?;
                    e
                }
                None => error_function(seq, seq_labels, k)?,
            };
            Ok(Example::new(seq.id(), seq.values(), errfun))
        })
        .collect()
}

/// Label accuracy of a set of predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub percent: f64,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub labels: usize,
}

fn accuracy_from(errors: LabelErrors, labels: usize) -> Result<Accuracy> {
    if labels == 0 {
        return Err(Error::NoLabels);
    }
    Ok(Accuracy {
        percent: 100.0 * (labels - errors.total()) as f64 / labels as f64,
        false_positives: errors.false_positives,
        false_negatives: errors.false_negatives,
        labels,
    })
}

/// Sum label errors at each predicted log-penalty.
pub fn accuracy(
    predictions: &BTreeMap<String, f64>,
    error_functions: &BTreeMap<String, ErrorFunction>,
) -> Result<Accuracy> {
    let mut errors = LabelErrors::default();
    let mut labels = 0;
    for (id, &pred) in predictions {
        let err = error_functions
            .get(id)
            .ok_or_else(|| Error::UnknownSequence(id.clone()))?;
        errors += err.errors_at(pred);
        labels += err.label_count();
    }
    accuracy_from(errors, labels)
}

/// Accuracy of `model` on prepared examples.
pub fn score_examples(model: &FittedModel, examples: &[&Example]) -> Result<Accuracy> {
    let mut errors = LabelErrors::default();
    let mut labels = 0;
    for ex in examples {
        let (pred, _) = model.predict_catalog(&ex.catalog, ex.length)?;
        errors += ex.errfun.errors_at(pred);
        labels += ex.errfun.label_count();
    }
    accuracy_from(errors, labels)
}

/// Fit the feature mask and standardizer for `set` on `train` and build the dataset.
fn training_data(set: FeatureSet, train: &[&Example]) -> Result<(IntervalDataset, Standardizer)> {
    let all = catalog_names();
    let indices = crate::features::catalog_indices(&set.names())?;
    let kept: Vec<usize> = indices
        .into_iter()
        .filter(|&j| train.iter().all(|ex| ex.catalog[j].is_finite()))
        .collect();
    if kept.is_empty() {
        return Err(Error::Pipeline(format!(
            "feature set {} has no column that is finite on every training row",
            set.suffix()
        )));
    }
    let raw: Vec<Vec<f64>> = train
        .iter()
        .map(|ex| kept.iter().map(|&j| ex.catalog[j]).collect())
        .collect();
    let standardizer = Standardizer::fit(&raw);
    let rows = standardizer.apply(&raw);
    let names = kept.iter().map(|&j| all[j].clone()).collect();
    let targets = train.iter().map(|ex| ex.target).collect();
    Ok((IntervalDataset::new(&rows, targets, names)?, standardizer))
}

/// Train one model with fixed hyperparameters.
pub fn fit_model(
    spec: ModelSpec,
    hyper: Hyperparameters,
    train: &[&Example],
    options: &TrainOptions,
    seed: u64,
) -> Result<(FittedModel, Option<TrainReport>)> {
    if train.is_empty() {
        return Err(Error::Pipeline("cannot train on an empty set".into()));
    }
    let mut model = FittedModel {
        model_type: spec,
        feature_names: Vec::new(),
        standardizer: Standardizer {
            mean: Vec::new(),
            sd: Vec::new(),
        },
        parameters: Parameters::Bic,
        hyperparameters: hyper,
        seed,
        margin: options.margin,
        schema_version: SCHEMA_VERSION,
    };
    if spec.family == Family::Bic {
        return Ok((model, None));
    }
    let (data, standardizer) = training_data(spec.features, train)?;
    model.feature_names = data.feature_names.clone();
    model.standardizer = standardizer;
    let report = match (spec.family, hyper) {
        (Family::Linear, Hyperparameters::L1 { strength }) => {
            let (m, report) = train_linear(&data, strength, options)?;
            model.parameters = Parameters::Linear(m);
            Some(report)
        }
        (Family::Mmit, Hyperparameters::Tree(h)) => {
            model.parameters = Parameters::Tree(train_mmit(&data, h)?);
            model.margin = h.margin;
            None
        }
        (Family::Mlp, Hyperparameters::Mlp(arch)) => {
            let (m, report) = train_mlp(&data, arch, options, seed)?;
            model.parameters = Parameters::Mlp(m);
            Some(report)
        }
        (family, hyper) => {
            return Err(Error::Config(format!(
                "hyperparameters `{hyper}` do not apply to {}",
                family.name()
            )))
        }
    };
    Ok((model, report))
}

/// Validation score of one candidate; higher is better.
fn validation_score(
    model: &FittedModel,
    validation: &[&Example],
    selection: InnerSelection,
    margin: f64,
) -> Result<f64> {
    match selection {
        InnerSelection::Accuracy => Ok(score_examples(model, validation)?.percent),
        InnerSelection::HingeLoss => {
            let mut preds = Vec::with_capacity(validation.len());
            for ex in validation {
                preds.push(model.predict_catalog(&ex.catalog, ex.length)?.0);
            }
            let targets: Vec<TargetInterval> = validation.iter().map(|ex| ex.target).collect();
            Ok(-mean_squared_hinge(&preds, &targets, margin))
        }
    }
}

/// Outcome of inner cross-validation over a candidate list.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub chosen: Hyperparameters,
    /// Mean validation score of every candidate, in candidate order.
    pub scores: Vec<f64>,
    /// Training reports of every inner fit, candidate-major.
    pub reports: Vec<TrainReport>,
}

/// Pick the candidate with the best mean validation score over inner folds.
///
/// Ties go to the earliest candidate, so callers list simpler candidates first.
pub fn select_hyperparameters(
    spec: ModelSpec,
    candidates: &[Hyperparameters],
    train: &[&Example],
    inner: &FoldAssignment,
    options: &TrainOptions,
    selection: InnerSelection,
    seed: u64,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::Config("no hyperparameter candidates".into()));
    }
    let k = inner.k();
    let splits: Vec<(Vec<&Example>, Vec<&Example>)> = (1..=k)
        .map(|fold| {
            train
                .iter()
                .copied()
                .partition(|ex| inner.fold_of(&ex.id) != Some(fold))
        })
        .collect();
    let tasks: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|c| (0..k).map(move |f| (c, f)))
        .collect();
    let outcomes: Vec<(f64, Option<TrainReport>)> = tasks
        .par_iter()
        .map(|&(c, f)| {
            let (fit, validation) = &splits[f];
            let task_seed = derive_seed(seed, &[c as u64, f as u64]);
            let (model, report) = fit_model(spec, candidates[c], fit, options, task_seed)?;
            let score = validation_score(&model, validation, selection, options.margin)?;
            Ok((score, report))
        })
        .collect::<Result<_>>()?;

    let mut scores = Vec::with_capacity(candidates.len());
    let mut reports = Vec::new();
    let mut best = 0;
    for (c, chunk) in outcomes.chunks(k).enumerate() {
        let mean = chunk.iter().map(|(s, _)| s).sum::<f64>() / k as f64;
        reports.extend(chunk.iter().filter_map(|(_, r)| r.clone()));
        if mean > scores.get(best).copied().unwrap_or(f64::NEG_INFINITY) {
            best = c;
        }
        scores.push(mean);
    }
    Ok(Selection {
        chosen: candidates[best],
        scores,
        reports,
    })
}

/// Choose an MLP architecture by inner cross-validation accuracy.
pub fn select_mlp_config(
    spec: ModelSpec,
    grid: &[MlpArch],
    train: &[&Example],
    inner: &FoldAssignment,
    options: &TrainOptions,
    seed: u64,
) -> Result<(MlpArch, Selection)> {
    let candidates: Vec<Hyperparameters> = grid.iter().map(|&a| Hyperparameters::Mlp(a)).collect();
    let selection = select_hyperparameters(
        spec,
        &candidates,
        train,
        inner,
        options,
        InnerSelection::Accuracy,
        seed,
    )?;
    let Hyperparameters::Mlp(arch) = selection.chosen else {
        unreachable!("MLP candidates only")
    };
    Ok((arch, selection))
}

/// Accuracy and diagnostics of one model on one outer fold.
#[derive(Debug, Clone, PartialEq)]
pub struct CVResult {
    pub model: ModelSpec,
    pub fold: usize,
    /// Test accuracy, or the message of the failure that prevented it.
    pub outcome: std::result::Result<Accuracy, String>,
    pub chosen_config: String,
    /// Wall-clock seconds, present when timing was requested.
    pub seconds: Option<f64>,
    /// Every gradient-trained fit behind this row, inner fits first.
    pub training: Vec<TrainReport>,
}

impl CVResult {
    pub fn accuracy(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|a| a.percent)
    }
}

fn candidates_for(spec: ModelSpec, config: &ExperimentConfig) -> Vec<Hyperparameters> {
    match spec.family {
        Family::Bic => vec![Hyperparameters::None],
        Family::Linear if spec.features == FeatureSet::Full => config
            .l1_grid
            .iter()
            .map(|&strength| Hyperparameters::L1 { strength })
            .collect(),
        Family::Linear => vec![Hyperparameters::L1 { strength: 0.0 }],
        Family::Mmit => config
            .mmit_grid
            .candidates()
            .into_iter()
            .map(Hyperparameters::Tree)
            .collect(),
        Family::Mlp => config
            .mlp_grid
            .iter()
            .map(|&a| Hyperparameters::Mlp(a))
            .collect(),
    }
}

fn model_code(spec: ModelSpec) -> u64 {
    ModelSpec::all()
        .iter()
        .position(|&m| m == spec)
        .expect("every model is in the catalog") as u64
}

/// Fit model `spec` on `train`, running inner selection when it has several candidates.
///
/// `fold` only feeds the seeds, so every outer fold draws its own inner split.
/// Returns the model and every gradient-trained fit behind it, inner fits first.
pub fn train_selected(
    spec: ModelSpec,
    train: &[&Example],
    config: &ExperimentConfig,
    fold: usize,
) -> Result<(FittedModel, Vec<TrainReport>)> {
    let task_seed = derive_seed(config.seed, &[model_code(spec), fold as u64]);
    let candidates = candidates_for(spec, config);
    let mut reports = Vec::new();
    let chosen = if candidates.len() == 1 {
        candidates[0]
    } else {
        let ids: Vec<&str> = train.iter().map(|ex| ex.id.as_str()).collect();
        let inner = assign_folds(
            &ids,
            config.inner_folds,
            derive_seed(config.seed, &[fold as u64]),
        )?;
        let selection = select_hyperparameters(
            spec,
            &candidates,
            train,
            &inner,
            &config.optimizer,
            config.inner_selection,
            task_seed,
        )?;
        reports = selection.reports;
        selection.chosen
    };
    let final_seed = derive_seed(task_seed, &[u64::MAX]);
    let (model, report) = fit_model(spec, chosen, train, &config.optimizer, final_seed)?;
    reports.extend(report);
    Ok((model, reports))
}

fn run_task(
    spec: ModelSpec,
    fold: usize,
    train: &[&Example],
    test: &[&Example],
    config: &ExperimentConfig,
) -> Result<(Accuracy, String, Vec<TrainReport>)> {
    let (model, reports) = train_selected(spec, train, config, fold)?;
    let score = score_examples(&model, test)?;
    Ok((score, model.hyperparameters.to_string(), reports))
}

/// Outer cross-validation over prepared examples.
///
/// Rows come back model-major in `config.models` order, then by fold; a
/// failing model is recorded in its row without stopping the others.
pub fn run_cv_examples(
    examples: &[Example],
    folds: &FoldAssignment,
    config: &ExperimentConfig,
) -> Result<Vec<CVResult>> {
    config.validate()?;
    for ex in examples {
        if folds.fold_of(&ex.id).is_none() {
            return Err(Error::Config(format!("sequence {} has no fold", ex.id)));
        }
    }
    let tasks: Vec<(ModelSpec, usize)> = config
        .models
        .iter()
        .flat_map(|&m| (1..=folds.k()).map(move |f| (m, f)))
        .collect();
    let results = tasks
        .par_iter()
        .map(|&(spec, fold)| {
            let start = Instant::now();
            let (train, test): (Vec<&Example>, Vec<&Example>) = examples
                .iter()
                .partition(|ex| folds.fold_of(&ex.id) != Some(fold));
            let outcome = if test.is_empty() {
                Err(Error::Pipeline(format!(
                    "fold {fold} has no test sequences"
                )))
            } else {
                run_task(spec, fold, &train, &test, config)
            };
            let seconds = start.elapsed().as_secs_f64();
            let (outcome, chosen_config, mut training) = match outcome {
                Ok((score, chosen, reports)) => {
                    info!(
                        "{spec} fold {fold}: accuracy {:.2}% ({chosen})",
                        score.percent
                    );
                    (Ok(score), chosen, reports)
                }
                Err(e) => {
                    warn!("{spec} fold {fold} failed: {e}");
                    (Err(e.to_string()), String::new(), Vec::new())
                }
            };
            if !config.keep_loss_traces {
                training.iter_mut().for_each(|r| r.losses = Vec::new());
            }
            CVResult {
                model: spec,
                fold,
                outcome,
                chosen_config,
                seconds: config.record_timing.then_some(seconds),
                training,
            }
        })
        .collect();
    Ok(results)
}

/// Load data, compute error functions, assign folds and run the experiment.
pub fn run_cv(config: &ExperimentConfig) -> Result<Vec<CVResult>> {
    config.validate()?;
    let run = || -> Result<Vec<CVResult>> {
        let (sequences, labels) = config.load_data()?;
        let examples = prepare_examples(
            &sequences,
            &labels,
            config.k_max,
            config.errfun_cache.as_deref(),
        )?;
        if examples.is_empty() {
            return Err(Error::NoLabels);
        }
        let folds = match &config.folds_file {
            Some(path) => load_folds(path)?,
            None => {
                let ids: Vec<&str> = examples.iter().map(|ex| ex.id.as_str()).collect();
                assign_folds(&ids, config.folds, config.seed)?
            }
        };
        info!(
            "{} labeled sequences, {} folds, {} models",
            examples.len(),
            folds.k(),
            config.models.len()
        );
        run_cv_examples(&examples, &folds, config)
    };
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run),
        None => run(),
    }
}

const RESULT_COLUMNS: [&str; 8] = [
    "model",
    "fold",
    "accuracy",
    "fp",
    "fn",
    "labels",
    "chosen_config",
    "seconds",
];

/// Write `model,fold,accuracy,fp,fn,labels,chosen_config,seconds`.
///
/// A failed row leaves the numeric columns empty and puts the message in
/// `chosen_config` as `error=<message>`.
pub fn write_results(path: impl AsRef<Path>, results: &[CVResult]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULT_COLUMNS)?;
    for r in results {
        let seconds = r
            .seconds
            .map_or_else(|| "NA".to_string(), |s| format!("{s:.3}"));
        let (numbers, chosen) = match &r.outcome {
            Ok(a) => (
                [
                    a.percent.to_string(),
                    a.false_positives.to_string(),
                    a.false_negatives.to_string(),
                    a.labels.to_string(),
                ],
                r.chosen_config.clone(),
            ),
            Err(msg) => (Default::default(), format!("error={msg}")),
        };
        let mut record = vec![r.model.to_string(), r.fold.to_string()];
        record.extend(numbers);
        record.push(chosen);
        record.push(seconds);
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a results file written by [`write_results`]; training reports are not stored.
pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<CVResult>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    for column in RESULT_COLUMNS {
        if !headers.iter().any(|h| h == column) {
            return Err(Error::MissingColumn {
                path: path.to_path_buf(),
                column: column.to_string(),
            });
        }
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .expect("checked above")
    };
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let bad = |message: String| Error::Format {
            path: path.to_path_buf(),
            row,
            message,
        };
        let field = |name: &str| record.get(col(name)).unwrap_or("");
        let model = ModelSpec::parse(field("model")).map_err(|e| bad(e.to_string()))?;
        let fold: usize = field("fold").parse().map_err(|_| bad("bad fold".into()))?;
        let chosen = field("chosen_config").to_string();
        let outcome = if field("accuracy").is_empty() {
            Err(chosen.strip_prefix("error=").unwrap_or(&chosen).to_string())
        } else {
            let int = |name: &str| -> Result<usize> {
                field(name).parse().map_err(|_| bad(format!("bad {name}")))
            };
            Ok(Accuracy {
                percent: field("accuracy")
                    .parse()
                    .map_err(|_| bad("bad accuracy".into()))?,
                false_positives: int("fp")?,
                false_negatives: int("fn")?,
                labels: int("labels")?,
            })
        };
        let seconds = match field("seconds") {
            "NA" | "" => None,
            s => Some(s.parse().map_err(|_| bad("bad seconds".into()))?),
        };
        out.push(CVResult {
            model,
            fold,
            chosen_config: if outcome.is_ok() {
                chosen
            } else {
                String::new()
            },
            outcome,
            seconds,
            training: Vec::new(),
        });
    }
    Ok(out)
}

/// Median and quartiles of one model's fold accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub median: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
}

/// Per-model accuracy quartiles, in order of first appearance; failed folds are left out.
pub fn report(results: &[CVResult]) -> Vec<SummaryRow> {
    let mut order: Vec<ModelSpec> = Vec::new();
    let mut accs: BTreeMap<ModelSpec, Vec<f64>> = BTreeMap::new();
    for r in results {
        if !order.contains(&r.model) {
            order.push(r.model);
        }
        let entry = accs.entry(r.model).or_default();
        match r.accuracy() {
            Some(a) => entry.push(a),
            None => warn!(
                "{} fold {} failed and is left out of the summary",
                r.model, r.fold
            ),
        }
    }
    order
        .into_iter()
        .map(|m| {
            let mut v = accs.remove(&m).unwrap_or_default();
            v.sort_by(f64::total_cmp);
            let q = |p: f64| (!v.is_empty()).then(|| quantile(&v, p));
            SummaryRow {
                model: m.to_string(),
                median: q(0.5),
                q25: q(0.25),
                q75: q(0.75),
            }
        })
        .collect()
}

/// Write `model,median,q25,q75`; models without a successful fold get `NA`.
pub fn write_summary(path: impl AsRef<Path>, summary: &[SummaryRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "median", "q25", "q75"])?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    for row in summary {
        w.write_record([
            row.model.clone(),
            fmt(row.median),
            fmt(row.q25),
            fmt(row.q75),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
