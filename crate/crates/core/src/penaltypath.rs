//! Exact penalty paths, label errors and target intervals of log-penalty.
//!
//! Label membership convention: a changepoint between points `i` and `i + 1`
//! sits at the midpoint of their positions and belongs to a label when
//! `start <= midpoint <= end`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Label, Sequence};
use crate::error::{Error, Result};
use crate::segment::{best_k_segmentation, costs_tied, opart, segment_costs, SegmentCosts};

/// Range of penalties on which one model size is optimal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPiece {
    pub segments: usize,
    pub lambda_low: f64,
    pub lambda_high: f64,
    pub data_cost: f64,
}

/// Optimal model size as a function of the penalty, pieces ordered by increasing penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyPath {
    pieces: Vec<PathPiece>,
}

impl PenaltyPath {
    pub fn pieces(&self) -> &[PathPiece] {
        &self.pieces
    }

    /// Optimal segment count at `lambda`; a breakpoint belongs to the smaller model.
    pub fn segments_at(&self, lambda: f64) -> usize {
        let idx = self.pieces.partition_point(|p| p.lambda_low <= lambda);
        self.pieces[idx.saturating_sub(1)].segments
    }
}

/// Lower convex hull of `(k - 1, C_k)`, walked from the largest penalty downward.
pub fn model_selection_path(costs: &SegmentCosts) -> PenaltyPath {
    let k_max = costs.k_max();
    let mut descending = Vec::new();
    let mut k = 1;
    let mut high = f64::INFINITY;
    loop {
        let mut next: Option<(usize, f64)> = None;
        for candidate in k + 1..=k_max {
            let lambda = (costs.cost(k) - costs.cost(candidate)) / (candidate - k) as f64;
            next = match next {
                Some((_, best)) if lambda < best && !costs_tied(lambda, best) => next,
                _ => Some((candidate, lambda)),
            };
        }
        match next {
            Some((candidate, lambda)) if lambda > 0.0 => {
                descending.push(PathPiece {
                    segments: k,
                    lambda_low: lambda,
                    lambda_high: high,
                    data_cost: costs.cost(k),
                });
                k = candidate;
                high = lambda;
            }
            _ => {
                descending.push(PathPiece {
                    segments: k,
                    lambda_low: 0.0,
                    lambda_high: high,
                    data_cost: costs.cost(k),
                });
                break;
            }
        }
    }
    descending.reverse();
    PenaltyPath { pieces: descending }
}

/// Per-label error totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelErrors {
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl LabelErrors {
    pub fn total(&self) -> usize {
        self.false_positives + self.false_negatives
    }
}

impl std::ops::AddAssign for LabelErrors {
    fn add_assign(&mut self, rhs: Self) {
        self.false_positives += rhs.false_positives;
        self.false_negatives += rhs.false_negatives;
    }
}

/// Count labels with too many (false positive) or too few (false negative) changepoints.
pub fn count_label_errors(changepoint_positions: &[f64], labels: &[Label]) -> LabelErrors {
    let mut errors = LabelErrors::default();
    for label in labels {
        let (lo, hi) = (label.start as f64, label.end as f64);
        let detected = changepoint_positions
            .iter()
            .filter(|&&p| lo <= p && p <= hi)
            .count();
        let expected = label.changes as usize;
        if detected > expected {
            errors.false_positives += 1;
        } else if detected < expected {
            errors.false_negatives += 1;
        }
    }
    errors
}

/// Label errors of the optimal segmentation of `seq` at `penalty`.
pub fn label_errors_at_penalty(
    seq: &Sequence,
    labels: &[Label],
    penalty: f64,
) -> Result<LabelErrors> {
    let seg = opart(seq.values(), penalty)?;
    let positions: Vec<f64> = seg
        .changepoints
        .iter()
        .map(|&i| seq.changepoint_position(i))
        .collect();
    Ok(count_label_errors(&positions, labels))
}

/// One piece of the label-error function, in log-penalty coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPiece {
    pub min_log_lambda: f64,
    pub max_log_lambda: f64,
    pub segments: usize,
    pub errors: LabelErrors,
}

/// Piecewise-constant label errors over all of log-penalty space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorFunction {
    pieces: Vec<ErrorPiece>,
    labels: usize,
    /// The minimum is reached only on the leftmost piece while `k_max < N`,
    /// so larger models might have done better.
    truncated: bool,
}

impl ErrorFunction {
    pub fn new(pieces: Vec<ErrorPiece>, labels: usize, truncated: bool) -> Result<Self> {
        let contiguous = pieces
            .windows(2)
            .all(|w| w[0].max_log_lambda == w[1].min_log_lambda && w[0].segments > w[1].segments);
        let covers = pieces
            .first()
            .is_some_and(|p| p.min_log_lambda == f64::NEG_INFINITY)
            && pieces
                .last()
                .is_some_and(|p| p.max_log_lambda == f64::INFINITY);
        if !(contiguous && covers) {
            return Err(Error::Pipeline(
                "error function pieces must partition the log-penalty axis".into(),
            ));
        }
        if pieces.iter().any(|p| p.errors.total() > labels) {
            return Err(Error::Pipeline("more label errors than labels".into()));
        }
        Ok(Self {
            pieces,
            labels,
            truncated,
        })
    }

    pub fn pieces(&self) -> &[ErrorPiece] {
        &self.pieces
    }

    pub fn label_count(&self) -> usize {
        self.labels
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn min_errors(&self) -> usize {
        self.pieces
            .iter()
            .map(|p| p.errors.total())
            .min()
            .unwrap_or(0)
    }

    /// Errors at `log_lambda`; a piece boundary belongs to the piece on its right.
    pub fn errors_at(&self, log_lambda: f64) -> LabelErrors {
        let idx = self
            .pieces
            .partition_point(|p| p.min_log_lambda <= log_lambda);
        self.pieces[idx.saturating_sub(1)].errors
    }
}

/// Default cap on the number of segments explored for a sequence of length `n`.
pub fn default_k_max(n: usize) -> usize {
    n.min(25)
}

fn interior_penalty(low: f64, high: f64) -> f64 {
    match (low > 0.0, high.is_finite()) {
        (true, true) => (low * high).sqrt(),
        (true, false) => 2.0 * low,
        (false, true) => high / 2.0,
        (false, false) => 1.0,
    }
}

/// Exact label-error function of `seq` over log-penalty, exploring up to `k_max` segments.
pub fn error_function(seq: &Sequence, labels: &[Label], k_max: usize) -> Result<ErrorFunction> {
    let k_max = k_max.min(seq.len());
    let costs = segment_costs(seq.values(), k_max)?;
    let path = model_selection_path(&costs);
    let mut pieces = Vec::with_capacity(path.pieces().len());
    for piece in path.pieces() {
        let penalty = interior_penalty(piece.lambda_low, piece.lambda_high);
        let seg = opart(seq.values(), penalty)?;
        // With k_max < N the unrestricted optimum may need more segments than
        // the path allows; fall back to the best split with exactly k segments.
        let changepoints = if seg.segment_count() == piece.segments {
            seg.changepoints
        } else if k_max < seq.len() {
            best_k_segmentation(seq.values(), piece.segments)?
        } else {
            return Err(Error::Pipeline(format!(
                "sequence `{}`: segmentation at penalty {penalty} has {} segments, path says {}",
                seq.id(),
                seg.segment_count(),
                piece.segments
            )));
        };
        let positions: Vec<f64> = changepoints
            .iter()
            .map(|&i| seq.changepoint_position(i))
            .collect();
        pieces.push(ErrorPiece {
            min_log_lambda: piece.lambda_low.ln(),
            max_log_lambda: piece.lambda_high.ln(),
            segments: piece.segments,
            errors: count_label_errors(&positions, labels),
        });
    }
    let min = pieces.iter().map(|p| p.errors.total()).min().unwrap_or(0);
    let minimal: Vec<usize> = (0..pieces.len())
        .filter(|&i| pieces[i].errors.total() == min)
        .collect();
    let truncated = k_max < seq.len() && minimal == [0];
    ErrorFunction::new(pieces, labels.len(), truncated)
}

/// Interval of log-penalty on which the label-error count is minimal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetInterval {
    pub lower: f64,
    pub upper: f64,
}

/// Which bounds of a target interval are finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Censoring {
    /// Both bounds finite.
    Interval,
    /// Only the upper bound is finite.
    Left,
    /// Only the lower bound is finite.
    Right,
    /// Neither bound is finite.
    Unbounded,
}

impl TargetInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::Domain(format!(
                "target interval needs lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn censoring(&self) -> Censoring {
        match (self.lower.is_finite(), self.upper.is_finite()) {
            (true, true) => Censoring::Interval,
            (false, true) => Censoring::Left,
            (true, false) => Censoring::Right,
            (false, false) => Censoring::Unbounded,
        }
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower < y && y < self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Widest run of consecutive minimal-error pieces; ties go to the leftmost run.
pub fn target_interval(err: &ErrorFunction) -> TargetInterval {
    let min = err.min_errors();
    let mut best: Option<TargetInterval> = None;
    let mut run: Option<TargetInterval> = None;
    let pieces = err.pieces();
    for (i, p) in pieces.iter().enumerate() {
        if p.errors.total() == min {
            run = Some(match run {
                Some(r) => TargetInterval {
                    lower: r.lower,
                    upper: p.max_log_lambda,
                },
                None => TargetInterval {
                    lower: p.min_log_lambda,
                    upper: p.max_log_lambda,
                },
            });
        }
        let run_ends = p.errors.total() != min || i + 1 == pieces.len();
        if run_ends {
            if let Some(r) = run.take() {
                if best.is_none_or(|b| r.width() > b.width()) {
                    best = Some(r);
                }
            }
        }
    }
    best.expect("an error function has at least one piece")
}

/// Write the pieces as `min_log_lambda,max_log_lambda,segments,fp,fn,labels,truncated`.
pub fn write_error_function(path: impl AsRef<Path>, err: &ErrorFunction) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record([
        "min_log_lambda",
        "max_log_lambda",
        "segments",
        "fp",
        "fn",
        "labels",
        "truncated",
    ])?;
    for p in err.pieces() {
        writer.write_record([
            p.min_log_lambda.to_string(),
            p.max_log_lambda.to_string(),
            p.segments.to_string(),
            p.errors.false_positives.to_string(),
            p.errors.false_negatives.to_string(),
            err.labels.to_string(),
            u8::from(err.truncated).to_string(),
        ])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_error_function(path: impl AsRef<Path>) -> Result<ErrorFunction> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut pieces = Vec::new();
    let mut labels = 0;
    let mut truncated = false;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let field = |j: usize| -> Result<&str> {
            record.get(j).ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                row: i + 2,
                message: format!("missing field {}", j + 1),
            })
        };
        let parse_err = |what: &str| Error::Format {
            path: path.to_path_buf(),
            row: i + 2,
            message: format!("cannot parse {what}"),
        };
        pieces.push(ErrorPiece {
            min_log_lambda: field(0)?.parse().map_err(|_| parse_err("min_log_lambda"))?,
            max_log_lambda: field(1)?.parse().map_err(|_| parse_err("max_log_lambda"))?,
            segments: field(2)?.parse().map_err(|_| parse_err("segments"))?,
            errors: LabelErrors {
                false_positives: field(3)?.parse().map_err(|_| parse_err("fp"))?,
                false_negatives: field(4)?.parse().map_err(|_| parse_err("fn"))?,
            },
        });
        labels = field(5)?.parse().map_err(|_| parse_err("labels"))?;
        truncated = field(6)? == "1";
    }
    ErrorFunction::new(pieces, labels, truncated)
}
