//! Sequence and label ingestion, synthetic corpora and fold assignment.
//!
//! File schemas (UTF-8, header row mandatory, `.` decimal separator):
//!
//! - `sequences.csv`: `sequenceID,position,value`
//! - `labels.csv`: `sequenceID,start,end,changes`
//! - `folds.csv`: `sequenceID,fold`

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::stable_hash;

/// One univariate data sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    id: String,
    positions: Vec<i64>,
    values: Vec<f64>,
}

impl Sequence {
    /// Build a sequence, checking that positions strictly increase and values are finite.
    pub fn new(id: impl Into<String>, positions: Vec<i64>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        let invalid = |row: usize, message: String| Error::InvalidSequence {
            sequence_id: id.clone(),
            row,
            message,
        };
        if positions.len() != values.len() {
            return Err(invalid(
                0,
                format!("{} positions but {} values", positions.len(), values.len()),
            ));
        }
        if values.is_empty() {
            return Err(invalid(0, "empty sequence".into()));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(invalid(i + 1, format!("non-finite value {v}")));
            }
        }
        for (i, w) in positions.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(invalid(
                    i + 2,
                    format!("position {} does not increase past {}", w[1], w[0]),
                ));
            }
        }
        Ok(Self {
            id,
            positions,
            values,
        })
    }

    /// Sequence with positions `1..=N`.
    pub fn from_values(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let positions = (1..=values.len() as i64).collect();
        Self::new(id, positions, values)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first_position(&self) -> i64 {
        self.positions[0]
    }

    pub fn last_position(&self) -> i64 {
        self.positions[self.positions.len() - 1]
    }

    /// Coordinate of the changepoint between 1-based indices `index` and `index + 1`:
    /// the midpoint of the two neighbouring positions.
    pub fn changepoint_position(&self, index: usize) -> f64 {
        (self.positions[index - 1] as f64 + self.positions[index] as f64) / 2.0
    }
}

/// An annotated region `[start, end]` expected to contain `changes` changepoints.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    pub sequence_id: String,
    pub start: i64,
    pub end: i64,
    pub changes: u32,
}

impl Label {
    pub fn is_positive(&self) -> bool {
        self.changes > 0
    }
}

fn column_index(headers: &csv::StringRecord, path: &Path, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    index: usize,
    path: &Path,
    row: usize,
    what: &str,
) -> Result<T> {
    let raw = record.get(index).unwrap_or("").trim();
    raw.parse().map_err(|_| Error::Format {
        path: path.to_path_buf(),
        row,
        message: format!("cannot parse {what} from `{raw}`"),
    })
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

/// Read `sequenceID,position,value` rows into one [`Sequence`] per id, sorted by id.
pub fn load_sequences(path: impl AsRef<Path>) -> Result<Vec<Sequence>> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let headers = reader.headers()?.clone();
    let id_col = column_index(&headers, path, "sequenceID")?;
    let pos_col = column_index(&headers, path, "position")?;
    let val_col = column_index(&headers, path, "value")?;

    let mut grouped: BTreeMap<String, Vec<(usize, i64, f64)>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let id = record.get(id_col).unwrap_or("").to_string();
        let position = parse_field(&record, pos_col, path, row, "position")?;
        let value: f64 = parse_field(&record, val_col, path, row, "value")?;
        if !value.is_finite() {
            return Err(Error::InvalidSequence {
                sequence_id: id,
                row,
                message: format!("non-finite value {value}"),
            });
        }
        grouped.entry(id).or_default().push((row, position, value));
    }

    grouped
        .into_iter()
        .map(|(id, mut rows)| {
            rows.sort_by_key(|&(_, p, _)| p);
            if let Some(w) = rows.windows(2).find(|w| w[0].1 == w[1].1) {
                return Err(Error::InvalidSequence {
                    sequence_id: id,
                    row: w[1].0,
                    message: format!("duplicate position {}", w[1].1),
                });
            }
            let positions = rows.iter().map(|r| r.1).collect();
            let values = rows.iter().map(|r| r.2).collect();
            Sequence::new(id, positions, values)
        })
        .collect()
}

/// Read `sequenceID,start,end,changes` rows and validate them against `sequences`.
pub fn load_labels(path: impl AsRef<Path>, sequences: &[Sequence]) -> Result<Vec<Label>> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let headers = reader.headers()?.clone();
    let id_col = column_index(&headers, path, "sequenceID")?;
    let start_col = column_index(&headers, path, "start")?;
    let end_col = column_index(&headers, path, "end")?;
    let changes_col = column_index(&headers, path, "changes")?;

    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;
        labels.push(Label {
            sequence_id: record.get(id_col).unwrap_or("").to_string(),
            start: parse_field(&record, start_col, path, row, "start")?,
            end: parse_field(&record, end_col, path, row, "end")?,
            changes: parse_field(&record, changes_col, path, row, "changes")?,
        });
    }
    validate_labels(&mut labels, sequences)?;
    Ok(labels)
}

/// Check bounds, ordering and pairwise disjointness; sorts labels by (sequence, start).
pub fn validate_labels(labels: &mut [Label], sequences: &[Sequence]) -> Result<()> {
    let spans: BTreeMap<&str, (i64, i64)> = sequences
        .iter()
        .map(|s| (s.id(), (s.first_position(), s.last_position())))
        .collect();
    for label in labels.iter() {
        let (first, last) = *spans
            .get(label.sequence_id.as_str())
            .ok_or_else(|| Error::UnknownSequence(label.sequence_id.clone()))?;
        if label.start >= label.end {
            return Err(Error::InvalidLabel {
                sequence_id: label.sequence_id.clone(),
                message: format!("start {} is not before end {}", label.start, label.end),
            });
        }
        if label.start < first || label.end > last {
            return Err(Error::InvalidLabel {
                sequence_id: label.sequence_id.clone(),
                message: format!(
                    "[{}, {}] outside sequence span [{first}, {last}]",
                    label.start, label.end
                ),
            });
        }
    }
    labels.sort();
    for w in labels.windows(2) {
        if w[0].sequence_id == w[1].sequence_id && w[1].start <= w[0].end {
            return Err(Error::OverlappingLabels {
                sequence_id: w[0].sequence_id.clone(),
                first_start: w[0].start,
                first_end: w[0].end,
                second_start: w[1].start,
                second_end: w[1].end,
            });
        }
    }
    Ok(())
}

fn create_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_sequences(path: impl AsRef<Path>, sequences: &[Sequence]) -> Result<()> {
    let mut writer = create_writer(path.as_ref())?;
    writer.write_record(["sequenceID", "position", "value"])?;
    for seq in sequences {
        for (p, v) in seq.positions.iter().zip(&seq.values) {
            writer.write_record([seq.id(), &p.to_string(), &v.to_string()])?;
        }
    }
    writer.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(())
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[Label]) -> Result<()> {
    let mut writer = create_writer(path.as_ref())?;
    writer.write_record(["sequenceID", "start", "end", "changes"])?;
    for l in labels {
        writer.write_record([
            l.sequence_id.as_str(),
            &l.start.to_string(),
            &l.end.to_string(),
            &l.changes.to_string(),
        ])?;
    }
    writer.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(())
}

/// Group labels by sequence id.
pub fn labels_by_sequence(labels: &[Label]) -> BTreeMap<String, Vec<Label>> {
    let mut grouped: BTreeMap<String, Vec<Label>> = BTreeMap::new();
    for l in labels {
        grouped
            .entry(l.sequence_id.clone())
            .or_default()
            .push(l.clone());
    }
    grouped
}

/// Parameters of the synthetic corpus generator.
///
/// Each sequence is a piecewise-constant mean plus Gaussian noise, multiplied
/// by an amplitude `exp(u)` with `u` uniform on `log_scale`. Scaling every
/// value by `s` scales all segmentation costs by `s²`, so the best log-penalty
/// of a sequence moves together with its log-variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_sequences: usize,
    /// Inclusive range of sequence lengths.
    pub length: (usize, usize),
    /// Inclusive range of segment counts per sequence.
    pub segments: (usize, usize),
    pub noise_sd: f64,
    /// Probability that each candidate label is emitted.
    pub label_coverage: f64,
    /// Inclusive range of absolute mean jumps between adjacent segments (before scaling).
    pub jump: (f64, f64),
    /// Inclusive range of the natural-log amplitude scale.
    pub log_scale: (f64, f64),
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_sequences: 300,
            length: (60, 200),
            segments: (1, 5),
            noise_sd: 1.0,
            label_coverage: 0.7,
            jump: (6.0, 10.0),
            log_scale: (-3.0, 3.0),
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic: {m}")));
        if self.n_sequences == 0 {
            return bad("n_sequences must be positive");
        }
        if self.length.0 == 0 || self.length.0 > self.length.1 {
            return bad("length range is empty");
        }
        if self.segments.0 == 0 || self.segments.0 > self.segments.1 {
            return bad("segments range is empty");
        }
        if self.segments.1 > self.length.0 {
            return bad("more segments than points");
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd must be positive");
        }
        if !(0.0..=1.0).contains(&self.label_coverage) {
            return bad("label_coverage must lie in [0, 1]");
        }
        if !(self.jump.0 > 0.0 && self.jump.0 <= self.jump.1 && self.jump.1.is_finite()) {
            return bad("jump range must be positive and non-empty");
        }
        if !(self.log_scale.0 <= self.log_scale.1
            && self.log_scale.0.is_finite()
            && self.log_scale.1.is_finite())
        {
            return bad("log_scale range is empty");
        }
        Ok(())
    }
}

/// A generated corpus together with the changepoints used to generate it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub sequences: Vec<Sequence>,
    pub labels: Vec<Label>,
    /// 1-based changepoint indices per sequence id.
    pub true_changepoints: BTreeMap<String, Vec<usize>>,
}

/// Generate a labeled corpus; identical `(config, seed)` give identical output.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, config.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    let width = config.n_sequences.to_string().len();

    let mut corpus = SyntheticCorpus {
        sequences: Vec::with_capacity(config.n_sequences),
        labels: Vec::new(),
        true_changepoints: BTreeMap::new(),
    };
    for s in 0..config.n_sequences {
        let id = format!("seq{:0width$}", s + 1);
        let n = rng.random_range(config.length.0..=config.length.1);
        let n_segments = rng.random_range(config.segments.0..=config.segments.1);
        let lengths = random_composition(&mut rng, n, n_segments);

        let scale = rng
            .random_range(config.log_scale.0..=config.log_scale.1)
            .exp();
        let mut mean = 0.0;
        let mut values = Vec::with_capacity(n);
        for (j, &len) in lengths.iter().enumerate() {
            if j > 0 {
                let size = rng.random_range(config.jump.0..=config.jump.1);
                mean += if rng.random_bool(0.5) { size } else { -size };
            }
            for _ in 0..len {
                values.push(scale * (mean + noise.sample(&mut rng)));
            }
        }

        let changepoints: Vec<usize> = lengths
            .iter()
            .scan(0, |end, &len| {
                *end += len;
                Some(*end)
            })
            .take(n_segments - 1)
            .collect();
        let labels = synthetic_labels(&mut rng, &id, &lengths, config.label_coverage);

        corpus
            .sequences
            .push(Sequence::from_values(id.clone(), values)?);
        corpus.labels.extend(labels);
        corpus.true_changepoints.insert(id, changepoints);
    }
    Ok(corpus)
}

/// Random segment lengths summing to `n`, each at least `min(5, max(1, n / 2k))`.
fn random_composition(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let min_len = (n / (2 * k)).clamp(1, 5);
    let extra = n - k * min_len;
    let mut cuts: Vec<usize> = (0..k - 1).map(|_| rng.random_range(0..=extra)).collect();
    cuts.sort_unstable();
    let mut lengths = Vec::with_capacity(k);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(extra)) {
        lengths.push(min_len + c - prev);
        prev = c;
    }
    lengths
}

/// Labels consistent with the generating segments.
///
/// Each segment is split in thirds. A positive label around the change after
/// segment `j` reaches back into the right third of `j` and forward into the
/// left third of `j + 1`; a negative label sits inside the middle third.
fn synthetic_labels(
    rng: &mut ChaCha8Rng,
    id: &str,
    lengths: &[usize],
    coverage: f64,
) -> Vec<Label> {
    let mut candidates = Vec::new();
    let mut first = 1i64;
    for (j, &len) in lengths.iter().enumerate() {
        let third = (len / 3) as i64;
        let last = first + len as i64 - 1;
        // Middle third, strictly inside the segment.
        let (mid_lo, mid_hi) = (first + third, last - third);
        if third >= 1 && mid_hi > mid_lo {
            let start = rng.random_range(mid_lo..mid_hi);
            let end = rng.random_range(start + 1..=mid_hi);
            candidates.push(Label {
                sequence_id: id.to_string(),
                start,
                end,
                changes: 0,
            });
        }
        if j + 1 < lengths.len() {
            let next_third = (lengths[j + 1] / 3) as i64;
            let back = if third >= 1 {
                rng.random_range(0..third)
            } else {
                0
            };
            let forward = if next_third >= 1 {
                rng.random_range(0..next_third)
            } else {
                0
            };
            candidates.push(Label {
                sequence_id: id.to_string(),
                start: last - back,
                end: last + 1 + forward,
                changes: 1,
            });
        }
        first = last + 1;
    }
    candidates.sort();
    // Single-point segments would let neighbouring positive labels share an endpoint.
    let mut last_end = i64::MIN;
    candidates.retain(|l| {
        let fits = l.start > last_end;
        if fits {
            last_end = l.end;
        }
        fits
    });

    let keep: Vec<bool> = candidates
        .iter()
        .map(|_| rng.random_bool(coverage))
        .collect();
    let mut labels: Vec<Label> = candidates
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(l, _)| l.clone())
        .collect();
    if labels.is_empty() {
        if let Some(l) = candidates.into_iter().next() {
            labels.push(l);
        }
    }
    labels
}

/// Mapping from sequence id to a 1-based fold index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    k: usize,
    folds: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn new(k: usize, folds: BTreeMap<String, usize>) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!(
                "fold count must be at least 2, got {k}"
            )));
        }
        if let Some((id, f)) = folds.iter().find(|(_, &f)| f == 0 || f > k) {
            return Err(Error::Config(format!(
                "sequence `{id}` assigned to fold {f}, outside 1..={k}"
            )));
        }
        Ok(Self { k, folds })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.folds.get(id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.folds.iter().map(|(id, &f)| (id.as_str(), f))
    }

    /// Ids in `fold`, in sorted order.
    pub fn members(&self, fold: usize) -> Vec<&str> {
        self.iter()
            .filter(|&(_, f)| f == fold)
            .map(|(id, _)| id)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        (1..=self.k).map(|f| self.members(f).len()).collect()
    }
}

/// Shuffle ids by a stable hash of `(seed, id)` and deal them round-robin into `k` folds.
pub fn assign_folds<S: AsRef<str>>(ids: &[S], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!(
            "fold count must be at least 2, got {k}"
        )));
    }
    if k > ids.len() {
        return Err(Error::Config(format!(
            "{k} folds requested for only {} sequences",
            ids.len()
        )));
    }
    let distinct: BTreeSet<&str> = ids.iter().map(AsRef::as_ref).collect();
    if distinct.len() != ids.len() {
        return Err(Error::Config("sequence ids are not distinct".into()));
    }
    let mut keyed: Vec<(u64, &str)> = distinct
        .into_iter()
        .map(|id| (stable_hash(seed, &[id.as_bytes()]), id))
        .collect();
    keyed.sort_unstable();
    let folds = keyed
        .into_iter()
        .enumerate()
        .map(|(i, (_, id))| (id.to_string(), i % k + 1))
        .collect();
    FoldAssignment::new(k, folds)
}

/// Read an explicit `sequenceID,fold` split.
pub fn load_folds(path: impl AsRef<Path>) -> Result<FoldAssignment> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let headers = reader.headers()?.clone();
    let id_col = column_index(&headers, path, "sequenceID")?;
    let fold_col = column_index(&headers, path, "fold")?;
    let mut folds = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let id = record.get(id_col).unwrap_or("").to_string();
        let fold: usize = parse_field(&record, fold_col, path, row, "fold")?;
        if folds.insert(id.clone(), fold).is_some() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                row,
                message: format!("sequence `{id}` listed twice"),
            });
        }
    }
    let k = folds.values().copied().max().unwrap_or(0);
    FoldAssignment::new(k, folds)
}

pub fn write_folds(path: impl AsRef<Path>, folds: &FoldAssignment) -> Result<()> {
    let mut writer = create_writer(path.as_ref())?;
    writer.write_record(["sequenceID", "fold"])?;
    for (id, f) in folds.iter() {
        writer.write_record([id, &f.to_string()])?;
    }
    writer.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(())
}
