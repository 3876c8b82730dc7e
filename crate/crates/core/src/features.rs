//! Sequence statistics, the transform catalog and feature preprocessing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Base statistics, in catalog order.
pub const STATISTICS: [&str; 12] = [
    "count",
    "mean",
    "variance",
    "sd",
    "min",
    "max",
    "q25",
    "median",
    "q75",
    "range",
    "sum_abs_diff",
    "mean_abs_diff",
];

/// Transforms, in catalog order.
pub const TRANSFORMS: [&str; 7] = [
    "identity", "abs", "square", "sqrt", "log", "loglog", "log1p",
];

pub const CATALOG_SIZE: usize = STATISTICS.len() * TRANSFORMS.len();

fn apply_transform(name: &str, x: f64) -> f64 {
    match name {
        "identity" => x,
        "abs" => x.abs(),
        "square" => x * x,
        "sqrt" => x.abs().sqrt(),
        "log" => x.ln(),
        "loglog" => x.ln().ln(),
        "log1p" => x.abs().ln_1p(),
        _ => unreachable!("unknown transform {name}"),
    }
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The twelve base statistics of `values` keyed by name.
///
/// Variance uses the `N - 1` denominator and is 0 for a single point.
pub fn base_statistics(values: &[f64]) -> BTreeMap<&'static str, f64> {
    assert!(!values.is_empty(), "statistics of an empty sequence");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let sum_abs_diff: f64 = values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let mean_abs_diff = if values.len() > 1 {
        sum_abs_diff / (n - 1.0)
    } else {
        0.0
    };
    BTreeMap::from([
        ("count", n),
        ("mean", mean),
        ("variance", variance),
        ("sd", variance.sqrt()),
        ("min", min),
        ("max", max),
        ("q25", quantile(&sorted, 0.25)),
        ("median", quantile(&sorted, 0.5)),
        ("q75", quantile(&sorted, 0.75)),
        ("range", max - min),
        ("sum_abs_diff", sum_abs_diff),
        ("mean_abs_diff", mean_abs_diff),
    ])
}

/// Catalog feature names as `<transform>.<statistic>`.
pub fn catalog_names() -> Vec<String> {
    TRANSFORMS
        .iter()
        .flat_map(|t| STATISTICS.iter().map(move |s| format!("{t}.{s}")))
        .collect()
}

/// Every transform applied to every statistic. Non-finite values are kept.
pub fn feature_catalog(stats: &BTreeMap<&str, f64>) -> Vec<f64> {
    TRANSFORMS
        .iter()
        .flat_map(|t| STATISTICS.iter().map(move |s| apply_transform(t, stats[s])))
        .collect()
}

/// Catalog features of a raw value vector.
pub fn extract(values: &[f64]) -> Vec<f64> {
    feature_catalog(&base_statistics(values))
}

/// Named subsets used by the model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "1")]
    F1,
    #[serde(rename = "2")]
    F2,
    #[serde(rename = "4")]
    F4,
    #[serde(rename = "full")]
    Full,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 4] = [Self::F1, Self::F2, Self::F4, Self::Full];

    pub fn suffix(self) -> &'static str {
        match self {
            Self::F1 => "1",
            Self::F2 => "2",
            Self::F4 => "4",
            Self::Full => "full",
        }
    }

    /// Accepts `f1`, `1`, `f2`, `2`, `f4`, `4` or `full`.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "f1" | "1" => Ok(Self::F1),
            "f2" | "2" => Ok(Self::F2),
            "f4" | "4" => Ok(Self::F4),
            "full" => Ok(Self::Full),
            other => Err(Error::Config(format!("unknown feature set `{other}`"))),
        }
    }

    pub fn names(self) -> Vec<String> {
        let named = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        match self {
            Self::F1 => named(&["loglog.count"]),
            Self::F2 => named(&["loglog.count", "log.variance"]),
            Self::F4 => named(&[
                "loglog.count",
                "log.variance",
                "log.range",
                "loglog.sum_abs_diff",
            ]),
            Self::Full => catalog_names(),
        }
    }
}

/// Column indices into the catalog for a list of names.
pub fn catalog_indices(names: &[String]) -> Result<Vec<usize>> {
    let catalog = catalog_names();
    names
        .iter()
        .map(|n| {
            catalog
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| Error::Config(format!("unknown feature `{n}`")))
        })
        .collect()
}

/// Columns that are finite in every training row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMask {
    keep: Vec<bool>,
}

impl ColumnMask {
    pub fn kept(&self) -> impl Iterator<Item = usize> + '_ {
        self.keep
            .iter()
            .enumerate()
            .filter(|(_, &k)| k)
            .map(|(i, _)| i)
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn select(&self, row: &[f64]) -> Vec<f64> {
        self.kept().map(|i| row[i]).collect()
    }
}

/// Fit the finiteness mask on training rows only.
pub fn select_finite_columns(train: &[Vec<f64>]) -> Result<ColumnMask> {
    let width = train.first().map_or(0, Vec::len);
    let keep: Vec<bool> = (0..width)
        .map(|j| train.iter().all(|row| row[j].is_finite()))
        .collect();
    let mask = ColumnMask { keep };
    if mask.kept_count() == 0 {
        return Err(Error::Pipeline(
            "every feature column is non-finite in some training row".into(),
        ));
    }
    Ok(mask)
}

/// Per-column centering and scaling fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Population statistics of each column; `train` must be finite.
    pub fn fit(train: &[Vec<f64>]) -> Self {
        let width = train.first().map_or(0, Vec::len);
        let n = train.len().max(1) as f64;
        let mean: Vec<f64> = (0..width)
            .map(|j| train.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let sd = (0..width)
            .map(|j| {
                let var = train.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                var.sqrt()
            })
            .collect();
        Self { mean, sd }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// Standardize one row. Non-finite entries are replaced by the training
    /// mean (so they map to 0); the return flag reports whether that happened.
    pub fn apply_row(&self, row: &[f64]) -> (Vec<f64>, bool) {
        let mut imputed = false;
        let out = row
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let v = if v.is_finite() {
                    v
                } else {
                    imputed = true;
                    self.mean[j]
                };
                if self.sd[j] > 0.0 {
                    (v - self.mean[j]) / self.sd[j]
                } else {
                    0.0
                }
            })
            .collect();
        (out, imputed)
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.apply_row(r).0).collect()
    }

    /// Undo [`apply_row`](Self::apply_row); zero-variance columns come back as their mean.
    pub fn invert_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &z)| z * self.sd[j] + self.mean[j])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn named(values: &[f64]) -> BTreeMap<String, f64> {
        catalog_names().into_iter().zip(extract(values)).collect()
    }

    #[test]
    fn base_statistics_examples() {
        let s = base_statistics(&[1.0, 3.0, 2.0]);
        assert_eq!(s["range"], 2.0);
        assert_eq!(s["sum_abs_diff"], 3.0);
        assert_eq!(s["median"], 2.0);
        assert_eq!(s["q25"], 1.5);

        let s = base_statistics(&[4.2]);
        assert_eq!(s["variance"], 0.0);
        assert_eq!(s["sum_abs_diff"], 0.0);
        assert_eq!(s["mean_abs_diff"], 0.0);

        let s = base_statistics(&[1.0, 1.0, 1.0, 5.0, 5.0, 5.0]);
        assert!((s["variance"] - 4.8).abs() < 1e-12);
        assert_eq!(s["range"], 4.0);
    }

    #[test]
    fn catalog_shape_and_transforms() {
        assert_eq!(catalog_names().len(), 84);
        let mut stats = base_statistics(&[1.0, 2.0]);
        stats.insert("count", std::f64::consts::E.powf(std::f64::consts::E));
        stats.insert("min", -2.0);
        let values: BTreeMap<String, f64> = catalog_names()
            .into_iter()
            .zip(feature_catalog(&stats))
            .collect();
        assert!((values["loglog.count"] - 1.0).abs() < 1e-12);
        assert!(values["log.min"].is_nan());
        assert_eq!(values["square.min"], 4.0);
        assert_eq!(values["sqrt.min"], 2f64.sqrt());
    }

    #[test]
    fn four_feature_formulas() {
        let f = named(&[1.0, 1.0, 1.0, 5.0, 5.0, 5.0]);
        assert!((f["loglog.count"] - 6f64.ln().ln()).abs() < 1e-12);
        assert!((f["log.variance"] - 4.8f64.ln()).abs() < 1e-12);
        assert!((f["log.range"] - 4f64.ln()).abs() < 1e-12);
        assert!((f["loglog.sum_abs_diff"] - 4f64.ln().ln()).abs() < 1e-12);
    }

    #[test]
    fn named_sets() {
        assert_eq!(
            FeatureSet::parse("f1").unwrap().names(),
            vec!["loglog.count"]
        );
        assert_eq!(
            FeatureSet::F4.names(),
            vec![
                "loglog.count",
                "log.variance",
                "log.range",
                "loglog.sum_abs_diff"
            ]
        );
        assert_eq!(FeatureSet::Full.names().len(), 84);
        assert!(matches!(FeatureSet::parse("f3"), Err(Error::Config(_))));
        for set in FeatureSet::ALL {
            assert_eq!(
                catalog_indices(&set.names()).unwrap().len(),
                set.names().len()
            );
        }
    }

    #[test]
    fn mask_drops_non_finite_columns() {
        let train = vec![vec![1.0, f64::NAN, 2.0], vec![3.0, 1.0, f64::INFINITY]];
        let mask = select_finite_columns(&train).unwrap();
        assert_eq!(mask.kept().collect::<Vec<_>>(), vec![0]);
        assert!(select_finite_columns(&[vec![f64::NAN]]).is_err());
    }

    #[test]
    fn standardizer_properties() {
        let train = vec![
            vec![1.0, 7.0, -2.0],
            vec![2.0, 7.0, 5.0],
            vec![6.0, 7.0, 0.5],
        ];
        let st = Standardizer::fit(&train);
        let z = st.apply(&train);
        for j in 0..3 {
            let col: Vec<f64> = z.iter().map(|r| r[j]).collect();
            let mean = col.iter().sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-9);
            if j != 1 {
                let sd = (col.iter().map(|v| v * v).sum::<f64>() / 3.0).sqrt();
                assert!((sd - 1.0).abs() < 1e-9);
            } else {
                assert!(col.iter().all(|&v| v == 0.0));
            }
        }
        let back = st.invert_row(&z[0]);
        assert!((back[0] - 1.0).abs() < 1e-12 && (back[2] + 2.0).abs() < 1e-12);

        let (row, imputed) = st.apply_row(&[f64::NAN, 7.0, 0.0]);
        assert!(imputed);
        assert_eq!(row[0], 0.0);
    }

    #[test]
    fn catalog_is_deterministic() {
        let values = [0.1, -3.0, 2.5, 2.5, 9.0];
        let a = extract(&values);
        let b = extract(&values);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
