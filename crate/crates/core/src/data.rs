//! Datasets, CSV ingestion, standardization and the contamination-aware split.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Class of a row. Internally `Inline` is the "1" class and `Anomaly` the "0"
/// class; scores and metrics treat `Anomaly` as the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Inline,
    Anomaly,
}

impl Label {
    pub fn is_anomaly(self) -> bool {
        self == Label::Anomaly
    }

    pub fn is_inline(self) -> bool {
        self == Label::Inline
    }

    /// 1 for inline, 0 for anomaly.
    pub fn inline_bit(self) -> u8 {
        match self {
            Label::Inline => 1,
            Label::Anomaly => 0,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Inline => Label::Anomaly,
            Label::Anomaly => Label::Inline,
        }
    }
}

/// How the binary label column of an input file is encoded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelConvention {
    OneIsAnomaly,
    OneIsInline,
}

impl LabelConvention {
    pub fn decode(self, bit: bool) -> Label {
        match (self, bit) {
            (LabelConvention::OneIsAnomaly, true) | (LabelConvention::OneIsInline, false) => Label::Anomaly,
            _ => Label::Inline,
        }
    }

    pub fn encode(self, label: Label) -> bool {
        match self {
            LabelConvention::OneIsAnomaly => label.is_anomaly(),
            LabelConvention::OneIsInline => label.is_inline(),
        }
    }

    pub fn flipped(self) -> LabelConvention {
        match self {
            LabelConvention::OneIsAnomaly => LabelConvention::OneIsInline,
            LabelConvention::OneIsInline => LabelConvention::OneIsAnomaly,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<Label>,
    pub name: String,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<Label>,
        name: impl Into<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(Error::InvalidDataset(format!(
                "need at least one row and one column, got {n}x{d}"
            )));
        }
        if labels.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: labels.len(),
            });
        }
        if feature_names.len() != d {
            return Err(Error::LengthMismatch {
                left: d,
                right: feature_names.len(),
            });
        }
        if let Some(((i, j), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite value at row {i}, column {j}"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            name: name.into(),
            feature_names,
        })
    }

    /// Builds a dataset with generated column names `x0, x1, ...`.
    pub fn from_parts(features: Array2<f64>, labels: Vec<Label>, name: impl Into<String>) -> Result<Self> {
        let names = (0..features.ncols()).map(|j| format!("x{j}")).collect();
        Dataset::new(features, labels, name, names)
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_inline(&self) -> usize {
        self.labels.iter().filter(|l| l.is_inline()).count()
    }

    pub fn n_anomaly(&self) -> usize {
        self.labels.iter().filter(|l| l.is_anomaly()).count()
    }

    /// Feature rows and labels for the given indices, in the given order.
    pub fn select(&self, rows: &[usize]) -> (Array2<f64>, Vec<Label>) {
        let x = self.features.select(Axis(0), rows);
        let y = rows.iter().map(|&i| self.labels[i]).collect();
        (x, y)
    }
}

/// Counts emitted alongside a loaded dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_rejected: usize,
    pub n_inline: usize,
    pub n_anomaly: usize,
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("null")
}

fn parse_label(raw: &str, line: u64) -> Result<bool> {
    let value = raw.trim();
    match value.parse::<f64>() {
        Ok(0.0) => Ok(false),
        Ok(1.0) => Ok(true),
        _ => Err(Error::NonBinaryLabel {
            line,
            value: value.to_string(),
        }),
    }
}

/// Reads a headed CSV file. Every column except `label_column` must be
/// numeric. Rows with a missing cell are rejected and counted in the report.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    convention: LabelConvention,
) -> Result<(Dataset, LoadReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| Error::MissingLabelColumn(label_column.to_string()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_idx)
        .map(|(_, h)| h.trim().to_string())
        .collect();
    if feature_names.is_empty() {
        return Err(Error::InvalidDataset("no feature columns".into()));
    }

    let d = feature_names.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows_read = 0;
    let mut rows_rejected = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // header is line 1
        let line = record.position().map_or(i as u64 + 2, |p| p.line());
        rows_read += 1;
        if record.iter().any(is_missing) {
            rows_rejected += 1;
            continue;
        }
        let bit = parse_label(&record[label_idx], line)?;
        let start = values.len();
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
                line,
                column: headers[j].trim().to_string(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumericCell {
                    line,
                    column: headers[j].trim().to_string(),
                    value: cell.to_string(),
                });
            }
            values.push(v);
        }
        debug_assert_eq!(values.len() - start, d);
        labels.push(convention.decode(bit));
    }
    if labels.is_empty() {
        return Err(Error::Empty("no usable rows in csv"));
    }
    if rows_rejected > 0 {
        log::warn!("{}: rejected {rows_rejected} rows with missing values", path.display());
    }
    let features =
        Array2::from_shape_vec((labels.len(), d), values).map_err(|e| Error::InvalidDataset(e.to_string()))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let dataset = Dataset::new(features, labels, name, feature_names)?;
    let report = LoadReport {
        rows_read,
        rows_rejected,
        n_inline: dataset.n_inline(),
        n_anomaly: dataset.n_anomaly(),
    };
    Ok((dataset, report))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Fraction of inline rows sent to training, as a ratio of integers.
pub const TRAIN_INLINE_FRACTION: (usize, usize) = (70, 100);
/// Fraction of anomalous rows sent to training.
pub const TRAIN_ANOMALY_FRACTION: (usize, usize) = (15, 100);

fn floor_fraction(n: usize, (num, den): (usize, usize)) -> usize {
    n * num / den
}

/// Splits rows into train and test: ⌊0.70·n_inline⌋ inline rows and
/// ⌊0.15·n_anomaly⌋ anomalous rows go to train, sampled uniformly without
/// replacement; everything else goes to test. Both index lists are sorted.
///
/// Rows are sampled independently of their position, so time-series contiguity
/// is not preserved.
pub fn paper_split(dataset: &Dataset, seed: u64) -> Result<SplitIndices> {
    split_labels(dataset.labels(), seed)
}

pub fn split_labels(labels: &[Label], seed: u64) -> Result<SplitIndices> {
    let mut inline: Vec<usize> = Vec::new();
    let mut anomaly: Vec<usize> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match l {
            Label::Inline => inline.push(i),
            Label::Anomaly => anomaly.push(i),
        }
    }
    if inline.is_empty() {
        return Err(Error::InvalidDataset("split needs at least one inline row".into()));
    }
    let mut rng = seed::rng(seed::sub_seed(seed, "split"));
    inline.shuffle(&mut rng);
    anomaly.shuffle(&mut rng);
    let k_in = floor_fraction(inline.len(), TRAIN_INLINE_FRACTION);
    let k_an = floor_fraction(anomaly.len(), TRAIN_ANOMALY_FRACTION);

    let mut train: Vec<usize> = inline[..k_in].iter().chain(&anomaly[..k_an]).copied().collect();
    let mut test: Vec<usize> = inline[k_in..].iter().chain(&anomaly[k_an..]).copied().collect();
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test, seed })
}

/// Per-column affine standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
}

impl Standardizer {
    pub fn identity(d: usize) -> Self {
        Standardizer {
            means: vec![0.0; d],
            stddevs: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Population mean and standard deviation over `rows` of `features`.
    /// Constant columns get a standard deviation of 1.
    pub fn fit(features: ArrayView2<'_, f64>, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("standardizer rows"));
        }
        let n = rows.len() as f64;
        let d = features.ncols();
        let mut means = vec![0.0; d];
        let mut stddevs = vec![1.0; d];
        for j in 0..d {
            let col = features.column(j);
            let first = col[rows[0]];
            let mean = rows.iter().map(|&i| col[i]).sum::<f64>() / n;
            means[j] = mean;
            if rows.iter().all(|&i| col[i] == first) {
                means[j] = first;
                continue;
            }
            let var = rows.iter().map(|&i| (col[i] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd > 0.0 && sd.is_finite() {
                stddevs[j] = sd;
            }
        }
        Ok(Standardizer { means, stddevs })
    }

    /// Fits on every row of `features`.
    pub fn fit_all(features: ArrayView2<'_, f64>) -> Result<Self> {
        let rows: Vec<usize> = (0..features.nrows()).collect();
        Standardizer::fit(features, &rows)
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: d,
            });
        }
        Ok(())
    }

    pub fn apply(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_dim(features.ncols())?;
        let mut out = features.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.stddevs[j];
            }
        }
        Ok(out)
    }

    /// Standardizes a single row into `out`.
    pub fn apply_row(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(x.len())?;
        for (j, (o, v)) in out.iter_mut().zip(x).enumerate() {
            *o = (v - self.means[j]) / self.stddevs[j];
        }
        Ok(())
    }

    pub fn invert(&self, standardized: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_dim(standardized.ncols())?;
        let mut out = standardized.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.stddevs[j] + self.means[j];
            }
        }
        Ok(out)
    }
}

/// Stratified carve-out of ⌊fraction·count⌋ rows per class from `rows`.
/// Returns `(kept, carved)`, both sorted. When the per-class floors are all
/// zero but `fraction > 0` and there are at least two rows, one row of the
/// larger class is carved so the validation set is never empty.
pub fn stratified_holdout(rows: &[usize], labels: &[Label], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for &i in rows {
        by_class.entry(labels[i]).or_default().push(i);
    }
    let mut rng = seed::rng(seed);
    let mut kept = Vec::new();
    let mut carved = Vec::new();
    let mut takes: Vec<(Label, usize)> = Vec::new();
    for (label, members) in by_class.iter_mut() {
        members.shuffle(&mut rng);
        let k = if fraction > 0.0 {
            ((fraction * members.len() as f64).floor() as usize).min(members.len().saturating_sub(1))
        } else {
            0
        };
        takes.push((*label, k));
    }
    if fraction > 0.0 && rows.len() >= 2 && takes.iter().all(|&(_, k)| k == 0) {
        if let Some((label, _)) = by_class.iter().max_by_key(|(l, m)| (m.len(), std::cmp::Reverse(**l))) {
            let label = *label;
            if let Some(t) = takes.iter_mut().find(|(l, _)| *l == label) {
                t.1 = 1;
            }
        }
    }
    for (label, k) in takes {
        let members = &by_class[&label];
        // a single-member class can still be carved when it is the only class left to draw from
        let k = k.min(members.len());
        carved.extend_from_slice(&members[..k]);
        kept.extend_from_slice(&members[k..]);
    }
    kept.sort_unstable();
    carved.sort_unstable();
    (kept, carved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::io::Write;

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    const TOY: &str = "a,b,is_anomaly\n1,2,0\n3,4,0\n5,6,1\n7,8,0\n";

    #[test]
    fn load_one_is_anomaly() {
        let f = write_csv(TOY);
        let (ds, report) = load_csv(f.path(), "is_anomaly", LabelConvention::OneIsAnomaly).unwrap();
        use Label::*;
        assert_eq!(ds.labels(), &[Inline, Inline, Anomaly, Inline]);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.features(), array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]]);
        assert_eq!(
            report,
            LoadReport {
                rows_read: 4,
                rows_rejected: 0,
                n_inline: 3,
                n_anomaly: 1
            }
        );
    }

    #[test]
    fn load_one_is_inline_flips() {
        let f = write_csv(TOY);
        let (ds, _) = load_csv(f.path(), "is_anomaly", LabelConvention::OneIsInline).unwrap();
        use Label::*;
        assert_eq!(ds.labels(), &[Anomaly, Anomaly, Inline, Anomaly]);
    }

    #[test]
    fn non_binary_label_names_row() {
        let f = write_csv("a,y\n1,0\n2,2\n");
        let err = load_csv(f.path(), "y", LabelConvention::OneIsAnomaly).unwrap_err();
        match err {
            Error::NonBinaryLabel { line, value } => {
                assert_eq!(line, 3);
                assert_eq!(value, "2");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let f = write_csv("a,b,y\n1,2,0\n1,oops,1\n");
        let err = load_csv(f.path(), "y", LabelConvention::OneIsAnomaly).unwrap_err();
        assert!(
            matches!(err, Error::NonNumericCell { line: 3, ref column, .. } if column == "b"),
            "{err}"
        );
    }

    #[test]
    fn missing_label_column_and_file() {
        let f = write_csv(TOY);
        assert!(matches!(
            load_csv(f.path(), "label", LabelConvention::OneIsAnomaly),
            Err(Error::MissingLabelColumn(_))
        ));
        assert!(matches!(
            load_csv("/definitely/not/here.csv", "y", LabelConvention::OneIsAnomaly),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn rows_with_missing_values_are_rejected() {
        let f = write_csv("a,b,y\n1,2,0\n,4,0\n5,NaN,1\n7,8,1\n");
        let (ds, report) = load_csv(f.path(), "y", LabelConvention::OneIsAnomaly).unwrap();
        assert_eq!(ds.n_rows(), 2);
        assert_eq!(report.rows_read, 4);
        assert_eq!(report.rows_rejected, 2);
        assert!(ds.features().iter().all(|v| v.is_finite()));
    }

    fn labels(n_in: usize, n_an: usize) -> Vec<Label> {
        let mut v = vec![Label::Inline; n_in];
        v.extend(vec![Label::Anomaly; n_an]);
        v
    }

    #[test]
    fn split_counts() {
        let y = labels(100, 20);
        let s = split_labels(&y, 3).unwrap();
        let count = |idx: &[usize], l: Label| idx.iter().filter(|&&i| y[i] == l).count();
        assert_eq!(count(&s.train, Label::Inline), 70);
        assert_eq!(count(&s.train, Label::Anomaly), 3);
        assert_eq!(count(&s.test, Label::Inline), 30);
        assert_eq!(count(&s.test, Label::Anomaly), 17);
    }

    #[test]
    fn split_without_anomalies() {
        let y = labels(10, 0);
        let s = split_labels(&y, 0).unwrap();
        assert_eq!(s.train.len(), 7);
        assert_eq!(s.test.len(), 3);
    }

    #[test]
    fn split_is_deterministic() {
        let y = labels(57, 13);
        assert_eq!(split_labels(&y, 11).unwrap(), split_labels(&y, 11).unwrap());
        assert_ne!(split_labels(&y, 11).unwrap().train, split_labels(&y, 12).unwrap().train);
    }

    #[test]
    fn split_needs_inline_rows() {
        assert!(split_labels(&labels(0, 5), 0).is_err());
    }

    #[test]
    fn standardizer_population_convention() {
        let x = array![[1.0, 5.0], [3.0, 5.0]];
        let s = Standardizer::fit_all(x.view()).unwrap();
        assert_eq!(s.means, vec![2.0, 5.0]);
        assert_eq!(s.stddevs, vec![1.0, 1.0]);
        let c = array![[5.0], [5.0], [5.0]];
        let s = Standardizer::fit_all(c.view()).unwrap();
        assert_eq!((s.means[0], s.stddevs[0]), (5.0, 1.0));
    }

    #[test]
    fn standardizer_fits_only_given_rows() {
        let x = array![[1.0], [3.0], [1000.0]];
        let s = Standardizer::fit(x.view(), &[0, 1]).unwrap();
        assert_eq!(s.means, vec![2.0]);
        assert!(Standardizer::fit(x.view(), &[]).is_err());
    }

    #[test]
    fn apply_examples() {
        let s = Standardizer {
            means: vec![2.0],
            stddevs: vec![1.0],
        };
        assert_eq!(s.apply(array![[2.0]].view()).unwrap(), array![[0.0]]);
        let s = Standardizer {
            means: vec![0.0],
            stddevs: vec![2.0],
        };
        assert_eq!(s.apply(array![[4.0]].view()).unwrap(), array![[2.0]]);
        let x = array![[1.5, -2.0], [0.25, 9.0]];
        assert_eq!(Standardizer::identity(2).apply(x.view()).unwrap(), x);
        assert!(matches!(
            Standardizer::identity(3).apply(x.view()),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn refit_after_apply_is_standard() {
        let x = array![[1.0, 10.0], [2.0, -3.0], [4.0, 7.5], [8.0, 0.0], [3.0, 3.0]];
        let s = Standardizer::fit_all(x.view()).unwrap();
        let z = s.apply(x.view()).unwrap();
        let s2 = Standardizer::fit_all(z.view()).unwrap();
        for j in 0..2 {
            assert!(s2.means[j].abs() < 1e-9);
            assert!((s2.stddevs[j] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn holdout_is_stratified_and_nonempty() {
        let y = labels(50, 10);
        let rows: Vec<usize> = (0..60).collect();
        let (kept, carved) = stratified_holdout(&rows, &y, 0.1, 4);
        assert_eq!(carved.len(), 6);
        assert_eq!(carved.iter().filter(|&&i| y[i].is_anomaly()).count(), 1);
        assert_eq!(kept.len() + carved.len(), 60);

        let y = labels(2, 0);
        let (kept, carved) = stratified_holdout(&[0, 1], &y, 0.1, 4);
        assert_eq!((kept.len(), carved.len()), (1, 1));
    }
}
