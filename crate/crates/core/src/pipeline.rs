//! End-to-end runs over a labelled dataset.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cblof::{Detector, ScoredPoint, UnsupervisedConfig, Variant};
use crate::data::{paper_split, Dataset, Label, SplitIndices, Standardizer};
use crate::error::{Error, Result};
use crate::eval::{optimal_threshold, optimal_threshold_in, report, EvaluationReport, PROBABILITY_THRESHOLD_RANGE};
use crate::neural::{predict_scores, train, MlpModel, TrainConfig, TrainingTrace};
use crate::rn::{estimate_alpha, RnWeights};
use crate::seed;

/// Hex sha256 of the comma-joined decimal indices.
pub fn index_digest(rows: &[usize]) -> String {
    let joined = rows.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    hex::encode(Sha256::digest(joined.as_bytes()))
}

/// Which rows each stage saw, as indices into the loaded dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Audit {
    pub train: Vec<usize>,
    /// Subset of `train` held out for early stopping and threshold selection.
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub train_digest: String,
    pub validation_digest: String,
    pub test_digest: String,
}

impl Audit {
    pub fn new(train: Vec<usize>, validation: Vec<usize>, test: Vec<usize>) -> Self {
        Audit {
            train_digest: index_digest(&train),
            validation_digest: index_digest(&validation),
            test_digest: index_digest(&test),
            train,
            validation,
            test,
        }
    }

    /// Digests match the lists, validation ⊆ train, and train ∩ test = ∅.
    pub fn verify(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidDataset(format!("audit check failed: {what}")));
        if self.train_digest != index_digest(&self.train)
            || self.validation_digest != index_digest(&self.validation)
            || self.test_digest != index_digest(&self.test)
        {
            return bad("digest mismatch");
        }
        let train: std::collections::BTreeSet<_> = self.train.iter().collect();
        if self.test.iter().any(|i| train.contains(i)) {
            return bad("train and test overlap");
        }
        if self.validation.iter().any(|i| !train.contains(i)) {
            return bad("validation rows outside train");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SupervisedOutcome {
    pub report: EvaluationReport,
    pub model: MlpModel,
    pub trace: TrainingTrace,
    pub weights: RnWeights,
    pub alpha_hat: f64,
    pub split: SplitIndices,
    pub audit: Audit,
    /// Anomaly scores of the test rows, in `split.test` order.
    pub test_scores: Vec<f64>,
    /// Set when the validation rows held one class and 0.5 was used instead.
    pub threshold_fallback: bool,
}

/// Split, train on the training rows with RN weights (`weighted`) or unit
/// weights, pick the TPR − FPR threshold on the validation carve-out, and
/// report on the test rows.
pub fn run_supervised(dataset: &Dataset, config: &TrainConfig, seed: u64, weighted: bool) -> Result<SupervisedOutcome> {
    let split = paper_split(dataset, seed)?;
    let (train_x, train_y) = dataset.select(&split.train);
    if train_y.len() < 2 {
        return Err(Error::InvalidDataset(format!(
            "training split has {} rows; at least 2 are needed",
            train_y.len()
        )));
    }
    if split.test.is_empty() {
        return Err(Error::InvalidDataset("test split is empty".into()));
    }
    let alpha_hat = estimate_alpha(&train_y)?;
    if !train_y.iter().any(|l| l.is_anomaly()) {
        log::warn!("training split has no anomalies; alpha is clamped to {alpha_hat}");
    }
    let weights = if weighted {
        RnWeights::normalized(alpha_hat)?
    } else {
        RnWeights::unit()
    };
    let train_config = TrainConfig {
        seed: seed::sub_seed(seed, "train"),
        ..config.clone()
    };
    let (model, trace) = train(train_x.view(), &train_y, &train_config, &weights)?;

    let validation: Vec<usize> = trace.validation_rows.iter().map(|&i| split.train[i]).collect();
    let (val_x, val_y) = dataset.select(&validation);
    let val_scores = predict_scores(&model, val_x.view())?;
    let (threshold, threshold_fallback) = match optimal_threshold_in(&val_scores, &val_y, PROBABILITY_THRESHOLD_RANGE) {
        Ok(t) => (t, false),
        Err(Error::SingleClass(_)) | Err(Error::Empty(_)) => {
            log::warn!("validation rows hold a single class; using threshold 0.5");
            (0.5, true)
        }
        Err(e) => return Err(e),
    };

    let (test_x, test_y) = dataset.select(&split.test);
    let test_scores = predict_scores(&model, test_x.view())?;
    let report = report(&test_scores, &test_y, threshold)?;
    let audit = Audit::new(split.train.clone(), validation, split.test.clone());
    Ok(SupervisedOutcome {
        report,
        model,
        trace,
        weights,
        alpha_hat,
        split,
        audit,
        test_scores,
        threshold_fallback,
    })
}

#[derive(Clone, Debug)]
pub struct UnsupervisedOutcome {
    pub report: EvaluationReport,
    pub detector: Detector,
    pub standardizer: Standardizer,
    pub points: Vec<ScoredPoint>,
}

/// Standardize every row, cluster, score every row with `variant` and report
/// at the TPR − FPR optimal threshold. Labels are used only for the threshold
/// and the report.
pub fn run_unsupervised(
    dataset: &Dataset,
    config: &UnsupervisedConfig,
    variant: Variant,
    seed: u64,
) -> Result<UnsupervisedOutcome> {
    let standardizer = Standardizer::fit_all(dataset.features())?;
    let z = standardizer.apply(dataset.features())?;
    let detector = Detector::fit(z.view(), config, variant, seed::sub_seed(seed, "cluster"))?;
    let points = detector.score_points(z.view())?;
    let scores: Vec<f64> = points.iter().map(|p| p.corrected).collect();
    let labels = dataset.labels();
    let threshold = match optimal_threshold(&scores, labels) {
        Ok(t) => t,
        Err(Error::SingleClass(only)) => {
            // with one class any threshold is as good; flag nothing
            log::warn!("dataset holds only {only:?} rows; threshold set above every score");
            scores.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0
        }
        Err(e) => return Err(e),
    };
    let report = report(&scores, labels, threshold)?;
    Ok(UnsupervisedOutcome {
        report,
        detector,
        standardizer,
        points,
    })
}

/// Rows flagged anomalous at `threshold`.
pub fn flagged(scores: &[f64], threshold: f64) -> Vec<Label> {
    scores
        .iter()
        .map(|&s| if s >= threshold { Label::Anomaly } else { Label::Inline })
        .collect()
}
