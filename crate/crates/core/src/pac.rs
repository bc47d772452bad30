//! Synthetic contaminated mixtures and the empirical learnability study.
//!
//! Training samples come from `D^α = (1 − α)·D_I + α·D_A`; risk is measured
//! under the balanced mixture `D^0.5`, estimated by stratified sampling (equal
//! draws from `D_I` and `D_A`). Importance weighting a `D^α` sample by the
//! analytic density ratio gives a second estimate of the same quantity.

use ndarray::{Array2, ArrayView1};
use rand::Rng as _;
use rand_distr::Distribution as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::Continuous;

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::eval::{optimal_threshold_in, Confusion, PROBABILITY_THRESHOLD_RANGE};
use crate::neural::{predict_scores, train, MlpModel, TrainConfig};
use crate::rn::{estimate_alpha, rn_derivative, ClassConditional, Density, RnDerivativeSpec, RnWeights};
use crate::seed;

/// Minimum total size of the balanced evaluation sample.
pub const MIN_EVAL_SIZE: usize = 20_000;

/// One-dimensional distribution family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Gaussian { mean: f64, sd: f64 },
    Weibull { shape: f64, scale: f64 },
    Lognormal { mu: f64, sigma: f64 },
}

impl Family {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Family::Gaussian { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Family::Weibull { shape, scale } => shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite(),
            Family::Lognormal { mu, sigma } => mu.is_finite() && sigma > 0.0 && sigma.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param("distribution", format!("invalid parameters {self:?}")))
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Family::Gaussian { mean, sd } => statrs::distribution::Normal::new(mean, sd)
                .expect("validated")
                .ln_pdf(x),
            Family::Weibull { shape, scale } => statrs::distribution::Weibull::new(shape, scale)
                .expect("validated")
                .ln_pdf(x),
            Family::Lognormal { mu, sigma } => statrs::distribution::LogNormal::new(mu, sigma)
                .expect("validated")
                .ln_pdf(x),
        }
    }

    pub fn sample(&self, rng: &mut seed::Rng) -> f64 {
        match *self {
            Family::Gaussian { mean, sd } => rand_distr::Normal::new(mean, sd).expect("validated").sample(rng),
            Family::Weibull { shape, scale } => rand_distr::Weibull::new(scale, shape).expect("validated").sample(rng),
            Family::Lognormal { mu, sigma } => rand_distr::LogNormal::new(mu, sigma).expect("validated").sample(rng),
        }
    }
}

/// Product of independent per-dimension families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DistSpec(pub Vec<Family>);

impl DistSpec {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn ln_pdf(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(f, &v)| f.ln_pdf(v)).sum()
    }

    pub fn sample_into(&self, rng: &mut seed::Rng, out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.0) {
            *o = f.sample(rng);
        }
    }
}

impl Density for DistSpec {
    fn density(&self, x: &[f64]) -> f64 {
        self.ln_pdf(x).exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub inline: DistSpec,
    pub anomaly: DistSpec,
    pub alpha: f64,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.inline.dim() == 0 || self.inline.dim() != self.anomaly.dim() {
            return Err(Error::param(
                "mixture",
                format!(
                    "dimensions {} and {} must match and be positive",
                    self.inline.dim(),
                    self.anomaly.dim()
                ),
            ));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::param("alpha", format!("{} is outside [0, 1)", self.alpha)));
        }
        for f in self.inline.0.iter().chain(&self.anomaly.0) {
            f.validate()?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.inline.dim()
    }

    /// Unit-variance Gaussians, inline at −2 and anomalies at +2.
    pub fn gauss_easy(alpha: f64) -> Self {
        Self::gauss_pair(-2.0, 2.0, alpha)
    }

    /// Unit-variance Gaussians at ∓0.5.
    pub fn gauss_hard(alpha: f64) -> Self {
        Self::gauss_pair(-0.5, 0.5, alpha)
    }

    fn gauss_pair(inline_mean: f64, anomaly_mean: f64, alpha: f64) -> Self {
        MixtureSpec {
            inline: DistSpec(vec![Family::Gaussian {
                mean: inline_mean,
                sd: 1.0,
            }]),
            anomaly: DistSpec(vec![Family::Gaussian {
                mean: anomaly_mean,
                sd: 1.0,
            }]),
            alpha,
        }
    }

    /// Weibull(shape 2, scale 1) inline data against log-normal(1, 0.5) anomalies.
    pub fn weibull_vs_lognormal(alpha: f64) -> Self {
        MixtureSpec {
            inline: DistSpec(vec![Family::Weibull { shape: 2.0, scale: 1.0 }]),
            anomaly: DistSpec(vec![Family::Lognormal { mu: 1.0, sigma: 0.5 }]),
            alpha,
        }
    }

    pub fn preset(name: &str, alpha: f64) -> Result<Self> {
        match name {
            "gauss-easy" => Ok(Self::gauss_easy(alpha)),
            "gauss-hard" => Ok(Self::gauss_hard(alpha)),
            "weibull-vs-lognormal" => Ok(Self::weibull_vs_lognormal(alpha)),
            other => Err(Error::param("preset", format!("unknown preset `{other}`"))),
        }
    }

    pub fn dist(&self, label: Label) -> &DistSpec {
        match label {
            Label::Inline => &self.inline,
            Label::Anomaly => &self.anomaly,
        }
    }

    /// Exact density ratio with class-conditional densities. Needs `α > 0`.
    pub fn rn_spec(&self) -> Result<RnDerivativeSpec<ClassConditional<DistSpec>, ClassConditional<DistSpec>>> {
        RnDerivativeSpec::new(
            self.alpha,
            ClassConditional {
                density: self.inline.clone(),
                class: Label::Inline,
            },
            ClassConditional {
                density: self.anomaly.clone(),
                class: Label::Anomaly,
            },
        )
    }
}

/// `n` rows, each anomalous with probability `alpha`.
pub fn sample_mixture(spec: &MixtureSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n < 1 {
        return Err(Error::param("n", "need at least one row"));
    }
    let d = spec.dim();
    let mut rng = seed::rng(seed);
    let mut x = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for mut row in x.rows_mut() {
        let label = if rng.random::<f64>() < spec.alpha {
            Label::Anomaly
        } else {
            Label::Inline
        };
        spec.dist(label)
            .sample_into(&mut rng, row.as_slice_mut().expect("standard layout"));
        labels.push(label);
    }
    Dataset::from_parts(x, labels, "mixture")
}

/// `n` rows from one class only.
pub fn sample_class(spec: &MixtureSpec, label: Label, n: usize, seed: u64) -> Result<Array2<f64>> {
    spec.validate()?;
    let mut rng = seed::rng(seed);
    let mut x = Array2::zeros((n, spec.dim()));
    for mut row in x.rows_mut() {
        spec.dist(label)
            .sample_into(&mut rng, row.as_slice_mut().expect("standard layout"));
    }
    Ok(x)
}

/// `n_per_class` rows from each class, inline rows first.
pub fn sample_balanced(spec: &MixtureSpec, n_per_class: usize, seed: u64) -> Result<Dataset> {
    let xi = sample_class(spec, Label::Inline, n_per_class, seed::sub_seed(seed, "inline"))?;
    let xa = sample_class(spec, Label::Anomaly, n_per_class, seed::sub_seed(seed, "anomaly"))?;
    let x = ndarray::concatenate(ndarray::Axis(0), &[xi.view(), xa.view()])
        .map_err(|e| Error::InvalidDataset(e.to_string()))?;
    let mut labels = vec![Label::Inline; n_per_class];
    labels.extend(std::iter::repeat_n(Label::Anomaly, n_per_class));
    Dataset::from_parts(x, labels, "balanced")
}

/// Maps a feature vector to a predicted class.
pub trait Classifier: Sync {
    fn classify(&self, x: ArrayView1<'_, f64>) -> Result<Label>;

    fn classify_all(&self, data: &Dataset) -> Result<Vec<Label>> {
        data.features().rows().into_iter().map(|r| self.classify(r)).collect()
    }
}

pub struct AlwaysInline;

impl Classifier for AlwaysInline {
    fn classify(&self, _x: ArrayView1<'_, f64>) -> Result<Label> {
        Ok(Label::Inline)
    }
}

/// Anomaly iff `x[dim] >= threshold` (or `<=` when `anomaly_above` is false).
pub struct ThresholdRule {
    pub dim: usize,
    pub threshold: f64,
    pub anomaly_above: bool,
}

impl Classifier for ThresholdRule {
    fn classify(&self, x: ArrayView1<'_, f64>) -> Result<Label> {
        let v = *x.get(self.dim).ok_or(Error::DimensionMismatch {
            expected: self.dim + 1,
            got: x.len(),
        })?;
        let hit = if self.anomaly_above {
            v >= self.threshold
        } else {
            v <= self.threshold
        };
        Ok(if hit { Label::Anomaly } else { Label::Inline })
    }
}

/// Balanced Bayes rule: anomaly iff `p_A(x) > p_I(x)`.
pub struct BayesRule<'a>(pub &'a MixtureSpec);

impl Classifier for BayesRule<'_> {
    fn classify(&self, x: ArrayView1<'_, f64>) -> Result<Label> {
        let x = x.to_vec();
        let diff = self.0.anomaly.ln_pdf(&x) - self.0.inline.ln_pdf(&x);
        Ok(if diff > 0.0 { Label::Anomaly } else { Label::Inline })
    }
}

/// A trained network thresholded on its anomaly score.
pub struct NeuralClassifier<'a> {
    pub model: &'a MlpModel,
    pub threshold: f64,
}

impl Classifier for NeuralClassifier<'_> {
    fn classify(&self, x: ArrayView1<'_, f64>) -> Result<Label> {
        let p = crate::neural::forward(self.model, x.as_slice().unwrap_or(&x.to_vec()), None)?;
        Ok(if 1.0 - p >= self.threshold {
            Label::Anomaly
        } else {
            Label::Inline
        })
    }

    fn classify_all(&self, data: &Dataset) -> Result<Vec<Label>> {
        let scores = predict_scores(self.model, data.features())?;
        Ok(scores
            .into_iter()
            .map(|s| {
                if s >= self.threshold {
                    Label::Anomaly
                } else {
                    Label::Inline
                }
            })
            .collect())
    }
}

/// Mean and standard error of an estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            se: (var / n).sqrt(),
        }
    }

    fn proportion(errors: usize, n: usize) -> Self {
        let p = errors as f64 / n as f64;
        Estimate {
            mean: p,
            se: (p * (1.0 - p) / n as f64).sqrt(),
        }
    }

    /// Whether `self` and `other` differ by at most `k` combined standard errors.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        (self.mean - other.mean).abs() <= k * (self.se * self.se + other.se * other.se).sqrt()
    }
}

fn error_count(h: &dyn Classifier, data: &Dataset) -> Result<usize> {
    let pred = h.classify_all(data)?;
    Ok(pred.iter().zip(data.labels()).filter(|(p, y)| p != y).count())
}

/// `0.5·err(D_I) + 0.5·err(D_A)` from `n_per_class` fresh draws of each class.
pub fn stratified_balanced_risk(
    spec: &MixtureSpec,
    h: &dyn Classifier,
    n_per_class: usize,
    seed: u64,
) -> Result<Estimate> {
    if n_per_class == 0 {
        return Err(Error::param("n_per_class", "must be positive"));
    }
    let data = sample_balanced(spec, n_per_class, seed)?;
    let pred = h.classify_all(&data)?;
    let (mut err_i, mut err_a) = (0, 0);
    for (p, y) in pred.iter().zip(data.labels()) {
        if p != y {
            match y {
                Label::Inline => err_i += 1,
                Label::Anomaly => err_a += 1,
            }
        }
    }
    let ei = Estimate::proportion(err_i, n_per_class);
    let ea = Estimate::proportion(err_a, n_per_class);
    Ok(Estimate {
        mean: 0.5 * ei.mean + 0.5 * ea.mean,
        se: 0.5 * (ei.se * ei.se + ea.se * ea.se).sqrt(),
    })
}

/// `(1/n)·Σ ℓ(h(xᵢ), yᵢ)·f(xᵢ, yᵢ)` over a fresh `D^α` sample, with the exact
/// density ratio `f` and the 0-1 loss.
pub fn importance_weighted_risk(spec: &MixtureSpec, h: &dyn Classifier, n: usize, seed: u64) -> Result<Estimate> {
    let rn = spec.rn_spec()?;
    let data = sample_mixture(spec, n, seed)?;
    let pred = h.classify_all(&data)?;
    let mut values = Vec::with_capacity(n);
    for (i, (p, &y)) in pred.iter().zip(data.labels()).enumerate() {
        let loss = if *p != y { 1.0 } else { 0.0 };
        let x = data.row(i).to_vec();
        values.push(loss * rn_derivative(&rn, &x, y)?);
    }
    Ok(Estimate::from_values(&values))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskRatio {
    pub r_alpha: Estimate,
    pub r_half: Estimate,
    /// `r_half / r_alpha`; infinite when `r_alpha` is zero.
    pub ratio: f64,
    pub ratio_se: f64,
    /// Set when `r_alpha = 0` and the ratio is reported as infinite.
    pub r_alpha_zero: bool,
    pub alpha_hat: f64,
}

/// Contaminated 0-1 risk on `n_eval` fresh `D^α` rows, balanced risk on
/// `n_eval` fresh rows of each class, and their ratio with a delta-method
/// standard error.
pub fn empirical_risk_ratio(spec: &MixtureSpec, h: &dyn Classifier, n_eval: usize, seed: u64) -> Result<RiskRatio> {
    let mixed = sample_mixture(spec, n_eval, seed::sub_seed(seed, "contaminated"))?;
    let r_alpha = Estimate::proportion(error_count(h, &mixed)?, n_eval);
    let r_half = stratified_balanced_risk(spec, h, n_eval, seed::sub_seed(seed, "balanced"))?;
    let alpha_hat = mixed.n_anomaly() as f64 / n_eval as f64;
    let (ratio, ratio_se, zero) = if r_alpha.mean > 0.0 {
        let ratio = r_half.mean / r_alpha.mean;
        let rel_h = if r_half.mean > 0.0 {
            r_half.se / r_half.mean
        } else {
            0.0
        };
        let rel_a = r_alpha.se / r_alpha.mean;
        (ratio, ratio * (rel_h * rel_h + rel_a * rel_a).sqrt(), false)
    } else {
        (f64::INFINITY, f64::INFINITY, true)
    };
    Ok(RiskRatio {
        r_alpha,
        r_half,
        ratio,
        ratio_se,
        r_alpha_zero: zero,
        alpha_hat,
    })
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Balanced risk of the Bayes rule, when it has a closed form: independent
/// Gaussian coordinates with the same per-dimension spread in both classes, or
/// a one-dimensional Gaussian pair with different spreads.
pub fn bayes_balanced_risk(spec: &MixtureSpec) -> Option<f64> {
    let pairs: Vec<((f64, f64), (f64, f64))> = spec
        .inline
        .0
        .iter()
        .zip(&spec.anomaly.0)
        .map(|(a, b)| match (a, b) {
            (Family::Gaussian { mean: mi, sd: si }, Family::Gaussian { mean: ma, sd: sa }) => {
                Some(((*mi, *si), (*ma, *sa)))
            }
            _ => None,
        })
        .collect::<Option<_>>()?;
    if pairs.iter().all(|((_, si), (_, sa))| si == sa) {
        let delta = pairs
            .iter()
            .map(|((mi, s), (ma, _))| ((ma - mi) / s).powi(2))
            .sum::<f64>()
            .sqrt();
        return Some(normal_cdf(-delta / 2.0));
    }
    if pairs.len() != 1 {
        return None;
    }
    let ((mi, si), (ma, sa)) = pairs[0];
    // sign of ln p_A − ln p_I is the sign of a·x² + b·x + c
    let a = 1.0 / (2.0 * si * si) - 1.0 / (2.0 * sa * sa);
    let b = ma / (sa * sa) - mi / (si * si);
    let c = mi * mi / (2.0 * si * si) - ma * ma / (2.0 * sa * sa) + (si / sa).ln();
    let disc = b * b - 4.0 * a * c;
    let cdf_i = |x: f64| normal_cdf((x - mi) / si);
    let cdf_a = |x: f64| normal_cdf((x - ma) / sa);
    // P(anomaly region) under each class
    let (p_i, p_a) = if disc <= 0.0 {
        if a > 0.0 {
            (1.0, 1.0)
        } else {
            (0.0, 0.0)
        }
    } else {
        let r1 = (-b - disc.sqrt()) / (2.0 * a);
        let r2 = (-b + disc.sqrt()) / (2.0 * a);
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        let inside_i = cdf_i(hi) - cdf_i(lo);
        let inside_a = cdf_a(hi) - cdf_a(lo);
        if a > 0.0 {
            (1.0 - inside_i, 1.0 - inside_a)
        } else {
            (inside_i, inside_a)
        }
    };
    Some(0.5 * p_i + 0.5 * (1.0 - p_a))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainer {
    RnNetWeighted,
    RnNetUnweighted,
}

impl Trainer {
    pub fn weights(self, labels: &[Label]) -> Result<RnWeights> {
        match self {
            Trainer::RnNetWeighted => RnWeights::normalized(estimate_alpha(labels)?),
            Trainer::RnNetUnweighted => Ok(RnWeights::unit()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub spec: MixtureSpec,
    pub train_sizes: Vec<usize>,
    pub seeds_per_point: usize,
    pub trainer: Trainer,
    /// Total size of the balanced evaluation sample, split evenly by class.
    #[serde(default = "default_eval")]
    pub n_eval: usize,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_eval() -> usize {
    MIN_EVAL_SIZE
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.train.validate()?;
        if self.train_sizes.is_empty() || self.train_sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("train_sizes", "must be non-empty and strictly increasing"));
        }
        if self.train_sizes[0] < 2 {
            return Err(Error::param("train_sizes", "every size must be at least 2"));
        }
        if self.seeds_per_point < 3 {
            return Err(Error::param("seeds_per_point", "must be at least 3"));
        }
        if self.n_eval < MIN_EVAL_SIZE {
            return Err(Error::param("n_eval", format!("must be at least {MIN_EVAL_SIZE}")));
        }
        Ok(())
    }
}

/// Raw numbers of one `(n, seed)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub n: usize,
    pub seed_index: usize,
    pub seed: u64,
    pub n_anomaly_train: usize,
    pub w_inline: f64,
    pub w_anomaly: f64,
    pub epochs_run: usize,
    /// Balanced risk at the default threshold 0.5 on the evaluation sample.
    pub balanced_risk: f64,
    pub inline_error: f64,
    pub anomaly_error: f64,
    /// Threshold chosen on the training run's validation rows.
    pub auto_threshold: f64,
    pub recall_at_auto: f64,
    pub balanced_risk_at_auto: f64,
    pub excess_risk: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// closed-form Bayes balanced risk
    Bayes,
    /// lowest balanced risk among cells at the largest sample size
    PlugIn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    pub sample_sizes: Vec<usize>,
    pub mean_excess_risk: Vec<f64>,
    pub stderr: Vec<f64>,
    pub seeds_per_point: usize,
    pub reference_risk: f64,
    pub reference_kind: ReferenceKind,
}

impl RiskCurve {
    /// Steps `i → i+1` where the mean excess rises by more than the pooled
    /// standard error `sqrt(se_i² + se_{i+1}²)`.
    pub fn decay_violations(&self) -> Vec<usize> {
        (0..self.sample_sizes.len().saturating_sub(1))
            .filter(|&i| {
                let pooled = (self.stderr[i].powi(2) + self.stderr[i + 1].powi(2)).sqrt();
                self.mean_excess_risk[i + 1] > self.mean_excess_risk[i] + pooled
            })
            .collect()
    }

    /// `n,mean_excess,stderr` rows with a header.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "mean_excess", "stderr"])?;
        for i in 0..self.sample_sizes.len() {
            w.write_record([
                self.sample_sizes[i].to_string(),
                self.mean_excess_risk[i].to_string(),
                self.stderr[i].to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Trains one detector on a fresh `D^α` sample of size `n` and evaluates it on
/// `eval`.
pub fn run_cell(config: &StudyConfig, eval: &Dataset, n: usize, seed_index: usize) -> Result<StudyCell> {
    let cell_seed = seed::sub_seed_indexed(seed::sub_seed(config.seed, "cell"), &n.to_string(), seed_index as u64);
    let wrap = |e: Error| Error::StudyCell {
        n,
        seed: cell_seed,
        source: Box::new(e),
    };
    let data = sample_mixture(&config.spec, n, seed::sub_seed(cell_seed, "data")).map_err(wrap)?;
    let weights = config.trainer.weights(data.labels()).map_err(wrap)?;
    let train_config = TrainConfig {
        seed: seed::sub_seed(cell_seed, "train"),
        ..config.train.clone()
    };
    let (model, trace) = train(data.features(), data.labels(), &train_config, &weights).map_err(wrap)?;

    let val_rows = &trace.validation_rows;
    let (val_x, val_y) = data.select(val_rows);
    let val_scores = predict_scores(&model, val_x.view()).map_err(wrap)?;
    let auto_threshold = match optimal_threshold_in(&val_scores, &val_y, PROBABILITY_THRESHOLD_RANGE) {
        Ok(t) => t,
        Err(Error::SingleClass(_)) | Err(Error::Empty(_)) => 0.5,
        Err(e) => return Err(wrap(e)),
    };

    let scores = predict_scores(&model, eval.features()).map_err(wrap)?;
    let at_half = Confusion::at(&scores, eval.labels(), 0.5);
    let at_auto = Confusion::at(&scores, eval.labels(), auto_threshold);
    Ok(StudyCell {
        n,
        seed_index,
        seed: cell_seed,
        n_anomaly_train: data.n_anomaly(),
        w_inline: weights.w_inline,
        w_anomaly: weights.w_anomaly,
        epochs_run: trace.epochs.len(),
        balanced_risk: at_half.balanced_risk(),
        inline_error: at_half.fpr(),
        anomaly_error: 1.0 - at_half.recall(),
        auto_threshold,
        recall_at_auto: at_auto.recall(),
        balanced_risk_at_auto: at_auto.balanced_risk(),
        excess_risk: f64::NAN,
    })
}

/// Excess balanced risk against sample size, averaged over seeds.
/// Cells run in parallel; results are ordered by `(n, seed_index)`.
pub fn excess_risk_curve(config: &StudyConfig) -> Result<(RiskCurve, Vec<StudyCell>)> {
    config.validate()?;
    let eval = sample_balanced(&config.spec, config.n_eval / 2, seed::sub_seed(config.seed, "eval"))?;
    let coords: Vec<(usize, usize)> = config
        .train_sizes
        .iter()
        .flat_map(|&n| (0..config.seeds_per_point).map(move |s| (n, s)))
        .collect();
    let mut cells: Vec<StudyCell> = coords
        .par_iter()
        .map(|&(n, s)| run_cell(config, &eval, n, s))
        .collect::<Result<_>>()?;

    let largest = *config.train_sizes.last().expect("validated non-empty");
    let (reference_risk, reference_kind) = match bayes_balanced_risk(&config.spec) {
        Some(r) => (r, ReferenceKind::Bayes),
        None => (
            cells
                .iter()
                .filter(|c| c.n == largest)
                .map(|c| c.balanced_risk)
                .fold(f64::INFINITY, f64::min),
            ReferenceKind::PlugIn,
        ),
    };
    for c in &mut cells {
        c.excess_risk = c.balanced_risk - reference_risk;
    }
    let mut mean_excess_risk = Vec::new();
    let mut stderr = Vec::new();
    for &n in &config.train_sizes {
        let vals: Vec<f64> = cells.iter().filter(|c| c.n == n).map(|c| c.excess_risk).collect();
        let e = Estimate::from_values(&vals);
        mean_excess_risk.push(e.mean);
        stderr.push(e.se);
    }
    Ok((
        RiskCurve {
            sample_sizes: config.train_sizes.clone(),
            mean_excess_risk,
            stderr,
            seeds_per_point: config.seeds_per_point,
            reference_risk,
            reference_kind,
        },
        cells,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_zero_is_all_inline() {
        let d = sample_mixture(&MixtureSpec::gauss_easy(0.0), 500, 1).unwrap();
        assert_eq!(d.n_anomaly(), 0);
    }

    #[test]
    fn anomaly_fraction_concentrates() {
        let n = 10_000;
        let d = sample_mixture(&MixtureSpec::gauss_easy(0.5), n, 2).unwrap();
        let frac = d.n_anomaly() as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((frac - 0.5).abs() < 3.0 * se, "{frac}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = MixtureSpec::weibull_vs_lognormal(0.2);
        assert_eq!(
            sample_mixture(&spec, 300, 5).unwrap(),
            sample_mixture(&spec, 300, 5).unwrap()
        );
        assert_ne!(
            sample_mixture(&spec, 300, 5).unwrap(),
            sample_mixture(&spec, 300, 6).unwrap()
        );
    }

    #[test]
    fn invalid_specs() {
        let mut bad = MixtureSpec::gauss_easy(0.1);
        bad.inline = DistSpec(vec![Family::Gaussian { mean: 0.0, sd: 0.0 }]);
        assert!(sample_mixture(&bad, 10, 0).is_err());
        let mut bad = MixtureSpec::weibull_vs_lognormal(0.1);
        bad.anomaly = DistSpec(vec![Family::Weibull {
            shape: -1.0,
            scale: 1.0,
        }]);
        assert!(bad.validate().is_err());
        assert!(MixtureSpec::gauss_easy(1.0).validate().is_err());
        assert!(MixtureSpec::preset("nope", 0.1).is_err());
        let mut mismatched = MixtureSpec::gauss_easy(0.1);
        mismatched.anomaly.0.push(Family::Gaussian { mean: 0.0, sd: 1.0 });
        assert!(mismatched.validate().is_err());
    }

    #[test]
    fn always_inline_ratio_is_half_over_alpha() {
        let spec = MixtureSpec::gauss_easy(0.1);
        let r = empirical_risk_ratio(&spec, &AlwaysInline, 20_000, 3).unwrap();
        assert_eq!(r.r_half.mean, 0.5);
        assert!((r.r_alpha.mean - r.alpha_hat).abs() < 1e-15);
        assert!((r.ratio - 5.0).abs() < 3.0 * r.ratio_se, "{r:?}");
    }

    #[test]
    fn perfect_classifier_flags_zero_risk() {
        // disjoint supports: inline Weibull on (0, ∞) is never below 0, anomalies far below
        let spec = MixtureSpec {
            inline: DistSpec(vec![Family::Lognormal { mu: 0.0, sigma: 0.3 }]),
            anomaly: DistSpec(vec![Family::Gaussian { mean: -50.0, sd: 1.0 }]),
            alpha: 0.2,
        };
        let h = ThresholdRule {
            dim: 0,
            threshold: 0.0,
            anomaly_above: false,
        };
        let r = empirical_risk_ratio(&spec, &h, 5_000, 4).unwrap();
        assert_eq!(r.r_alpha.mean, 0.0);
        assert_eq!(r.r_half.mean, 0.0);
        assert!(r.r_alpha_zero && r.ratio.is_infinite());
    }

    #[test]
    fn bayes_rule_matches_closed_form() {
        let spec = MixtureSpec::gauss_easy(0.1);
        let phi_m2 = normal_cdf(-2.0);
        assert!((bayes_balanced_risk(&spec).unwrap() - phi_m2).abs() < 1e-15);
        assert!((phi_m2 - 0.022_750_131_948_179_2).abs() < 1e-12, "{phi_m2}");
        let r = stratified_balanced_risk(&spec, &BayesRule(&spec), 50_000, 5).unwrap();
        assert!((r.mean - phi_m2).abs() < 3.0 * r.se, "{r:?}");
    }

    #[test]
    fn unequal_variance_bayes_risk_matches_quadrature() {
        let spec = MixtureSpec {
            inline: DistSpec(vec![Family::Gaussian { mean: 0.0, sd: 1.0 }]),
            anomaly: DistSpec(vec![Family::Gaussian { mean: 1.5, sd: 2.0 }]),
            alpha: 0.1,
        };
        // oracle: 0.5·∫ min(p_I, p_A) dx by the midpoint rule
        let (lo, hi, steps) = (-30.0, 30.0, 600_000);
        let dx = (hi - lo) / steps as f64;
        let integral: f64 = (0..steps)
            .map(|i| {
                let x = [lo + (i as f64 + 0.5) * dx];
                spec.inline.density(&x).min(spec.anomaly.density(&x))
            })
            .sum::<f64>()
            * dx;
        let closed = bayes_balanced_risk(&spec).unwrap();
        assert!((closed - 0.5 * integral).abs() < 1e-8, "{closed} vs {}", 0.5 * integral);
        assert!(bayes_balanced_risk(&MixtureSpec::weibull_vs_lognormal(0.1)).is_none());
    }

    #[test]
    fn curve_shape_and_validation() {
        let config = StudyConfig {
            spec: MixtureSpec::gauss_easy(0.1),
            train_sizes: vec![100, 1000],
            seeds_per_point: 3,
            trainer: Trainer::RnNetWeighted,
            n_eval: MIN_EVAL_SIZE,
            train: TrainConfig {
                epochs: 3,
                ..Default::default()
            },
            seed: 1,
        };
        let (curve, cells) = excess_risk_curve(&config).unwrap();
        assert_eq!(curve.sample_sizes.len(), 2);
        assert_eq!(curve.mean_excess_risk.len(), 2);
        assert_eq!(cells.len(), 6);
        assert!(curve.stderr.iter().all(|&s| s >= 0.0));
        assert_eq!(curve.reference_kind, ReferenceKind::Bayes);

        let mut bad = config.clone();
        bad.seeds_per_point = 2;
        assert!(excess_risk_curve(&bad).is_err());
        let mut bad = config.clone();
        bad.train_sizes = vec![1000, 100];
        assert!(excess_risk_curve(&bad).is_err());
        let mut bad = config;
        bad.n_eval = 100;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn study_is_distribution_agnostic() {
        let config = StudyConfig {
            spec: MixtureSpec::weibull_vs_lognormal(0.1),
            train_sizes: vec![200, 400],
            seeds_per_point: 3,
            trainer: Trainer::RnNetWeighted,
            n_eval: MIN_EVAL_SIZE,
            train: TrainConfig {
                epochs: 4,
                ..Default::default()
            },
            seed: 2,
        };
        let (curve, cells) = excess_risk_curve(&config).unwrap();
        assert_eq!(curve.reference_kind, ReferenceKind::PlugIn);
        assert!(cells.iter().all(|c| c.balanced_risk.is_finite()));
        let again = excess_risk_curve(&config).unwrap();
        assert_eq!(again.1, cells);
    }
}
