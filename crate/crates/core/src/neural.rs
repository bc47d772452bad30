//! RN-Net: a one-hidden-layer ReLU network with a sigmoid output, trained by
//! mini-batch Adam on the class-weighted binary cross-entropy.
//!
//! The output is the probability of the inline class. Anomaly scores are
//! `1 − p`, so that larger means more anomalous.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{stratified_holdout, Label, Standardizer};
use crate::error::{Error, Result};
use crate::eval::balanced_risk_at;
use crate::rn::{bce_term, RnWeights};
use crate::seed;

pub const HIDDEN_UNITS: usize = 64;
const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub lr_halving_every: usize,
    pub lr_floor: f64,
    pub patience: usize,
    pub dropout_p: f64,
    pub l2_lambda: f64,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub val_fraction: f64,
    pub hidden_units: usize,
    pub batch_norm: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            lr0: 1e-3,
            lr_halving_every: 5,
            lr_floor: 1e-6,
            patience: 10,
            dropout_p: 0.2,
            l2_lambda: 1e-4,
            batch_size: 256,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            val_fraction: 0.1,
            hidden_units: HIDDEN_UNITS,
            batch_norm: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |name, reason: &str| Err(Error::param(name, reason));
        if self.epochs < 1 {
            return fail("epochs", "must be at least 1");
        }
        if self.batch_size < 1 {
            return fail("batch_size", "must be at least 1");
        }
        if self.hidden_units < 1 {
            return fail("hidden_units", "must be at least 1");
        }
        if self.lr_halving_every < 1 {
            return fail("lr_halving_every", "must be at least 1");
        }
        if !(self.lr_floor > 0.0 && self.lr_floor <= self.lr0) {
            return fail("lr_floor", "need 0 < lr_floor <= lr0");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return fail("dropout_p", "must lie in [0, 1)");
        }
        if !(self.l2_lambda >= 0.0) {
            return fail("l2_lambda", "must be non-negative");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return fail("val_fraction", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return fail("adam_beta", "betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return fail("adam_eps", "must be positive");
        }
        Ok(())
    }

    /// `max(lr0 · 0.5^⌊epoch / every⌋, lr_floor)`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let halvings = (epoch / self.lr_halving_every).min(i32::MAX as usize) as i32;
        (self.lr0 * 0.5f64.powi(halvings)).max(self.lr_floor)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn new(h: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; h],
            beta: vec![0.0; h],
            running_mean: vec![0.0; h],
            running_var: vec![1.0; h],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    /// d × hidden
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
    pub batch_norm: Option<BatchNorm>,
    pub standardizer: Standardizer,
}

/// Same shapes as the trainable parameters of an [`MlpModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        let bn = model.batch_norm.as_ref().map_or(0, |b| b.gamma.len());
        Gradients {
            w1: Array2::zeros(model.w1.raw_dim()),
            b1: Array1::zeros(model.b1.len()),
            w2: Array1::zeros(model.w2.len()),
            b2: 0.0,
            bn_gamma: vec![0.0; bn],
            bn_beta: vec![0.0; bn],
        }
    }

    fn slices(&self) -> Vec<&[f64]> {
        vec![
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            std::slice::from_ref(&self.b2),
            &self.bn_gamma,
            &self.bn_beta,
        ]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            std::slice::from_mut(&mut self.b2),
            &mut self.bn_gamma,
            &mut self.bn_beta,
        ]
    }

    /// All components in a fixed order: w1 (row-major), b1, w2, b2, then the
    /// batch-norm scale and shift when present.
    pub fn flatten(&self) -> Vec<f64> {
        self.slices().into_iter().flatten().copied().collect()
    }
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

impl MlpModel {
    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden_units(&self) -> usize {
        self.w1.ncols()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            std::slice::from_mut(&mut self.b2),
        ];
        match self.batch_norm.as_mut() {
            Some(bn) => {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
            None => {
                out.push(&mut []);
                out.push(&mut []);
            }
        }
        out
    }

    fn param_count(&self) -> usize {
        let bn = self.batch_norm.as_ref().map_or(0, |b| 2 * b.gamma.len());
        self.w1.len() + self.b1.len() + self.w2.len() + 1 + bn
    }

    fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for s in self.param_slices_mut() {
            if k < s.len() {
                return &mut s[k];
            }
            k -= s.len();
        }
        panic!("parameter index out of range")
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(&self.b1).chain(&self.w2).all(|v| v.is_finite())
            && self.b2.is_finite()
            && self
                .batch_norm
                .as_ref()
                .is_none_or(|bn| bn.gamma.iter().chain(&bn.beta).all(|v| v.is_finite()))
    }

    fn sum_sq_weights(&self) -> f64 {
        self.w1.iter().chain(&self.w2).map(|v| v * v).sum()
    }

    /// Output logit for an already standardized row, using running batch-norm
    /// statistics.
    fn logit_standardized(&self, z: ArrayView1<'_, f64>, mask: Option<&[f64]>) -> f64 {
        let h = self.hidden_units();
        let mut a = self.b2;
        for k in 0..h {
            let mut pre = self.b1[k];
            for (j, &zj) in z.iter().enumerate() {
                pre += self.w1[[j, k]] * zj;
            }
            if let Some(bn) = &self.batch_norm {
                pre = bn.gamma[k] * (pre - bn.running_mean[k]) / (bn.running_var[k] + BN_EPS).sqrt() + bn.beta[k];
            }
            let mut act = pre.max(0.0);
            if let Some(m) = mask {
                act *= m[k];
            }
            a += self.w2[k] * act;
        }
        a
    }

    fn logit(&self, x: &[f64], mask: Option<&[f64]>) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if let Some(m) = mask {
            if m.len() != self.hidden_units() {
                return Err(Error::DimensionMismatch {
                    expected: self.hidden_units(),
                    got: m.len(),
                });
            }
        }
        let mut z = vec![0.0; x.len()];
        self.standardizer.apply_row(x, &mut z)?;
        Ok(self.logit_standardized(ArrayView1::from(&z), mask))
    }
}

/// Glorot-uniform weights, zero biases, identity standardizer.
pub fn init_model(d: usize, seed: u64) -> Result<MlpModel> {
    init_model_with(d, HIDDEN_UNITS, false, seed)
}

pub fn init_model_with(d: usize, hidden: usize, batch_norm: bool, seed: u64) -> Result<MlpModel> {
    if d < 1 {
        return Err(Error::param("d", "input dimension must be at least 1"));
    }
    if hidden < 1 {
        return Err(Error::param("hidden_units", "must be at least 1"));
    }
    let mut rng = seed::rng(seed);
    let r1 = (6.0 / (d + hidden) as f64).sqrt();
    let r2 = (6.0 / (hidden + 1) as f64).sqrt();
    let w1 = Array2::from_shape_simple_fn((d, hidden), || rng.random_range(-r1..r1));
    let w2 = Array1::from_shape_simple_fn(hidden, || rng.random_range(-r2..r2));
    Ok(MlpModel {
        w1,
        b1: Array1::zeros(hidden),
        w2,
        b2: 0.0,
        batch_norm: batch_norm.then(|| BatchNorm::new(hidden)),
        standardizer: Standardizer::identity(d),
    })
}

/// Inverted-dropout multipliers: 0 with probability `p`, else `1/(1 − p)`.
pub fn dropout_mask(hidden: usize, p: f64, rng: &mut seed::Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..hidden)
        .map(|_| if p > 0.0 && rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

/// Probability of the inline class for raw (unstandardized) features.
pub fn forward(model: &MlpModel, x: &[f64], dropout_mask: Option<&[f64]>) -> Result<f64> {
    model.logit(x, dropout_mask).map(sigmoid)
}

/// Anomaly scores `1 − p(inline)`, one per row.
pub fn predict_scores(model: &MlpModel, features: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    if features.ncols() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: features.ncols(),
        });
    }
    let z = model.standardizer.apply(features)?;
    // σ(−a) = 1 − σ(a), without the cancellation near p = 1
    Ok(z.rows()
        .into_iter()
        .map(|row| sigmoid(-model.logit_standardized(row, None)))
        .collect())
}

fn predict_inline_probs_standardized(model: &MlpModel, z: ArrayView2<'_, f64>) -> Vec<f64> {
    z.rows()
        .into_iter()
        .map(|row| sigmoid(model.logit_standardized(row, None)))
        .collect()
}

/// Intermediate values of a training-mode forward pass over one batch.
struct BatchForward {
    /// normalized pre-activations (batch norm only)
    zhat: Option<Array2<f64>>,
    inv_std: Option<Array1<f64>>,
    batch_mean: Option<Array1<f64>>,
    batch_var: Option<Array1<f64>>,
    /// pre-activations fed into the ReLU
    pre: Array2<f64>,
    /// post-ReLU activations after the dropout mask
    act: Array2<f64>,
    probs: Vec<f64>,
}

fn batch_forward(model: &MlpModel, x: ArrayView2<'_, f64>, masks: Option<&Array2<f64>>) -> BatchForward {
    let b = x.nrows();
    let mut pre = x.dot(&model.w1) + &model.b1;
    let (mut zhat, mut inv_std, mut batch_mean, mut batch_var) = (None, None, None, None);
    if let Some(bn) = &model.batch_norm {
        let mean = pre.mean_axis(Axis(0)).expect("non-empty batch");
        let centered = &pre - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / b as f64;
        let istd = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let zh = &centered * &istd;
        let gamma = ArrayView1::from(&bn.gamma);
        let beta = ArrayView1::from(&bn.beta);
        pre = &zh * &gamma + beta;
        zhat = Some(zh);
        inv_std = Some(istd);
        batch_mean = Some(mean);
        batch_var = Some(var);
    }
    let mut act = pre.mapv(|v| v.max(0.0));
    if let Some(m) = masks {
        act *= m;
    }
    let logits = act.dot(&model.w2) + model.b2;
    let probs = logits.iter().map(|&a| sigmoid(a)).collect();
    BatchForward {
        zhat,
        inv_std,
        batch_mean,
        batch_var,
        pre,
        act,
        probs,
    }
}

/// Weighted BCE of one batch in training mode plus the L2 penalty.
fn batch_loss(
    model: &MlpModel,
    x: ArrayView2<'_, f64>,
    labels: &[Label],
    weights: &RnWeights,
    l2: f64,
    masks: Option<&Array2<f64>>,
) -> f64 {
    let fwd = batch_forward(model, x, masks);
    let data: f64 = fwd
        .probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| weights.weight(y) * bce_term(p, y))
        .sum::<f64>()
        / labels.len() as f64;
    data + l2 * model.sum_sq_weights()
}

/// Analytic gradient of [`batch_loss`]. The output-layer error uses the
/// logit form `w·(p − t)/n`, which is the exact derivative whenever the
/// probability clip is inactive.
fn batch_gradients(
    model: &MlpModel,
    x: ArrayView2<'_, f64>,
    labels: &[Label],
    weights: &RnWeights,
    l2: f64,
    masks: Option<&Array2<f64>>,
) -> (Gradients, BatchForward) {
    let b = labels.len();
    let fwd = batch_forward(model, x, masks);
    let delta_out: Array1<f64> = fwd
        .probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| weights.weight(y) / b as f64 * (p - f64::from(y.inline_bit())))
        .collect();

    let mut g = Gradients::zeros_like(model);
    g.w2 = fwd.act.t().dot(&delta_out);
    g.b2 = delta_out.sum();

    // δ at the ReLU output, then through the ReLU and the dropout mask
    let mut delta = delta_out
        .view()
        .insert_axis(Axis(1))
        .dot(&model.w2.view().insert_axis(Axis(0)));
    if let Some(m) = masks {
        delta *= m;
    }
    ndarray::Zip::from(&mut delta).and(&fwd.pre).for_each(|d, &p| {
        if p <= 0.0 {
            *d = 0.0;
        }
    });

    if let (Some(bn), Some(zhat), Some(istd)) = (&model.batch_norm, &fwd.zhat, &fwd.inv_std) {
        g.bn_gamma = (&delta * zhat).sum_axis(Axis(0)).to_vec();
        g.bn_beta = delta.sum_axis(Axis(0)).to_vec();
        let dzhat = &delta * &ArrayView1::from(&bn.gamma);
        let sum_dz = dzhat.sum_axis(Axis(0));
        let sum_dz_z = (&dzhat * zhat).sum_axis(Axis(0));
        let bf = b as f64;
        let mut dpre = &dzhat * bf - &sum_dz;
        dpre -= &(zhat * &sum_dz_z);
        delta = dpre * &(istd / bf);
    }

    g.w1.assign(&x.t().dot(&delta));
    g.b1 = delta.sum_axis(Axis(0));
    if l2 > 0.0 {
        g.w1.scaled_add(2.0 * l2, &model.w1);
        g.w2.scaled_add(2.0 * l2, &model.w2);
    }
    (g, fwd)
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(model: &MlpModel, config: &TrainConfig) -> Self {
        Adam {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            t: 0,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_eps,
        }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &Gradients, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let params = model.param_slices_mut();
        let ms = self.m.slices_mut();
        let vs = self.v.slices_mut();
        for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(grads.slices()) {
            for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_balanced_risk: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Rows (indices into the training matrix) held out for monitoring.
    pub validation_rows: Vec<usize>,
    /// Rows the parameters were fitted on.
    pub fit_rows: Vec<usize>,
}

impl TrainingTrace {
    pub fn best_val_balanced_risk(&self) -> f64 {
        self.epochs[self.best_epoch].val_balanced_risk
    }

    /// `epoch,lr,train_loss,val_balanced_risk` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.epochs {
            w.serialize(r)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Trains a fresh model on `features`/`labels`.
///
/// A stratified `val_fraction` of the rows is held out to monitor balanced
/// risk at threshold 0.5; the standardizer is fitted on the remaining rows.
/// Training stops once the monitor has not improved for `patience` epochs and
/// the best-monitor parameters are restored (ties go to the later epoch).
pub fn train(
    features: ArrayView2<'_, f64>,
    labels: &[Label],
    config: &TrainConfig,
    weights: &RnWeights,
) -> Result<(MlpModel, TrainingTrace)> {
    config.validate()?;
    let n = labels.len();
    if features.nrows() != n {
        return Err(Error::LengthMismatch {
            left: features.nrows(),
            right: n,
        });
    }
    if n < 2 {
        return Err(Error::InvalidDataset(format!(
            "training needs at least 2 rows, got {n}"
        )));
    }
    let all: Vec<usize> = (0..n).collect();
    let (fit_rows, val_rows) =
        stratified_holdout(&all, labels, config.val_fraction, seed::sub_seed(config.seed, "val"));
    let monitor_rows = if val_rows.is_empty() {
        fit_rows.clone()
    } else {
        val_rows.clone()
    };

    let standardizer = Standardizer::fit(features, &fit_rows)?;
    let z = standardizer.apply(features)?;
    let z_fit = z.select(Axis(0), &fit_rows);
    let y_fit: Vec<Label> = fit_rows.iter().map(|&i| labels[i]).collect();
    let z_mon = z.select(Axis(0), &monitor_rows);
    let y_mon: Vec<Label> = monitor_rows.iter().map(|&i| labels[i]).collect();

    let mut model = init_model_with(
        features.ncols(),
        config.hidden_units,
        config.batch_norm,
        seed::sub_seed(config.seed, "init"),
    )?;
    model.standardizer = standardizer;
    let hidden = model.hidden_units();

    let mut adam = Adam::new(&model, config);
    let mut shuffle_rng = seed::rng(seed::sub_seed(config.seed, "shuffle"));
    let mut dropout_rng = seed::rng(seed::sub_seed(config.seed, "dropout"));
    let mut order: Vec<usize> = (0..fit_rows.len()).collect();

    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, MlpModel)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            let xb = z_fit.select(Axis(0), chunk);
            let yb: Vec<Label> = chunk.iter().map(|&i| y_fit[i]).collect();
            let masks = (config.dropout_p > 0.0).then(|| {
                let mut m = Array2::zeros((chunk.len(), hidden));
                for mut row in m.rows_mut() {
                    row.assign(&Array1::from(dropout_mask(hidden, config.dropout_p, &mut dropout_rng)));
                }
                m
            });
            let (grads, fwd) = batch_gradients(&model, xb.view(), &yb, weights, config.l2_lambda, masks.as_ref());
            if let (Some(bn), Some(mean), Some(var)) = (model.batch_norm.as_mut(), &fwd.batch_mean, &fwd.batch_var) {
                let bf = chunk.len() as f64;
                for k in 0..hidden {
                    let unbiased = if chunk.len() > 1 {
                        var[k] * bf / (bf - 1.0)
                    } else {
                        var[k]
                    };
                    bn.running_mean[k] = (1.0 - BN_MOMENTUM) * bn.running_mean[k] + BN_MOMENTUM * mean[k];
                    bn.running_var[k] = (1.0 - BN_MOMENTUM) * bn.running_var[k] + BN_MOMENTUM * unbiased;
                }
            }
            adam.step(&mut model, &grads, lr);
        }
        if !model.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }

        let probs = predict_inline_probs_standardized(&model, z_fit.view());
        let data_loss = crate::rn::weighted_bce(&probs, &y_fit, weights)?;
        let train_loss = data_loss + config.l2_lambda * model.sum_sq_weights();
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let mon_scores: Vec<f64> = predict_inline_probs_standardized(&model, z_mon.view())
            .into_iter()
            .map(|p| 1.0 - p)
            .collect();
        let val_risk = balanced_risk_at(&mon_scores, &y_mon, 0.5);
        records.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_balanced_risk: val_risk,
        });

        match &best {
            Some((b, _, _)) if val_risk > *b => {
                since_best += 1;
                if since_best >= config.patience {
                    stopped_early = epoch + 1 < config.epochs;
                    break;
                }
            }
            _ => {
                best = Some((val_risk, epoch, model.clone()));
                since_best = 0;
            }
        }
    }

    let (_, best_epoch, best_model) = best.expect("at least one epoch ran");
    let trace = TrainingTrace {
        epochs: records,
        best_epoch,
        stopped_early,
        validation_rows: val_rows,
        fit_rows,
    };
    Ok((best_model, trace))
}

/// Largest relative gap between analytic and central-difference gradients
/// (step 1e-5) over every trainable parameter, with dropout off and no L2.
/// The relative error of one component is `|a − f| / max(|a|, |f|, 1e-6)`.
pub fn gradient_check(
    model: &MlpModel,
    features: ArrayView2<'_, f64>,
    labels: &[Label],
    weights: &RnWeights,
) -> Result<f64> {
    gradient_check_with_l2(model, features, labels, weights, 0.0)
}

pub fn gradient_check_with_l2(
    model: &MlpModel,
    features: ArrayView2<'_, f64>,
    labels: &[Label],
    weights: &RnWeights,
    l2: f64,
) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty("gradient check batch"));
    }
    if features.nrows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: features.nrows(),
            right: labels.len(),
        });
    }
    let z = model.standardizer.apply(features)?;
    let (analytic, _) = batch_gradients(model, z.view(), labels, weights, l2, None);
    let analytic = analytic.flatten();
    let h = 1e-5;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (k, &a) in analytic.iter().enumerate().take(model.param_count()) {
        let orig = *probe.param_mut(k);
        *probe.param_mut(k) = orig + h;
        let up = batch_loss(&probe, z.view(), labels, weights, l2, None);
        *probe.param_mut(k) = orig - h;
        let down = batch_loss(&probe, z.view(), labels, weights, l2, None);
        *probe.param_mut(k) = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// On-disk form of a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub d: usize,
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_norm: Option<BatchNorm>,
    pub standardizer: Standardizer,
    pub config_digest: String,
}

impl MlpModel {
    pub fn to_document(&self, config_digest: impl Into<String>) -> ModelDocument {
        ModelDocument {
            d: self.input_dim(),
            w1: self.w1.rows().into_iter().map(|r| r.to_vec()).collect(),
            b1: self.b1.to_vec(),
            w2: self.w2.to_vec(),
            b2: self.b2,
            batch_norm: self.batch_norm.clone(),
            standardizer: self.standardizer.clone(),
            config_digest: config_digest.into(),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        let h = doc.b1.len();
        if doc.w1.len() != doc.d
            || doc.w1.iter().any(|r| r.len() != h)
            || doc.w2.len() != h
            || doc.standardizer.dim() != doc.d
        {
            return Err(Error::InvalidDataset("model document has inconsistent shapes".into()));
        }
        let flat: Vec<f64> = doc.w1.iter().flatten().copied().collect();
        let model = MlpModel {
            w1: Array2::from_shape_vec((doc.d, h), flat).map_err(|e| Error::InvalidDataset(e.to_string()))?,
            b1: Array1::from(doc.b1.clone()),
            w2: Array1::from(doc.w2.clone()),
            b2: doc.b2,
            batch_norm: doc.batch_norm.clone(),
            standardizer: doc.standardizer.clone(),
        };
        if !model.is_finite() {
            return Err(Error::InvalidDataset("model document has non-finite parameters".into()));
        }
        Ok(model)
    }
}
