//! Supervised Radon–Nikodým weights and the weighted binary cross-entropy.
//!
//! Training data come from the contaminated mixture `(1 − α)·D_I + α·D_A`
//! while evaluation targets the balanced mixture `0.5·D_I + 0.5·D_A`. With
//! class-conditional densities the derivative of the latter with respect to
//! the former only depends on the label: `0.5/(1 − α)` for inline rows and
//! `0.5/α` for anomalies. Pinning the anomaly weight to 1 leaves
//! `α/(1 − α)` on inline rows.

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

/// Lower and upper clamp applied to the estimated contamination ratio.
pub const ALPHA_CLAMP: f64 = 1e-6;
/// Probabilities are clipped to `[PROB_CLIP, 1 − PROB_CLIP]` before taking logs.
pub const PROB_CLIP: f64 = 1e-7;

/// Fraction of anomalies among `labels`, clamped into `[1e-6, 1 − 1e-6]`.
pub fn estimate_alpha(labels: &[Label]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty("labels"));
    }
    let n_anomaly = labels.iter().filter(|l| l.is_anomaly()).count();
    let alpha = n_anomaly as f64 / labels.len() as f64;
    Ok(alpha.clamp(ALPHA_CLAMP, 1.0 - ALPHA_CLAMP))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", format!("{alpha} is outside (0, 1)")));
    }
    Ok(())
}

/// Per-class loss weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnWeights {
    pub w_inline: f64,
    pub w_anomaly: f64,
    pub alpha: f64,
}

impl RnWeights {
    /// Anomaly weight pinned to 1, inline weight `α/(1 − α)`.
    pub fn normalized(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(RnWeights {
            w_inline: alpha / (1.0 - alpha),
            w_anomaly: 1.0,
            alpha,
        })
    }

    /// The derivative itself: `0.5/(1 − α)` and `0.5/α`.
    pub fn unnormalized(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(RnWeights {
            w_inline: 0.5 / (1.0 - alpha),
            w_anomaly: 0.5 / alpha,
            alpha,
        })
    }

    /// Plain, unweighted loss.
    pub fn unit() -> Self {
        RnWeights {
            w_inline: 1.0,
            w_anomaly: 1.0,
            alpha: 0.5,
        }
    }

    pub fn scaled(self, c: f64) -> Self {
        RnWeights {
            w_inline: self.w_inline * c,
            w_anomaly: self.w_anomaly * c,
            alpha: self.alpha,
        }
    }

    pub fn weight(&self, label: Label) -> f64 {
        match label {
            Label::Inline => self.w_inline,
            Label::Anomaly => self.w_anomaly,
        }
    }
}

/// Same as [`RnWeights::normalized`].
pub fn rn_weights(alpha: f64) -> Result<RnWeights> {
    RnWeights::normalized(alpha)
}

/// A density over `(x, y)`.
pub trait JointDensity {
    fn density(&self, x: &[f64], y: Label) -> f64;
}

impl<F: Fn(&[f64], Label) -> f64> JointDensity for F {
    fn density(&self, x: &[f64], y: Label) -> f64 {
        self(x, y)
    }
}

/// A density over `x` alone.
pub trait Density {
    fn density(&self, x: &[f64]) -> f64;
}

/// Lifts a feature density to a joint density that is only live on one class,
/// i.e. `p(x, y) = p(x)·[y = class]`.
#[derive(Clone, Debug)]
pub struct ClassConditional<D> {
    pub density: D,
    pub class: Label,
}

impl<D: Density> JointDensity for ClassConditional<D> {
    fn density(&self, x: &[f64], y: Label) -> f64 {
        if y == self.class {
            self.density.density(x)
        } else {
            0.0
        }
    }
}

/// Ignores the label: `p(x, y) = p(x)`. Evaluating the derivative with two
/// of these gives the mixture form over features only.
#[derive(Clone, Debug)]
pub struct Marginal<D>(pub D);

impl<D: Density> JointDensity for Marginal<D> {
    fn density(&self, x: &[f64], _y: Label) -> f64 {
        self.0.density(x)
    }
}

pub struct RnDerivativeSpec<I, A> {
    pub alpha: f64,
    pub p_inline: I,
    pub p_anomaly: A,
}

impl<I: JointDensity, A: JointDensity> RnDerivativeSpec<I, A> {
    pub fn new(alpha: f64, p_inline: I, p_anomaly: A) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(RnDerivativeSpec {
            alpha,
            p_inline,
            p_anomaly,
        })
    }

    pub fn eval(&self, x: &[f64], y: Label) -> Result<f64> {
        rn_derivative(self, x, y)
    }
}

/// `(0.5·p_I + 0.5·p_A) / ((1 − α)·p_I + α·p_A)` at `(x, y)`.
pub fn rn_derivative<I: JointDensity, A: JointDensity>(
    spec: &RnDerivativeSpec<I, A>,
    x: &[f64],
    y: Label,
) -> Result<f64> {
    let pi = spec.p_inline.density(x, y);
    let pa = spec.p_anomaly.density(x, y);
    let den = (1.0 - spec.alpha) * pi + spec.alpha * pa;
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::DenominatorUnderflow { x: x.to_vec() });
    }
    Ok((0.5 * pi + 0.5 * pa) / den)
}

fn check_inputs(probs: &[f64], labels: &[Label]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probs.len(),
            right: labels.len(),
        });
    }
    if probs.is_empty() {
        return Err(Error::Empty("probabilities"));
    }
    Ok(())
}

fn clip(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// Cross-entropy of one prediction, where `p` is the predicted probability of
/// the inline class.
pub fn bce_term(p: f64, label: Label) -> f64 {
    let p = clip(p);
    match label {
        Label::Inline => -p.ln(),
        Label::Anomaly => -(1.0 - p).ln(),
    }
}

/// Mean binary cross-entropy without weights.
pub fn bce(probs: &[f64], labels: &[Label]) -> Result<f64> {
    check_inputs(probs, labels)?;
    let total: f64 = probs.iter().zip(labels).map(|(&p, &y)| bce_term(p, y)).sum();
    Ok(total / probs.len() as f64)
}

/// `(1/n)·Σ w(yᵢ)·BCE(pᵢ, yᵢ)`.
pub fn weighted_bce(probs: &[f64], labels: &[Label], weights: &RnWeights) -> Result<f64> {
    check_inputs(probs, labels)?;
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| weights.weight(y) * bce_term(p, y))
        .sum();
    Ok(total / probs.len() as f64)
}

/// Derivative of [`weighted_bce`] with respect to each probability.
pub fn weighted_bce_grad(probs: &[f64], labels: &[Label], weights: &RnWeights) -> Result<Vec<f64>> {
    check_inputs(probs, labels)?;
    let n = probs.len() as f64;
    Ok(probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clip(p);
            let w = weights.weight(y) / n;
            match y {
                Label::Inline => -w / p,
                Label::Anomaly => w / (1.0 - p),
            }
        })
        .collect())
}
