//! Radon–Nikodým corrected anomaly detection.
//!
//! A model trained on a contaminated sample, where a fraction `alpha` of the
//! rows are anomalies, is usually evaluated on a balanced mixture of inline and
//! anomalous data. The density ratio between those two distributions is the
//! correction factor this crate applies:
//!
//! * [`rn`]: class weights for the supervised case and the weighted binary
//!   cross-entropy they induce.
//! * [`neural`]: a one-hidden-layer ReLU detector trained with Adam on the
//!   weighted loss.
//! * [`clustering`] and [`cblof`]: k-means with a large/small cluster split and
//!   the CBLOF, ECBLOF and KDE-weighted scoring rules.
//! * [`eval`]: ROC, AUROC, TPR−FPR threshold selection and confusion reports.
//! * [`pac`]: synthetic contaminated mixtures and the learnability study.
//! * [`pipeline`]: the end-to-end supervised and unsupervised runs.
//!
//! Labels follow the convention `inline = 1`, `anomaly = 0` internally; scores
//! are always oriented so that larger means more anomalous.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cblof;
pub mod clustering;
pub mod data;
pub mod error;
pub mod eval;
pub mod neural;
pub mod pac;
pub mod pipeline;
pub mod rn;
pub mod seed;

pub use data::{Dataset, Label, LabelConvention, SplitIndices, Standardizer};
pub use error::{Error, Result};
pub use rn::RnWeights;
