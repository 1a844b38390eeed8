//! Differential privacy and group fairness benchmark toolkit.
//!
//! Private learners (DP-SGD logistic regression, DP-SGD GroupDRO networks and
//! Wishart-noised PCA feeding a downstream network), a Rényi accountant, four
//! group fairness measures, and the experiment harness that sweeps privacy
//! budgets and fits the resulting trade-off curves.

// NaN must fail range checks, so `!(x > 0.0)` is intended throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod analysis;
pub mod binfmt;
pub mod datasets;
pub mod dppca;
pub mod dpsgd;
pub mod error;
pub mod fairmetrics;
pub mod harness;
pub mod models;
pub mod randmat;
pub mod special;

pub use error::{Error, Result};
