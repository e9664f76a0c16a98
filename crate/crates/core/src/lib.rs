//! Cluster-derived canonical vine copulas.
//!
//! The crate clusters asset return series, derives noise-perturbed cluster
//! and market indexes, fits a two-tree canonical vine conditioned on those
//! indexes with a multivariate copula over the residual dependence, and
//! backtests portfolio Value-at-Risk with the Kupiec proportion-of-failures
//! test.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod bicop;
pub mod cdcv;
pub mod clustering;
pub mod cvine;
pub mod error;
pub mod generator;
pub mod indexing;
pub mod joint;
pub mod marginals;
pub mod optim;
pub mod panel;
pub mod rank;
pub mod seeds;
pub mod special;

pub use error::{Error, Result};
