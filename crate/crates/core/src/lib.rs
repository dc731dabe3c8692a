//! Causal (PCMCI) and mutual-information feature selection for
//! weather-driven short-term load forecasting, with the evaluation pipeline
//! around it: windowed forecasters, rolling-origin cross-validation,
//! feature-regime comparison and out-of-distribution weather diagnostics.

// `!(x > y)` checks are used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assoc;
pub mod eval;
pub mod forecast;
pub mod mifilter;
pub mod panel;
pub mod pcmci;
pub mod scm;
pub mod seed;
