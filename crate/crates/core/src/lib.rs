//! Distributed linear SVM training by parameter averaging (PA), weighted
//! parameter averaging (WPA) and consensus ADMM (DWPA in the space of
//! combination weights, DSVM in feature space), on a deterministic
//! simulated master/slave cluster.

// `!(x > 0.0)` is how argument checks here reject NaN along with the range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm_engine;
pub mod cli_harness;
pub mod data_io;
pub mod error;
pub mod linalg;
pub mod local_svm;
pub mod rng;
pub mod stability_lab;
pub mod wpa_core;

pub use error::{Error, Result};
