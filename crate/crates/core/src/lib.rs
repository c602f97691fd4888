//! Deterministic single-process federated-learning simulator with a fixed
//! simplex-ETF classifier head, a FedAvg baseline, neural-collapse
//! diagnostics and per-client finetuning.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod etf;
pub mod experiment;
pub mod federation;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
pub use model::{Algorithm, FeatureSpace, Model, ModelLayout, Objective};
