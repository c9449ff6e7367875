//! Group-aware visual sentiment: survey label aggregation, multi-head
//! transfer learning on convolutional backbones, evaluation and reporting.
//!
//! The crate is organised along the pipeline:
//!
//! * [`labels`] ingests respondent ratings and builds per-party image labels.
//! * [`dataset`] loads and preprocesses images, makes splits and fold plans.
//! * [`model`] builds backbones with two group heads under a freeze strategy.
//! * [`train`] runs fine-tuning with early stopping, checkpoints, prediction.
//! * [`eval`] holds metrics, confusion matrices, cross-validation and the
//!   polarization index.
//! * [`report`] writes plots, tables and run manifests; [`cli`] wires the
//!   commands together.

pub mod cli;
pub mod dataset;
pub mod eval;
pub mod labels;
pub mod model;
pub mod report;
pub mod train;
