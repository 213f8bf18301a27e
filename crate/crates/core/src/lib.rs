//! Analytical + learned GPU latency prediction.
//!
//! The pipeline: a kernel invocation is decomposed into schedulable tasks
//! ([`decompose`]), the tasks are distributed over SMs the way the hardware or a
//! persistent-kernel runtime would ([`schedule`]), the distribution is reduced to
//! per-pipeline demand features ([`features`]), and a small MLP ([`nn`], wrapped by
//! [`estimator`]) maps those features to a hardware-efficiency estimate that converts
//! the analytical lower bound into a latency prediction. [`e2e`] composes per-kernel
//! predictions over a transformer forward pass; [`datagen`] produces training corpora.

pub mod cli;
pub mod datagen;
pub mod decompose;
pub mod e2e;
pub mod error;
pub mod estimator;
pub mod features;
pub mod hwspec;
pub mod nn;
pub mod schedule;
pub mod tiling;

pub use error::{Error, Result};
