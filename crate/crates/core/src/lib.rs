// SPDX-License-Identifier: MIT OR Apache-2.0

//! Property-inference auditing: feature norms, embedding tables, PLS and
//! feed-forward mappers, evaluation metrics and control baselines.

pub mod baselines;
pub mod embeddings;
pub mod error;
pub mod mappers;
pub mod metrics;
pub mod norms;
pub mod synth;
pub mod vecmath;

pub use error::{Error, Result};
