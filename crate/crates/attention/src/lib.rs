// SPDX-License-Identifier: MIT OR Apache-2.0

//! Random-weight transformer tracing: attention maps, residual-stream
//! identity profiles, perturbations and the trace interchange format.

pub mod error;
pub mod io;
pub mod model;
pub mod stats;
pub mod trace;

pub use error::{Error, Result};
pub use io::{load_trace, load_trace_dir, save_trace};
pub use model::{attention, build_toy_transformer, Perturbation, ToyTransformer, ToyTransformerConfig};
pub use stats::{jensen_shannon, map_divergence, map_stats, Divergence, MapStats};
pub use trace::{identity_profile, IdentityProfile, Trace};
