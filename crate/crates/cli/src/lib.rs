// SPDX-License-Identifier: MIT OR Apache-2.0

//! Audit orchestration: config files, condition sweeps, report tables and run
//! directories, plus the attention suite.

pub mod attention_suite;
pub mod audit;
pub mod config;
pub mod error;
pub mod runs;
pub mod table;

pub use attention_suite::{run_attention_suite, AttentionConfig, AttentionReport};
pub use audit::{run_audit, AuditReport};
pub use config::AuditConfig;
pub use error::{CliError, CliResult};
pub use table::{render_table, ResultTable, Style};
