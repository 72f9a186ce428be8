// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use audit_cli::attention_suite::{run_attention_suite, AttentionConfig};
use audit_cli::audit::run_audit;
use audit_cli::config::{resolve, AuditConfig};
use audit_cli::runs::{read_report, run_dir_name, write_run, Timing};
use audit_cli::table::{render_table, Style};
use audit_cli::{CliError, CliResult};
use chrono::Utc;
use clap::{Parser, Subcommand, ValueEnum};
use interp_core::baselines::{Condition, ConditionName};
use interp_core::metrics::{chance_oracle, MetricSpec};
use interp_core::norms::{load_feature_classes, load_norm, CategoricalFormat, FeatureNorm, NormKind};

#[derive(Parser)]
#[command(name = "interp-audit", version, about = "Feature-norm mapping audits and attention diagnostics")]
struct Cli {
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured condition and write a run directory.
    Audit {
        config: PathBuf,
        /// Overrides `output.dir` from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Identity profiles and perturbation statistics for toy models or traces.
    Attention {
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write a derived norm for one condition.
    Baseline {
        norm: PathBuf,
        condition: ConditionName,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Kind::Categorical)]
        kind: Kind,
        #[arg(long)]
        feature_classes: Option<PathBuf>,
        #[arg(long)]
        binarize: bool,
        /// Output file; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Render the report stored in a run directory.
    Report {
        run_dir: PathBuf,
        #[arg(long, default_value = "text")]
        style: Style,
    },
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Score of uniformly random predictions against a norm.
    Chance {
        norm: PathBuf,
        #[arg(long)]
        metric: MetricSpec,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Kind::Categorical)]
        kind: Kind,
        #[arg(long)]
        binarize: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Categorical,
    Continuous,
}

impl From<Kind> for NormKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Categorical => NormKind::Categorical,
            Kind::Continuous => NormKind::Continuous,
        }
    }
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn read_norm(path: &Path, kind: Kind, classes: Option<&Path>, binarize: bool) -> CliResult<FeatureNorm> {
    let mut norm =
        load_norm(path, kind.into(), &CategoricalFormat::default()).map_err(|e| CliError::Validation(e.to_string()))?;
    if let Some(fc) = classes {
        norm = norm.with_feature_classes(load_feature_classes(fc).map_err(|e| CliError::Validation(e.to_string()))?);
    }
    if binarize {
        if norm.kind() != NormKind::Categorical {
            return Err(CliError::Validation("--binarize needs a categorical norm".into()));
        }
        norm = norm.binarize();
    }
    Ok(norm)
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(CliError::Runtime(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let threads = cli.threads.unwrap_or(0);
    if cli.threads == Some(0) {
        return Err(CliError::Validation("--threads must be ≥ 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let threads = rayon::current_num_threads();

    match cli.command {
        Command::Audit { config, out_dir } => {
            let cfg = AuditConfig::load(&config)?;
            let base = base_dir(&config);
            let started = Utc::now();
            let clock = Instant::now();
            let (report, artifacts) = run_audit(&cfg, &base)?;
            let timing = Timing {
                wall_seconds: clock.elapsed().as_secs_f64(),
                threads,
                started: started.to_rfc3339(),
            };
            let root = out_dir.unwrap_or_else(|| resolve(&base, &cfg.output.dir));
            let dir = write_run(&root, started, &report, &artifacts, &timing)?;
            emit(&format!("{}run directory: {}\n", render_table(&report, Style::Text), dir.display()))?;
        }
        Command::Attention { config, out_dir } => {
            let cfg = AttentionConfig::load(&config)?;
            let base = base_dir(&config);
            let report = run_attention_suite(&cfg, &base)?;
            let root = out_dir.unwrap_or_else(|| resolve(&base, &cfg.output));
            let dir = root.join(format!("{}-attention", run_dir_name(Utc::now(), &report.config_hash)));
            let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            write_file(&dir.join("attention.json"), &json)?;
            write_file(&dir.join("attention.txt"), &report.to_text())?;
            emit(&format!("{}run directory: {}\n", report.to_text(), dir.display()))?;
        }
        Command::Baseline {
            norm,
            condition,
            seed,
            kind,
            feature_classes,
            binarize,
            output,
        } => {
            let source = read_norm(&norm, kind, feature_classes.as_deref(), binarize)?;
            let cond = Condition::build(condition, &source, seed).map_err(|e| CliError::Validation(e.to_string()))?;
            let text = cond.serialize();
            match output {
                Some(path) => write_file(&path, &text)?,
                None => emit(&text)?,
            }
        }
        Command::Report { run_dir, style } => {
            let report = read_report(&run_dir)?;
            emit(&render_table(&report, style))?;
        }
        Command::Oracle {
            which:
                OracleCommand::Chance {
                    norm,
                    metric,
                    trials,
                    seed,
                    kind,
                    binarize,
                },
        } => {
            let source = read_norm(&norm, kind, None, binarize)?;
            let est = chance_oracle(&source, &metric, trials, seed).map_err(|e| CliError::Validation(e.to_string()))?;
            let out = serde_json::json!({
                "norm": source.name(),
                "metric": metric.to_string(),
                "seed": seed,
                "mean": est.mean,
                "trial_sd": est.trial_sd,
                "std_error": est.std_error,
                "trials": est.trials,
            });
            emit(&(serde_json::to_string_pretty(&out).expect("json") + "\n"))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
