// SPDX-License-Identifier: MIT OR Apache-2.0

//! Identity profiles, map statistics and perturbation divergences over a
//! seed sweep of toy models or a directory of recorded traces.

use std::path::{Path, PathBuf};

use attention_lab::{
    build_toy_transformer, identity_profile, load_trace_dir, map_divergence, map_stats, MapStats, Perturbation,
    ToyTransformerConfig, Trace,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::resolve;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionConfig {
    /// Toy architecture; its `seed` is replaced by each entry of `seeds`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ToyTransformerConfig>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_seq_len")]
    pub seq_len: usize,
    #[serde(default = "default_sigmas")]
    pub sigmas: Vec<f64>,
    #[serde(default)]
    pub noise_seed: u64,
    /// Directory of recorded traces, used instead of `model`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_dir: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub output: PathBuf,
}

fn default_seeds() -> Vec<u64> {
    (0..20).collect()
}

fn default_seq_len() -> usize {
    12
}

fn default_sigmas() -> Vec<f64> {
    vec![0.0, 0.1, 1.0, 10.0]
}

fn default_out() -> PathBuf {
    "runs".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    /// Seed number or trace directory name.
    pub id: String,
    pub tokens: Vec<usize>,
    /// Per layer, index 0 = embeddings.
    pub mean_self_alignment: Vec<f64>,
    pub self_match_rate: Vec<f64>,
    pub zero_norm_states: usize,
    /// `[layer][head]`
    pub map_stats: Vec<Vec<MapStats>>,
    /// Overall mean JSD against the clean run, one per sigma.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_jsd: Option<Vec<f64>>,
    /// Share of (layer, head) pairs whose JSD never decreases along the sigma sweep.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_monotone_share: Option<f64>,
    /// Max |A' − P·A·Pᵀ| after shuffling token embeddings.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shuffle_conjugation_error: Option<f64>,
    /// Overall JSD after swapping the positions of the first and last token.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub swap_jsd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionSummary {
    pub runs: usize,
    pub mean_self_alignment_by_layer: Vec<f64>,
    /// Runs whose final-layer mean self-alignment is below layer 1's.
    pub final_below_first: usize,
    /// Runs whose mean self-alignment never increases with depth.
    pub non_increasing: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_monotone_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionReport {
    pub config_hash: String,
    pub config: AttentionConfig,
    pub source: String,
    pub sigmas: Vec<f64>,
    pub runs: Vec<RunEntry>,
    pub summary: AttentionSummary,
}

impl AttentionConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn validate(&self) -> CliResult<()> {
        match (&self.model, &self.trace_dir) {
            (Some(m), None) => {
                m.validate().map_err(CliError::validation)?;
                if self.seeds.is_empty() {
                    return Err(CliError::validation("seeds is empty"));
                }
                if self.seq_len == 0 || self.seq_len > m.max_seq_len {
                    return Err(CliError::Validation(format!(
                        "seq_len {} outside 1..={}",
                        self.seq_len, m.max_seq_len
                    )));
                }
                if self.sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                    return Err(CliError::validation("sigmas must be finite and ≥ 0"));
                }
                Ok(())
            }
            (None, Some(_)) => Ok(()),
            _ => Err(CliError::validation("give exactly one of model or trace_dir")),
        }
    }
}

fn describe(id: String, trace: &Trace) -> CliResult<RunEntry> {
    let profile = identity_profile(trace);
    let map_stats = (0..trace.n_layers())
        .map(|l| {
            (0..trace.n_heads())
                .map(|h| map_stats(trace.attention_map(l, h).view()).map_err(CliError::runtime))
                .collect::<CliResult<Vec<_>>>()
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(RunEntry {
        id,
        tokens: trace.tokens.clone(),
        mean_self_alignment: profile.mean_self_alignment(),
        self_match_rate: profile.self_match_rate(),
        zero_norm_states: profile.zero_norm.len(),
        map_stats,
        noise_jsd: None,
        noise_monotone_share: None,
        shuffle_conjugation_error: None,
        swap_jsd: None,
    })
}

fn toy_run(cfg: &AttentionConfig, model_cfg: &ToyTransformerConfig, seed: u64) -> CliResult<RunEntry> {
    let model = build_toy_transformer(&ToyTransformerConfig {
        seed,
        ..model_cfg.clone()
    })
    .map_err(CliError::validation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens: Vec<usize> = (0..cfg.seq_len).map(|_| rng.random_range(0..model_cfg.vocab_size)).collect();
    let base = model.forward_trace(&tokens).map_err(CliError::runtime)?;
    let mut entry = describe(seed.to_string(), &base)?;

    let divs = cfg
        .sigmas
        .iter()
        .map(|&sigma| {
            let p = model
                .perturb(&tokens, &Perturbation::LogitNoise { sigma, seed: cfg.noise_seed.wrapping_add(seed) })
                .map_err(CliError::runtime)?;
            map_divergence(&base.attn, &p.attn).map_err(CliError::runtime)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let (l, h) = (base.n_layers(), base.n_heads());
    let monotone = (0..l)
        .flat_map(|a| (0..h).map(move |b| (a, b)))
        .filter(|&(a, b)| divs.windows(2).all(|w| w[1].per_head[[a, b]] >= w[0].per_head[[a, b]]))
        .count();
    entry.noise_jsd = Some(divs.iter().map(|d| d.overall).collect());
    entry.noise_monotone_share = Some(monotone as f64 / (l * h) as f64);

    let mut perm: Vec<usize> = (0..tokens.len()).collect();
    perm.shuffle(&mut rng);
    let shuffled = model
        .perturb(&tokens, &Perturbation::ShuffleEmbeddings { permutation: perm.clone() })
        .map_err(CliError::runtime)?;
    let n = tokens.len();
    let mut worst = 0.0f64;
    for a in 0..l {
        for b in 0..h {
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max((shuffled.attn[[a, b, i, j]] - base.attn[[a, b, perm[i], perm[j]]]).abs());
                }
            }
        }
    }
    entry.shuffle_conjugation_error = Some(worst);

    let swapped = model
        .perturb(&tokens, &Perturbation::SwapPositions { i: 0, j: n - 1 })
        .map_err(CliError::runtime)?;
    entry.swap_jsd = Some(map_divergence(&base.attn, &swapped.attn).map_err(CliError::runtime)?.overall);
    Ok(entry)
}

fn summarize(runs: &[RunEntry]) -> AttentionSummary {
    let depth = runs.iter().map(|r| r.mean_self_alignment.len()).min().unwrap_or(0);
    let mean_self_alignment_by_layer = (0..depth)
        .map(|l| runs.iter().map(|r| r.mean_self_alignment[l]).sum::<f64>() / runs.len() as f64)
        .collect();
    let final_below_first = runs
        .iter()
        .filter(|r| r.mean_self_alignment.len() > 2 && r.mean_self_alignment.last() < r.mean_self_alignment.get(1))
        .count();
    let non_increasing = runs
        .iter()
        .filter(|r| r.mean_self_alignment.windows(2).all(|w| w[1] <= w[0]))
        .count();
    let shares: Vec<f64> = runs.iter().filter_map(|r| r.noise_monotone_share).collect();
    AttentionSummary {
        runs: runs.len(),
        mean_self_alignment_by_layer,
        final_below_first,
        non_increasing,
        noise_monotone_share: (!shares.is_empty()).then(|| shares.iter().sum::<f64>() / shares.len() as f64),
    }
}

pub fn run_attention_suite(cfg: &AttentionConfig, base: &Path) -> CliResult<AttentionReport> {
    cfg.validate()?;
    let (source, runs) = match (&cfg.model, &cfg.trace_dir) {
        (Some(m), _) => {
            let runs = cfg
                .seeds
                .par_iter()
                .map(|&s| toy_run(cfg, m, s))
                .collect::<CliResult<Vec<_>>>()?;
            ("toy".to_string(), runs)
        }
        (None, Some(dir)) => {
            let traces = load_trace_dir(&resolve(base, dir)).map_err(CliError::validation)?;
            let runs = traces
                .iter()
                .map(|(name, t)| describe(name.clone(), t))
                .collect::<CliResult<Vec<_>>>()?;
            ("traces".to_string(), runs)
        }
        (None, None) => unreachable!("validated"),
    };
    let value = serde_json::to_value(cfg).expect("config serializes");
    Ok(AttentionReport {
        config_hash: hex::encode(Sha256::digest(value.to_string().as_bytes())),
        config: cfg.clone(),
        source,
        sigmas: if cfg.model.is_some() { cfg.sigmas.clone() } else { Vec::new() },
        summary: summarize(&runs),
        runs,
    })
}

impl AttentionReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("attention suite: {} {} run(s)\n", self.summary.runs, self.source);
        out.push_str("layer  mean self-alignment\n");
        for (l, v) in self.summary.mean_self_alignment_by_layer.iter().enumerate() {
            out.push_str(&format!("{l:>5}  {v:.4}\n"));
        }
        out.push_str(&format!(
            "final layer below layer 1: {}/{}\nnon-increasing with depth: {}/{}\n",
            self.summary.final_below_first, self.summary.runs, self.summary.non_increasing, self.summary.runs
        ));
        if let Some(s) = self.summary.noise_monotone_share {
            out.push_str(&format!("heads with JSD non-decreasing in sigma: {:.1}%\n", 100.0 * s));
        }
        out
    }
}
