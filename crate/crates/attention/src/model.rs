// SPDX-License-Identifier: MIT OR Apache-2.0

//! A small post-norm encoder with random weights.
//!
//! Each block computes `h = LN(x + Attn(x))`, then `out = LN(h + MLP(h))`.
//! The MLP uses GELU. There is no causal mask.

use ndarray::{s, Array1, Array2, Array4, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::Trace;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTransformerConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub vocab_size: usize,
    #[serde(default = "yes")]
    pub use_positional: bool,
    #[serde(default)]
    pub seed: u64,
}

fn yes() -> bool {
    true
}

impl ToyTransformerConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("max_seq_len", self.max_seq_len),
            ("vocab_size", self.vocab_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be ≥ 1")));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl LayerNorm {
    fn new(d: usize) -> Self {
        LayerNorm {
            gamma: Array1::ones(d),
            beta: Array1::zeros(d),
        }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            let mean = row.mean().expect("non-empty");
            let var = row.mapv(|v| (v - mean) * (v - mean)).mean().expect("non-empty");
            let inv = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
        }
        out * &self.gamma + &self.beta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    /// d_model × d_head
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    /// d_head × d_model
    pub wo: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub heads: Vec<Head>,
    pub ln_attn: LayerNorm,
    /// d_model × d_ff
    pub w_in: Array2<f64>,
    pub b_in: Array1<f64>,
    /// d_ff × d_model
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
    pub ln_mlp: LayerNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTransformer {
    pub config: ToyTransformerConfig,
    /// vocab × d_model
    pub token_embedding: Array2<f64>,
    /// max_seq_len × d_model
    pub positional: Array2<f64>,
    pub blocks: Vec<Block>,
    /// Skip every normalization (used by the identity ablation).
    pub bypass_norm: bool,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..=bound))
}

/// Seeded random weights: linear maps uniform in ±1/√fan_in, embeddings in
/// ±1, biases zero, normalization gain one.
pub fn build_toy_transformer(cfg: &ToyTransformerConfig) -> Result<ToyTransformer> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (d, dh, ff) = (cfg.d_model, cfg.d_head(), cfg.d_ff);
    let token_embedding = uniform(&mut rng, cfg.vocab_size, d, 1.0);
    let positional = uniform(&mut rng, cfg.max_seq_len, d, 1.0);
    let in_bound = 1.0 / (d as f64).sqrt();
    let head_out_bound = 1.0 / (dh as f64).sqrt();
    let ff_bound = 1.0 / (ff as f64).sqrt();
    let blocks = (0..cfg.n_layers)
        .map(|_| {
            let heads = (0..cfg.n_heads)
                .map(|_| Head {
                    wq: uniform(&mut rng, d, dh, in_bound),
                    wk: uniform(&mut rng, d, dh, in_bound),
                    wv: uniform(&mut rng, d, dh, in_bound),
                    wo: uniform(&mut rng, dh, d, head_out_bound),
                })
                .collect();
            Block {
                heads,
                ln_attn: LayerNorm::new(d),
                w_in: uniform(&mut rng, d, ff, in_bound),
                b_in: Array1::zeros(ff),
                w_out: uniform(&mut rng, ff, d, ff_bound),
                b_out: Array1::zeros(d),
                ln_mlp: LayerNorm::new(d),
            }
        })
        .collect();
    Ok(ToyTransformer {
        config: cfg.clone(),
        token_embedding,
        positional,
        blocks,
        bypass_norm: false,
    })
}

/// Row-wise softmax, shifted by the row max.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Scaled dot-product attention: `weights = softmax(Q·Kᵀ·scale)`,
/// `output = weights·V`.
pub fn attention(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    scale: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if q.ncols() != k.ncols() {
        return Err(Error::Shape(format!(
            "query width {} vs key width {}",
            q.ncols(),
            k.ncols()
        )));
    }
    if k.nrows() != v.nrows() {
        return Err(Error::Shape(format!(
            "{} keys but {} values",
            k.nrows(),
            v.nrows()
        )));
    }
    let weights = softmax_rows(&(q.dot(&k.t()) * scale));
    let output = weights.dot(v);
    Ok((weights, output))
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    /// Position `i` receives the token originally at `permutation[i]`.
    ShuffleEmbeddings { permutation: Vec<usize> },
    /// Adds `sigma·z`, `z ~ N(0, 1)`, to every pre-softmax logit. The same
    /// `seed` gives the same `z` for every sigma.
    LogitNoise { sigma: f64, seed: u64 },
    /// Tokens at `i` and `j` exchange positional encodings.
    SwapPositions { i: usize, j: usize },
}

impl ToyTransformer {
    /// Copy whose sublayers leave the residual stream unchanged: attention
    /// and MLP outputs are zero and normalization is skipped.
    pub fn identity_ablation(&self) -> Self {
        let mut m = self.clone();
        for b in &mut m.blocks {
            for h in &mut b.heads {
                h.wo.fill(0.0);
            }
            b.w_out.fill(0.0);
            b.b_out.fill(0.0);
        }
        m.bypass_norm = true;
        m
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Shape("empty token sequence".into()));
        }
        if tokens.len() > self.config.max_seq_len {
            return Err(Error::Shape(format!(
                "{} tokens exceed max_seq_len {}",
                tokens.len(),
                self.config.max_seq_len
            )));
        }
        if let Some((position, &token)) = tokens.iter().enumerate().find(|(_, &t)| t >= self.config.vocab_size) {
            return Err(Error::Token {
                token,
                position,
                vocab: self.config.vocab_size,
            });
        }
        Ok(())
    }

    fn norm(&self, ln: &LayerNorm, x: &Array2<f64>) -> Array2<f64> {
        if self.bypass_norm {
            x.clone()
        } else {
            ln.apply(x)
        }
    }

    pub fn forward_trace(&self, tokens: &[usize]) -> Result<Trace> {
        self.check_tokens(tokens)?;
        let positions: Vec<usize> = (0..tokens.len()).collect();
        Ok(self.run(tokens, &positions, None))
    }

    /// Reruns the forward pass under `kind`.
    pub fn perturb(&self, tokens: &[usize], kind: &Perturbation) -> Result<Trace> {
        self.check_tokens(tokens)?;
        let n = tokens.len();
        let mut positions: Vec<usize> = (0..n).collect();
        match kind {
            Perturbation::ShuffleEmbeddings { permutation } => {
                let mut seen = vec![false; n];
                if permutation.len() != n || permutation.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
                    return Err(Error::Perturbation(format!(
                        "{permutation:?} is not a permutation of 0..{n}"
                    )));
                }
                let shuffled: Vec<usize> = permutation.iter().map(|&p| tokens[p]).collect();
                Ok(self.run(&shuffled, &positions, None))
            }
            Perturbation::LogitNoise { sigma, seed } => {
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::Perturbation(format!("sigma {sigma} must be ≥ 0")));
                }
                let noise = (*sigma > 0.0).then_some((*sigma, *seed));
                Ok(self.run(tokens, &positions, noise))
            }
            Perturbation::SwapPositions { i, j } => {
                if *i >= n || *j >= n {
                    return Err(Error::Perturbation(format!(
                        "swap ({i}, {j}) outside 0..{n}"
                    )));
                }
                positions.swap(*i, *j);
                Ok(self.run(tokens, &positions, None))
            }
        }
    }

    fn run(&self, tokens: &[usize], positions: &[usize], noise: Option<(f64, u64)>) -> Trace {
        let cfg = &self.config;
        let n = tokens.len();
        let mut x = Array2::zeros((n, cfg.d_model));
        for (i, (&t, &p)) in tokens.iter().zip(positions).enumerate() {
            let mut row = x.row_mut(i);
            row.assign(&self.token_embedding.row(t));
            if cfg.use_positional {
                row += &self.positional.row(p);
            }
        }
        let embeddings0 = x.clone();
        let mut hidden = vec![x.clone()];
        let mut attn = Array4::zeros((cfg.n_layers, cfg.n_heads, n, n));
        let mut noise_rng = noise.map(|(_, seed)| ChaCha8Rng::seed_from_u64(seed));
        let scale = 1.0 / (cfg.d_head() as f64).sqrt();

        for (l, block) in self.blocks.iter().enumerate() {
            let mut mixed = Array2::zeros((n, cfg.d_model));
            for (h, head) in block.heads.iter().enumerate() {
                let q = x.dot(&head.wq);
                let k = x.dot(&head.wk);
                let v = x.dot(&head.wv);
                let mut logits = q.dot(&k.t()) * scale;
                if let (Some((sigma, _)), Some(rng)) = (noise, noise_rng.as_mut()) {
                    logits.mapv_inplace(|lv| {
                        let z: f64 = StandardNormal.sample(rng);
                        lv + sigma * z
                    });
                }
                let weights = softmax_rows(&logits);
                mixed += &weights.dot(&v).dot(&head.wo);
                attn.slice_mut(s![l, h, .., ..]).assign(&weights);
            }
            let h1 = self.norm(&block.ln_attn, &(&x + &mixed));
            let pre = h1.dot(&block.w_in) + &block.b_in;
            let mlp = pre.mapv(gelu).dot(&block.w_out) + &block.b_out;
            x = self.norm(&block.ln_mlp, &(&h1 + &mlp));
            hidden.push(x.clone());
        }
        Trace {
            tokens: tokens.to_vec(),
            embeddings0,
            hidden: ndarray::stack(Axis(0), &hidden.iter().map(|h| h.view()).collect::<Vec<_>>())
                .expect("equal shapes"),
            attn,
        }
    }
}
