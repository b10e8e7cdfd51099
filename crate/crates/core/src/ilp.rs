//! A small deterministic pre-norm decoder and region-guided pruning of
//! visual-token hidden states inside it.
//!
//! Layers are RMSNorm → multi-head causal self-attention with rotary
//! position embeddings → residual, then RMSNorm → SiLU MLP → residual.
//! Pruning happens between blocks: after block `K` completes, the hidden
//! rows of visual tokens outside the region are deleted and blocks
//! `K+1..=L` run on the shorter sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{region_to_tokens, Region};
use crate::tensor::{cosine, dot, softmax_in_place, Matrix};
use crate::tokens::VisualTokens;

pub const RMS_EPS: f64 = 1e-6;
pub const ROPE_BASE: f64 = 10000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IlpError {
    #[error("hidden size {dim} is not divisible into {heads} heads of even width")]
    HeadSplit { dim: usize, heads: usize },
    #[error("model must have at least one layer, head, and hidden unit")]
    EmptyModel,
    #[error("prune layer {layer} outside 1..={layers}")]
    Layer { layer: usize, layers: usize },
    #[error("region {0} keeps no visual tokens on this grid")]
    EmptyRegion(Region),
    #[error("budget {budget} outside 1..={visual}")]
    Budget { budget: usize, visual: usize },
    #[error("sequence is empty")]
    EmptySequence,
    #[error("`{part}` has width {got}, model expects {expected}")]
    Width {
        part: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub mlp: usize,
    pub seed: u64,
    /// Share the query projection as the key projection, so attention
    /// scores measure content similarity under a positive semi-definite
    /// form instead of a random bilinear one.
    #[serde(default = "default_tie")]
    pub tie_qk: bool,
}

fn default_tie() -> bool {
    true
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 8,
            heads: 4,
            dim: 64,
            mlp: 128,
            seed: 0,
            tie_qk: true,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn validate(&self) -> Result<(), IlpError> {
        if self.layers == 0 || self.heads == 0 || self.dim == 0 || self.mlp == 0 {
            return Err(IlpError::EmptyModel);
        }
        if self.dim % self.heads != 0 || self.head_dim() % 2 != 0 {
            return Err(IlpError::HeadSplit {
                dim: self.dim,
                heads: self.heads,
            });
        }
        Ok(())
    }
}

/// Weights of one decoder block. Projections act on row vectors (`x · W`).
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub attn_norm: Vec<f64>,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub mlp_norm: Vec<f64>,
    pub w_up: Matrix,
    pub w_down: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTransformer {
    config: ModelConfig,
    blocks: Vec<Block>,
}

/// Which sequence row feeds position ids after pruning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositionPolicy {
    /// Retained rows keep their pre-pruning position ids.
    #[default]
    KeepOriginal,
    /// Retained rows are renumbered `0..n`.
    Reindex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    Visual,
    Query,
}

/// System prompt rows, then visual tokens, then user-query rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalSequence {
    system: Matrix,
    visual: VisualTokens,
    query: Matrix,
}

impl MultimodalSequence {
    pub fn new(system: Matrix, visual: VisualTokens, query: Matrix) -> Result<Self, IlpError> {
        let dim = visual.dim();
        for (part, m) in [("system", &system), ("query", &query)] {
            if m.rows() > 0 && m.cols() != dim {
                return Err(IlpError::Width {
                    part,
                    expected: dim,
                    got: m.cols(),
                });
            }
        }
        let system = if system.rows() == 0 { Matrix::zeros(0, dim) } else { system };
        let query = if query.rows() == 0 { Matrix::zeros(0, dim) } else { query };
        Ok(MultimodalSequence { system, visual, query })
    }

    pub fn system_len(&self) -> usize {
        self.system.rows()
    }

    pub fn visual_len(&self) -> usize {
        self.visual.len()
    }

    pub fn query_len(&self) -> usize {
        self.query.rows()
    }

    pub fn len(&self) -> usize {
        self.system_len() + self.visual_len() + self.query_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn visual(&self) -> &VisualTokens {
        &self.visual
    }

    pub fn dim(&self) -> usize {
        self.visual.dim()
    }

    pub fn visual_rows(&self) -> std::ops::Range<usize> {
        self.system_len()..self.system_len() + self.visual_len()
    }

    pub fn query_rows(&self) -> std::ops::Range<usize> {
        self.system_len() + self.visual_len()..self.len()
    }

    pub fn role(&self, row: usize) -> Role {
        if row < self.system_len() {
            Role::System
        } else if row < self.system_len() + self.visual_len() {
            Role::Visual
        } else {
            Role::Query
        }
    }

    pub fn embeddings(&self) -> Matrix {
        Matrix::concat_rows(&[&self.system, self.visual.embeddings(), &self.query])
            .expect("widths validated at construction")
    }

    /// Sequence rows kept when only the given visual-token indices survive.
    pub fn kept_rows(&self, visual_keep: &[usize]) -> Vec<usize> {
        let offset = self.system_len();
        (0..offset)
            .chain(visual_keep.iter().map(|v| v + offset))
            .chain(self.query_rows())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneConfig {
    /// Number of blocks run on the full sequence before pruning.
    pub layer: usize,
    pub region: Region,
    pub policy: PositionPolicy,
}

impl PruneConfig {
    pub fn new(layer: usize, region: Region, policy: PositionPolicy, model: &ModelConfig) -> Result<Self, IlpError> {
        if layer == 0 || layer > model.layers {
            return Err(IlpError::Layer {
                layer,
                layers: model.layers,
            });
        }
        Ok(PruneConfig { layer, region, policy })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub prune_after: usize,
    pub visual_total: usize,
    pub visual_kept: usize,
    pub visual_dropped: usize,
    pub rate: f64,
    pub sequence_before: usize,
    pub sequence_after: usize,
}

/// Head-averaged or per-head attention probabilities of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMaps {
    pub layer: usize,
    pub heads: usize,
    pub len: usize,
    /// `heads × len × len`, row-major per head; entries above the diagonal are zero.
    pub probs: Vec<f64>,
}

impl AttentionMaps {
    #[inline]
    pub fn get(&self, head: usize, i: usize, j: usize) -> f64 {
        self.probs[(head * self.len + i) * self.len + j]
    }
}

/// Hidden states of every layer plus bookkeeping for pruned runs.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `hidden[0]` is the input embedding; `hidden[l]` the output of block `l`.
    pub hidden: Vec<Matrix>,
    /// Original sequence indices of the rows of the final hidden state.
    pub rows: Vec<usize>,
    pub positions: Vec<usize>,
    /// Final state of the retained rows; differs from the last `hidden`
    /// entry only when pruning happens after the last block.
    pub output: Matrix,
    pub attention: Option<AttentionMaps>,
    pub report: Option<PruneReport>,
}

impl ForwardTrace {
    pub fn final_hidden(&self) -> &Matrix {
        &self.output
    }

    /// Last-row hidden state, the stand-in for next-token logits.
    pub fn logits_proxy(&self) -> &[f64] {
        let h = self.final_hidden();
        h.row(h.rows() - 1)
    }
}

fn rms_norm(x: &Matrix, gain: &[f64]) -> Matrix {
    let mut out = x.clone();
    let d = x.cols() as f64;
    for i in 0..x.rows() {
        let row = out.row_mut(i);
        let ms = dot(row, row) / d;
        let inv = 1.0 / (ms + RMS_EPS).sqrt();
        for (v, g) in row.iter_mut().zip(gain) {
            *v *= inv * g;
        }
    }
    out
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// Rotates consecutive channel pairs of every head by `pos · base^(-2j/head_dim)`.
fn apply_rope(m: &mut Matrix, positions: &[usize], heads: usize) {
    let head_dim = m.cols() / heads;
    let half = head_dim / 2;
    let freqs: Vec<f64> = (0..half)
        .map(|j| ROPE_BASE.powf(-2.0 * j as f64 / head_dim as f64))
        .collect();
    for (i, &p) in positions.iter().enumerate() {
        let row = m.row_mut(i);
        for h in 0..heads {
            let base = h * head_dim;
            for (j, f) in freqs.iter().enumerate() {
                let (sin, cos) = (p as f64 * f).sin_cos();
                let a = row[base + 2 * j];
                let b = row[base + 2 * j + 1];
                row[base + 2 * j] = a * cos - b * sin;
                row[base + 2 * j + 1] = a * sin + b * cos;
            }
        }
    }
}

impl ToyTransformer {
    /// Weights `N(0, 1/fan_in)`, norm gains one, all from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self, IlpError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.dim;
        let sd = 1.0 / (d as f64).sqrt();
        let sm = 1.0 / (config.mlp as f64).sqrt();
        let blocks = (0..config.layers)
            .map(|_| {
                let wq = Matrix::gaussian(d, d, sd, &mut rng);
                // drawn either way so the other weights do not depend on tying
                let wk = Matrix::gaussian(d, d, sd, &mut rng);
                Block {
                    attn_norm: vec![1.0; d],
                    wk: if config.tie_qk { wq.clone() } else { wk },
                    wq,
                    wv: Matrix::gaussian(d, d, sd, &mut rng),
                    wo: Matrix::gaussian(d, d, sd, &mut rng),
                    mlp_norm: vec![1.0; d],
                    w_up: Matrix::gaussian(d, config.mlp, sd, &mut rng),
                    w_down: Matrix::gaussian(config.mlp, d, sm, &mut rng),
                }
            })
            .collect();
        Ok(ToyTransformer { config, blocks })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Runs one block. When `capture` is set the per-head attention
    /// probabilities are returned.
    pub fn block_forward(&self, layer: usize, x: &Matrix, positions: &[usize], capture: bool) -> (Matrix, Option<Vec<f64>>) {
        let b = &self.blocks[layer];
        let heads = self.config.heads;
        let hd = self.config.head_dim();
        let n = x.rows();
        let a = rms_norm(x, &b.attn_norm);
        let mut q = a.matmul(&b.wq).expect("square");
        let mut k = a.matmul(&b.wk).expect("square");
        let v = a.matmul(&b.wv).expect("square");
        apply_rope(&mut q, positions, heads);
        apply_rope(&mut k, positions, heads);

        let scale = 1.0 / (hd as f64).sqrt();
        let mut ctx = Matrix::zeros(n, self.config.dim);
        let mut probs = capture.then(|| vec![0.0; heads * n * n]);
        let mut scores = vec![0.0; n];
        for h in 0..heads {
            let cols = h * hd..(h + 1) * hd;
            for i in 0..n {
                let qi = &q.row(i)[cols.clone()];
                let s = &mut scores[..=i];
                for (j, sj) in s.iter_mut().enumerate() {
                    *sj = dot(qi, &k.row(j)[cols.clone()]) * scale;
                }
                softmax_in_place(s);
                let out = &mut ctx.row_mut(i)[cols.clone()];
                for (j, &p) in s.iter().enumerate() {
                    for (o, vv) in out.iter_mut().zip(&v.row(j)[cols.clone()]) {
                        *o += p * vv;
                    }
                }
                if let Some(pr) = probs.as_mut() {
                    pr[(h * n + i) * n..(h * n + i) * n + i + 1].copy_from_slice(s);
                }
            }
        }
        let mut h1 = x.add(&ctx.matmul(&b.wo).expect("square")).expect("same shape");

        let m = rms_norm(&h1, &b.mlp_norm);
        let mut up = m.matmul(&b.w_up).expect("mlp shape");
        up.data_mut().iter_mut().for_each(|u| *u = silu(*u));
        h1.add_assign(&up.matmul(&b.w_down).expect("mlp shape"))
            .expect("same shape");
        (h1, probs)
    }

    /// Runs blocks `start..end` (0-based) from `x`, appending each output to `hidden`.
    fn run_blocks(&self, start: usize, end: usize, x: Matrix, positions: &[usize], capture_at: Option<usize>, hidden: &mut Vec<Matrix>) -> Option<AttentionMaps> {
        let mut cur = x;
        let mut maps = None;
        for layer in start..end {
            let capture = capture_at == Some(layer + 1);
            let (next, probs) = self.block_forward(layer, &cur, positions, capture);
            if let Some(probs) = probs {
                maps = Some(AttentionMaps {
                    layer: layer + 1,
                    heads: self.config.heads,
                    len: cur.rows(),
                    probs,
                });
            }
            hidden.push(next.clone());
            cur = next;
        }
        maps
    }

    fn check_sequence(&self, seq: &MultimodalSequence) -> Result<(), IlpError> {
        if seq.is_empty() {
            return Err(IlpError::EmptySequence);
        }
        if seq.dim() != self.config.dim {
            return Err(IlpError::Width {
                part: "visual",
                expected: self.config.dim,
                got: seq.dim(),
            });
        }
        Ok(())
    }

    pub fn forward_baseline(&self, seq: &MultimodalSequence) -> Result<ForwardTrace, IlpError> {
        self.forward_capture(seq, None)
    }

    /// Baseline forward that also records the attention maps of block
    /// `capture_layer` (1-based).
    pub fn forward_capture(&self, seq: &MultimodalSequence, capture_layer: Option<usize>) -> Result<ForwardTrace, IlpError> {
        self.check_sequence(seq)?;
        let x = seq.embeddings();
        let positions: Vec<usize> = (0..x.rows()).collect();
        let mut hidden = vec![x.clone()];
        let attention = self.run_blocks(0, self.config.layers, x, &positions, capture_layer, &mut hidden);
        Ok(ForwardTrace {
            output: hidden.last().expect("input state").clone(),
            hidden,
            rows: positions.clone(),
            positions,
            attention,
            report: None,
        })
    }

    /// Runs `prune_after` blocks on the full sequence, keeps only the listed
    /// visual tokens, then finishes the stack. `prune_after` may be `0`
    /// (drop before the first block) up to `layers`.
    pub fn forward_pruned(
        &self,
        seq: &MultimodalSequence,
        prune_after: usize,
        visual_keep: &[usize],
        policy: PositionPolicy,
    ) -> Result<ForwardTrace, IlpError> {
        self.check_sequence(seq)?;
        if prune_after > self.config.layers {
            return Err(IlpError::Layer {
                layer: prune_after,
                layers: self.config.layers,
            });
        }
        let x = seq.embeddings();
        let full_positions: Vec<usize> = (0..x.rows()).collect();
        let mut hidden = vec![x.clone()];
        self.run_blocks(0, prune_after, x, &full_positions, None, &mut hidden);

        let rows = seq.kept_rows(visual_keep);
        let pruned = hidden[prune_after].select_rows(&rows);
        let positions: Vec<usize> = match policy {
            PositionPolicy::KeepOriginal => rows.clone(),
            PositionPolicy::Reindex => (0..rows.len()).collect(),
        };
        let mut tail = Vec::new();
        self.run_blocks(prune_after, self.config.layers, pruned.clone(), &positions, None, &mut tail);
        let output = tail.last().cloned().unwrap_or(pruned);
        hidden.extend(tail);

        let visual_total = seq.visual_len();
        let report = PruneReport {
            prune_after,
            visual_total,
            visual_kept: visual_keep.len(),
            visual_dropped: visual_total - visual_keep.len(),
            rate: (visual_total - visual_keep.len()) as f64 / visual_total.max(1) as f64,
            sequence_before: seq.len(),
            sequence_after: rows.len(),
        };
        Ok(ForwardTrace {
            hidden,
            rows,
            positions,
            output,
            attention: None,
            report: Some(report),
        })
    }

    /// Continues blocks `from+1..=L` on given hidden states and position ids.
    pub fn forward_from(&self, from: usize, hidden: Matrix, positions: &[usize]) -> Vec<Matrix> {
        let mut out = Vec::new();
        self.run_blocks(from, self.config.layers, hidden, positions, None, &mut out);
        out
    }

    /// Region-guided inner pruning.
    pub fn forward_ilp(&self, seq: &MultimodalSequence, cfg: &PruneConfig) -> Result<ForwardTrace, IlpError> {
        if cfg.layer == 0 || cfg.layer > self.config.layers {
            return Err(IlpError::Layer {
                layer: cfg.layer,
                layers: self.config.layers,
            });
        }
        let keep = region_to_tokens(&cfg.region, &seq.visual().grid());
        if keep.is_empty() {
            return Err(IlpError::EmptyRegion(cfg.region));
        }
        self.forward_pruned(seq, cfg.layer, keep.indices(), cfg.policy)
    }

    /// Attention-ranked baseline: after block `layer`, keep the `budget`
    /// visual tokens receiving the most attention from query rows in that
    /// block.
    pub fn forward_topr(&self, seq: &MultimodalSequence, layer: usize, budget: usize, policy: PositionPolicy) -> Result<(ForwardTrace, Vec<usize>, AttentionMaps), IlpError> {
        if layer == 0 || layer > self.config.layers {
            return Err(IlpError::Layer {
                layer,
                layers: self.config.layers,
            });
        }
        if budget == 0 || budget > seq.visual_len() {
            return Err(IlpError::Budget {
                budget,
                visual: seq.visual_len(),
            });
        }
        let probe = self.forward_capture_prefix(seq, layer)?;
        let keep = select_top_r(&probe, seq.visual_rows(), seq.query_rows(), budget);
        let trace = self.forward_pruned(seq, layer, &keep, policy)?;
        Ok((trace, keep, probe))
    }

    /// Attention maps of block `layer`, running only the blocks needed.
    pub fn forward_capture_prefix(&self, seq: &MultimodalSequence, layer: usize) -> Result<AttentionMaps, IlpError> {
        self.check_sequence(seq)?;
        let x = seq.embeddings();
        let positions: Vec<usize> = (0..x.rows()).collect();
        let mut hidden = Vec::new();
        Ok(self
            .run_blocks(0, layer, x, &positions, Some(layer), &mut hidden)
            .expect("capture layer within range"))
    }
}

/// Mean attention each visual row receives from the query rows, averaged
/// over heads.
pub fn received_attention(maps: &AttentionMaps, visual: std::ops::Range<usize>, query: std::ops::Range<usize>) -> Vec<f64> {
    let nq = query.len().max(1) as f64 * maps.heads as f64;
    visual
        .map(|j| {
            let mut s = 0.0;
            for h in 0..maps.heads {
                for i in query.clone() {
                    s += maps.get(h, i, j);
                }
            }
            s / nq
        })
        .collect()
}

/// Visual-token indices (relative to the visual block) with the highest
/// received attention; ties go to the lower index. Returned ascending.
pub fn select_top_r(maps: &AttentionMaps, visual: std::ops::Range<usize>, query: std::ops::Range<usize>, budget: usize) -> Vec<usize> {
    let scores = received_attention(maps, visual, query);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order.into_iter().take(budget).collect();
    keep.sort_unstable();
    keep
}

/// Multiply-add count (×2) for one block on a sequence of length `n`:
/// four `d×d` projections, `QKᵀ` and `PV` over the full `n×n` score matrix,
/// and the two MLP projections.
pub fn block_flops(n: u64, dim: u64, mlp: u64) -> u64 {
    8 * n * dim * dim + 4 * n * n * dim + 4 * n * dim * mlp
}

/// FLOPs for `prune_after` blocks at `len_before` and the rest at `len_after`.
/// Head count does not change the total since heads partition `dim`.
pub fn count_flops(len_before: u64, len_after: u64, prune_after: u64, layers: u64, dim: u64, _heads: u64, mlp: u64) -> u64 {
    prune_after * block_flops(len_before, dim, mlp) + (layers - prune_after) * block_flops(len_after, dim, mlp)
}

/// Mean per-row cosine similarity between the baseline's final hidden rows
/// and a pruned run's final rows, over the rows the pruned run retained.
pub fn proxy_quality(baseline: &ForwardTrace, pruned: &ForwardTrace) -> f64 {
    let base = baseline.final_hidden();
    let fin = pruned.final_hidden();
    let n = pruned.rows.len();
    let total: f64 = pruned
        .rows
        .iter()
        .enumerate()
        .map(|(k, &r)| cosine(base.row(r), fin.row(k)))
        .sum();
    total / n as f64
}
