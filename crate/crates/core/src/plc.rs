//! Pre-LLM compression of visual tokens.
//!
//! Tokens are split by the contextual region. Each part is summarized by its
//! own bank of learnable queries through single-head scaled dot-product
//! attention (the positional-encoded tokens act as both keys and values).
//! An anchor patch of original tokens centered on the region then attends
//! over the compressed contextual summary and keeps a residual copy of
//! itself. The output is `[fused anchor rows; compressed non-contextual rows]`,
//! so its length is fixed at `n_anchor + n_noncontextual_queries` for every
//! input size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{region_to_tokens, Region, TokenPos};
use crate::tensor::{attention_backward, attention_with_weights, AttentionTape, MathError, Matrix, PosEncoder};
use crate::tokens::VisualTokens;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlcError {
    #[error("region {0} covers no tokens on this grid")]
    EmptyContextual(Region),
    #[error("anchor patch {patch}x{patch} does not fit a side-{side} token grid")]
    AnchorTooLarge { patch: usize, side: usize },
    #[error("anchor count {0} is not a positive perfect square")]
    AnchorNotSquare(usize),
    #[error("query bank `{0}` must have at least one row")]
    EmptyQueryBank(&'static str),
    #[error("`{tensor}` has width {got}, expected {expected}")]
    Width {
        tensor: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Math(#[from] MathError),
}

/// Query and anchor counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlcConfig {
    pub contextual_queries: usize,
    pub noncontextual_queries: usize,
    pub anchor_tokens: usize,
}

impl Default for PlcConfig {
    fn default() -> Self {
        PlcConfig {
            contextual_queries: 64,
            noncontextual_queries: 4,
            anchor_tokens: 64,
        }
    }
}

impl PlcConfig {
    pub fn output_rows(&self) -> usize {
        self.anchor_tokens + self.noncontextual_queries
    }

    pub fn ablated_rows(&self) -> usize {
        self.contextual_queries + self.noncontextual_queries
    }
}

fn exact_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r > 0 && r * r == n).then_some(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlcParams {
    q_contextual: Matrix,
    q_noncontextual: Matrix,
    anchor_tokens: usize,
    pos: PosEncoder,
}

impl PlcParams {
    pub fn new(q_contextual: Matrix, q_noncontextual: Matrix, anchor_tokens: usize) -> Result<Self, PlcError> {
        if q_contextual.rows() == 0 {
            return Err(PlcError::EmptyQueryBank("q_contextual"));
        }
        if q_noncontextual.rows() == 0 {
            return Err(PlcError::EmptyQueryBank("q_noncontextual"));
        }
        let dim = q_contextual.cols();
        if q_noncontextual.cols() != dim {
            return Err(PlcError::Width {
                tensor: "q_noncontextual",
                expected: dim,
                got: q_noncontextual.cols(),
            });
        }
        exact_sqrt(anchor_tokens).ok_or(PlcError::AnchorNotSquare(anchor_tokens))?;
        Ok(PlcParams {
            q_contextual,
            q_noncontextual,
            anchor_tokens,
            pos: PosEncoder::new(dim),
        })
    }

    /// Query banks drawn from `N(0, 1/dim)` with a fixed seed.
    pub fn init(dim: usize, config: PlcConfig, seed: u64) -> Result<Self, PlcError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = 1.0 / (dim as f64).sqrt();
        let qk = Matrix::gaussian(config.contextual_queries, dim, std, &mut rng);
        let qnk = Matrix::gaussian(config.noncontextual_queries, dim, std, &mut rng);
        PlcParams::new(qk, qnk, config.anchor_tokens)
    }

    pub fn dim(&self) -> usize {
        self.q_contextual.cols()
    }

    pub fn config(&self) -> PlcConfig {
        PlcConfig {
            contextual_queries: self.q_contextual.rows(),
            noncontextual_queries: self.q_noncontextual.rows(),
            anchor_tokens: self.anchor_tokens,
        }
    }

    pub fn q_contextual(&self) -> &Matrix {
        &self.q_contextual
    }

    pub fn q_noncontextual(&self) -> &Matrix {
        &self.q_noncontextual
    }

    pub fn anchor_side(&self) -> usize {
        exact_sqrt(self.anchor_tokens).expect("validated at construction")
    }

    pub fn pos_encoder(&self) -> PosEncoder {
        self.pos
    }

    pub fn with_queries(&self, q_contextual: Matrix, q_noncontextual: Matrix) -> Result<Self, PlcError> {
        PlcParams::new(q_contextual, q_noncontextual, self.anchor_tokens)
    }
}

/// A subset of token rows together with where they sit on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSubset {
    pub values: Matrix,
    pub positions: Vec<TokenPos>,
    /// Row indices into the source token matrix.
    pub rows: Vec<usize>,
}

impl TokenSubset {
    fn gather(tokens: &VisualTokens, rows: Vec<usize>) -> Self {
        TokenSubset {
            values: tokens.embeddings().select_rows(&rows),
            positions: tokens.positions(&rows),
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub contextual: TokenSubset,
    pub noncontextual: TokenSubset,
}

/// Splits token rows into those inside and outside the region.
pub fn partition(tokens: &VisualTokens, region: &Region) -> Partition {
    let set = region_to_tokens(region, &tokens.grid());
    let outside = set.complement();
    Partition {
        contextual: TokenSubset::gather(tokens, set.into_vec()),
        noncontextual: TokenSubset::gather(tokens, outside),
    }
}

/// Row indices of the square anchor patch for `region`.
///
/// The patch is centered on the midpoint of the region's token extent in the
/// first view. Its top-left corner is `center - patch/2`, rounded half down
/// and clamped so the patch stays on the grid.
pub fn anchor_rows(tokens: &VisualTokens, region: &Region, anchor_tokens: usize) -> Result<Vec<usize>, PlcError> {
    let patch = exact_sqrt(anchor_tokens).ok_or(PlcError::AnchorNotSquare(anchor_tokens))?;
    let grid = tokens.grid();
    let side = grid.side();
    if patch > side {
        return Err(PlcError::AnchorTooLarge { patch, side });
    }
    let (rows, cols) = grid.token_extent(region);
    if rows.is_empty() || cols.is_empty() {
        return Err(PlcError::EmptyContextual(*region));
    }
    let corner = |lo: usize, hi: usize| -> usize {
        // twice the unclamped corner: (lo + hi) - patch
        let doubled = (lo + hi) as i64 - patch as i64;
        doubled.div_euclid(2).clamp(0, (side - patch) as i64) as usize
    };
    let r0 = corner(rows.start, rows.end);
    let c0 = corner(cols.start, cols.end);
    let mut out = Vec::with_capacity(anchor_tokens);
    for row in r0..r0 + patch {
        for col in c0..c0 + patch {
            out.push(grid.index(TokenPos { view: 0, row, col }));
        }
    }
    Ok(out)
}

pub fn extract_anchor(tokens: &VisualTokens, region: &Region, anchor_tokens: usize) -> Result<Matrix, PlcError> {
    Ok(tokens.embeddings().select_rows(&anchor_rows(tokens, region, anchor_tokens)?))
}

/// Everything the compression graph reads.
#[derive(Debug, Clone, PartialEq)]
pub struct PlcInputs {
    pub contextual: TokenSubset,
    pub noncontextual: TokenSubset,
    pub anchor: TokenSubset,
}

impl PlcInputs {
    pub fn gather(tokens: &VisualTokens, region: &Region, params: &PlcParams) -> Result<Self, PlcError> {
        if tokens.dim() != params.dim() {
            return Err(PlcError::Width {
                tensor: "visual tokens",
                expected: params.dim(),
                got: tokens.dim(),
            });
        }
        let Partition {
            contextual,
            noncontextual,
        } = partition(tokens, region);
        if contextual.is_empty() {
            return Err(PlcError::EmptyContextual(*region));
        }
        let anchor = TokenSubset::gather(tokens, anchor_rows(tokens, region, params.anchor_tokens)?);
        Ok(PlcInputs {
            contextual,
            noncontextual,
            anchor,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowTag {
    FusedAnchor,
    CompressedNoncontextual,
    /// Non-contextual slot emitted as zeros because no tokens lay outside the region.
    EmptySource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlcOutput {
    pub tokens: Matrix,
    pub provenance: Vec<RowTag>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct PlcTape {
    /// `P(Q^k)` and `P(X^kv)`.
    pub q_ctx: Matrix,
    pub kv_ctx: Matrix,
    pub ctx: AttentionTape,
    pub q_non: Matrix,
    pub kv_non: Option<Matrix>,
    pub non: Option<AttentionTape>,
    /// `P(X^r)` and `P(X̂^kv)`.
    pub q_anchor: Matrix,
    pub kv_anchor: Matrix,
    pub fuse: AttentionTape,
    pub fused: Matrix,
}

impl PlcTape {
    pub fn compressed_contextual(&self) -> &Matrix {
        &self.ctx.output
    }

    pub fn compressed_noncontextual(&self, params: &PlcParams) -> Matrix {
        match &self.non {
            Some(t) => t.output.clone(),
            None => Matrix::zeros(params.q_noncontextual.rows(), params.dim()),
        }
    }
}

pub fn forward(params: &PlcParams, inputs: &PlcInputs) -> Result<PlcTape, PlcError> {
    let pe = params.pos;
    if inputs.contextual.is_empty() {
        return Err(PlcError::EmptyContextual(Region::FULL));
    }
    let q_ctx = pe.add_slots(&params.q_contextual);
    let kv_ctx = pe.add_tokens(&inputs.contextual.values, &inputs.contextual.positions);
    let ctx = attention_with_weights(&q_ctx, &kv_ctx)?;

    let q_non = pe.add_slots(&params.q_noncontextual);
    let (kv_non, non) = if inputs.noncontextual.is_empty() {
        (None, None)
    } else {
        let kv = pe.add_tokens(&inputs.noncontextual.values, &inputs.noncontextual.positions);
        let tape = attention_with_weights(&q_non, &kv)?;
        (Some(kv), Some(tape))
    };

    let q_anchor = pe.add_tokens(&inputs.anchor.values, &inputs.anchor.positions);
    let kv_anchor = pe.add_slots(&ctx.output);
    let fuse = attention_with_weights(&q_anchor, &kv_anchor)?;
    let fused = fuse.output.add(&inputs.anchor.values)?;
    Ok(PlcTape {
        q_ctx,
        kv_ctx,
        ctx,
        q_non,
        kv_non,
        non,
        q_anchor,
        kv_anchor,
        fuse,
        fused,
    })
}

fn noncontextual_tag(tape: &PlcTape) -> RowTag {
    if tape.non.is_some() {
        RowTag::CompressedNoncontextual
    } else {
        RowTag::EmptySource
    }
}

pub fn compress_inputs(params: &PlcParams, inputs: &PlcInputs) -> Result<(PlcOutput, PlcTape), PlcError> {
    let tape = forward(params, inputs)?;
    let non = tape.compressed_noncontextual(params);
    let tokens = Matrix::concat_rows(&[&tape.fused, &non])?;
    let mut provenance = vec![RowTag::FusedAnchor; tape.fused.rows()];
    provenance.extend(std::iter::repeat_n(noncontextual_tag(&tape), non.rows()));
    Ok((PlcOutput { tokens, provenance }, tape))
}

/// Full compression: `concat(X^fused, X̂^nkv)`.
pub fn compress(tokens: &VisualTokens, region: &Region, params: &PlcParams) -> Result<PlcOutput, PlcError> {
    let inputs = PlcInputs::gather(tokens, region, params)?;
    compress_inputs(params, &inputs).map(|(out, _)| out)
}

/// Variant without anchor tokens or fusion: `concat(X̂^kv, X̂^nkv)`.
pub fn compress_ablated(tokens: &VisualTokens, region: &Region, params: &PlcParams) -> Result<Matrix, PlcError> {
    let inputs = PlcInputs::gather(tokens, region, params)?;
    let tape = forward(params, &inputs)?;
    let non = tape.compressed_noncontextual(params);
    Ok(Matrix::concat_rows(&[tape.compressed_contextual(), &non])?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlcGradients {
    pub q_contextual: Matrix,
    pub q_noncontextual: Matrix,
    pub contextual: Matrix,
    pub noncontextual: Matrix,
    pub anchor: Matrix,
}

impl PlcGradients {
    /// Accumulates the per-subset token gradients into one matrix shaped like
    /// the source tokens (anchor rows overlap contextual rows).
    pub fn scatter(&self, inputs: &PlcInputs, total_rows: usize) -> Matrix {
        let dim = self.q_contextual.cols();
        let mut out = Matrix::zeros(total_rows, dim);
        for (subset, grad) in [
            (&inputs.contextual, &self.contextual),
            (&inputs.noncontextual, &self.noncontextual),
            (&inputs.anchor, &self.anchor),
        ] {
            for (k, &r) in subset.rows.iter().enumerate() {
                for (d, g) in out.row_mut(r).iter_mut().zip(grad.row(k)) {
                    *d += g;
                }
            }
        }
        out
    }
}

/// Gradients of `⟨upstream, compress output⟩` with respect to both query
/// banks and all three token subsets.
pub fn backward(params: &PlcParams, inputs: &PlcInputs, tape: &PlcTape, upstream: &Matrix) -> Result<PlcGradients, PlcError> {
    let n_anchor = tape.fused.rows();
    let n_non = params.q_noncontextual.rows();
    let dim = params.dim();
    let expected = (n_anchor + n_non, dim);
    if upstream.shape() != expected {
        return Err(MathError::GradShape {
            tensor: "upstream",
            expected,
            got: upstream.shape(),
        }
        .into());
    }
    let g_fused = upstream.select_rows(&(0..n_anchor).collect::<Vec<_>>());
    let g_non = upstream.select_rows(&(n_anchor..n_anchor + n_non).collect::<Vec<_>>());

    // fusion: fused = attn(P(X^r), P(X̂^kv)) + X^r; positional terms are constants
    let (d_q_anchor, d_kv_anchor) = attention_backward(&tape.q_anchor, &tape.kv_anchor, &tape.fuse.weights, &g_fused)?;
    let anchor = d_q_anchor.add(&g_fused)?;

    // contextual compression receives the gradient of X̂^kv
    let (q_contextual, contextual) = attention_backward(&tape.q_ctx, &tape.kv_ctx, &tape.ctx.weights, &d_kv_anchor)?;

    let (q_noncontextual, noncontextual) = match (&tape.kv_non, &tape.non) {
        (Some(kv), Some(t)) => attention_backward(&tape.q_non, kv, &t.weights, &g_non)?,
        _ => (Matrix::zeros(n_non, dim), Matrix::zeros(0, dim)),
    };
    debug_assert_eq!(contextual.rows(), inputs.contextual.len());
    Ok(PlcGradients {
        q_contextual,
        q_noncontextual,
        contextual,
        noncontextual,
        anchor,
    })
}

/// Forward then backward from raw tokens; also returns the gradient with
/// respect to the full token matrix.
pub fn compress_backward(
    tokens: &VisualTokens,
    region: &Region,
    params: &PlcParams,
    upstream: &Matrix,
) -> Result<(PlcGradients, Matrix), PlcError> {
    let inputs = PlcInputs::gather(tokens, region, params)?;
    let tape = forward(params, &inputs)?;
    let grads = backward(params, &inputs, &tape, upstream)?;
    let full = grads.scatter(&inputs, tokens.len());
    Ok((grads, full))
}
