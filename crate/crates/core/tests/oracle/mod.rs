//! Scalar reference implementations used as test oracles. Everything here is
//! written with plain loops over `Vec<Vec<f64>>` and shares no math with the
//! library beyond reading model weights.

#![allow(dead_code)]

use crop_core::grid::{Region, TokenGrid};
use crop_core::ilp::ToyTransformer;
use crop_core::plc::{compress, compress_backward, PlcParams};
use crop_core::tensor::Matrix;
use crop_core::tokens::VisualTokens;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rows = Vec<Vec<f64>>;

/// Block column (or row) whose span contains the center of token `t` on a
/// `side`-token axis: `floor(8 · (t + 0.5) / side)`.
pub fn center_block(t: usize, side: usize) -> usize {
    (8 * (2 * t + 1)) / (2 * side)
}

pub fn covers(region: &Region, side: usize, row: usize, col: usize) -> bool {
    let bx = center_block(col, side);
    let by = center_block(row, side);
    (region.x_min() as usize..=region.x_max() as usize).contains(&bx)
        && (region.y_min() as usize..=region.y_max() as usize).contains(&by)
}

/// Brute-force region membership over every token of every view.
pub fn brute_tokens(region: &Region, side: usize, views: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for v in 0..views {
        for r in 0..side {
            for c in 0..side {
                if covers(region, side, r, c) {
                    out.push(v * side * side + r * side + c);
                }
            }
        }
    }
    out
}

pub fn to_rows(m: &Matrix) -> Rows {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn max_abs(a: &Rows, b: &Matrix) -> f64 {
    assert_eq!(a.len(), b.rows(), "row count");
    let mut worst = 0.0f64;
    for (i, row) in a.iter().enumerate() {
        assert_eq!(row.len(), b.cols(), "column count");
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((v - b.get(i, j)).abs());
        }
    }
    worst
}

fn sinusoid(pos: f64, width: usize) -> Vec<f64> {
    (0..width)
        .map(|i| {
            let angle = pos / 10000f64.powf((2 * (i / 2)) as f64 / width as f64);
            if i % 2 == 0 { angle.sin() } else { angle.cos() }
        })
        .collect()
}

pub fn slot_pe(i: usize, d: usize) -> Vec<f64> {
    sinusoid(i as f64, d)
}

pub fn token_pe(row: usize, col: usize, d: usize) -> Vec<f64> {
    let mut v = sinusoid(row as f64, d - d / 2);
    v.extend(sinusoid(col as f64, d / 2));
    v
}

fn plus(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Single-head scaled dot-product attention with keys = values = `kv`.
pub fn attend(q: &Rows, kv: &Rows) -> Rows {
    let d = kv[0].len();
    let scale = 1.0 / (d as f64).sqrt();
    q.iter()
        .map(|qi| {
            let logits: Vec<f64> = kv
                .iter()
                .map(|k| qi.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale)
                .collect();
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
            let z: f64 = e.iter().sum();
            let mut out = vec![0.0; d];
            for (w, k) in e.iter().zip(kv) {
                for (o, x) in out.iter_mut().zip(k) {
                    *o += w / z * x;
                }
            }
            out
        })
        .collect()
}

pub struct PlcCase {
    pub tokens: Rows,
    pub side: usize,
    pub views: usize,
    pub region: Region,
    pub q_ctx: Rows,
    pub q_non: Rows,
    pub anchor: usize,
}

impl PlcCase {
    fn pos(&self, index: usize) -> (usize, usize) {
        let rem = index % (self.side * self.side);
        (rem / self.side, rem % self.side)
    }

    fn with_pe(&self, rows: &[usize]) -> Rows {
        let d = self.tokens[0].len();
        rows.iter()
            .map(|&r| {
                let (row, col) = self.pos(r);
                plus(&self.tokens[r], &token_pe(row, col, d))
            })
            .collect()
    }

    fn with_slots(m: &Rows) -> Rows {
        m.iter().enumerate().map(|(i, v)| plus(v, &slot_pe(i, v.len()))).collect()
    }

    fn parts(&self) -> (Rows, Rows) {
        let d = self.tokens[0].len();
        let inside = brute_tokens(&self.region, self.side, self.views);
        let outside: Vec<usize> = (0..self.tokens.len()).filter(|i| !inside.contains(i)).collect();
        let ctx = attend(&Self::with_slots(&self.q_ctx), &self.with_pe(&inside));
        let non = if outside.is_empty() {
            vec![vec![0.0; d]; self.q_non.len()]
        } else {
            attend(&Self::with_slots(&self.q_non), &self.with_pe(&outside))
        };
        (ctx, non)
    }

    /// Anchor patch rows: centered on the region's token extent in view 0,
    /// corner rounded down and clamped to the grid.
    pub fn anchor_rows(&self) -> Vec<usize> {
        let p = (self.anchor as f64).sqrt().round() as usize;
        let (mut r_lo, mut r_hi, mut c_lo, mut c_hi) = (usize::MAX, 0, usize::MAX, 0);
        for r in 0..self.side {
            for c in 0..self.side {
                if covers(&self.region, self.side, r, c) {
                    r_lo = r_lo.min(r);
                    r_hi = r_hi.max(r + 1);
                    c_lo = c_lo.min(c);
                    c_hi = c_hi.max(c + 1);
                }
            }
        }
        let corner = |lo: usize, hi: usize| ((lo + hi) as f64 / 2.0 - p as f64 / 2.0).floor().clamp(0.0, (self.side - p) as f64) as usize;
        let (r0, c0) = (corner(r_lo, r_hi), corner(c_lo, c_hi));
        let mut out = Vec::new();
        for r in r0..r0 + p {
            for c in c0..c0 + p {
                out.push(r * self.side + c);
            }
        }
        out
    }

    pub fn compress(&self) -> Rows {
        let (ctx, non) = self.parts();
        let anchor = self.anchor_rows();
        let fused = attend(&self.with_pe(&anchor), &Self::with_slots(&ctx));
        let mut out: Rows = fused.iter().zip(&anchor).map(|(f, &a)| plus(f, &self.tokens[a])).collect();
        out.extend(non);
        out
    }

    pub fn compress_ablated(&self) -> Rows {
        let (mut ctx, non) = self.parts();
        ctx.extend(non);
        ctx
    }

    pub fn library_inputs(&self) -> (VisualTokens, PlcParams) {
        let grid = TokenGrid::new(self.side, self.views).unwrap();
        let tokens = VisualTokens::new(grid, Matrix::from_rows(&self.tokens).unwrap()).unwrap();
        let params = PlcParams::new(Matrix::from_rows(&self.q_ctx).unwrap(), Matrix::from_rows(&self.q_non).unwrap(), self.anchor).unwrap();
        (tokens, params)
    }
}

fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, std: f64) -> Rows {
    let normal = rand_distr::Normal::new(0.0, std).unwrap();
    (0..n).map(|_| (0..d).map(|_| rng.sample(normal)).collect()).collect()
}

pub fn random_region(rng: &mut ChaCha8Rng) -> Region {
    let a: i64 = rng.random_range(0..8);
    let b: i64 = rng.random_range(0..8);
    let c: i64 = rng.random_range(0..8);
    let e: i64 = rng.random_range(0..8);
    Region::new(a.min(c), b.min(e), a.max(c), b.max(e)).unwrap()
}

/// A seeded compression instance. Sides are at least 8 so every region keeps
/// at least one token and an 8×8 anchor patch fits.
pub fn plc_case(seed: u64, dim: usize, n_ctx: usize, n_non: usize, anchor: usize) -> PlcCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = rng.random_range(8..=14);
    let views = rng.random_range(1..=2);
    let region = random_region(&mut rng);
    let n = side * side * views;
    PlcCase {
        tokens: gaussian_rows(&mut rng, n, dim, 1.0),
        side,
        views,
        region,
        q_ctx: gaussian_rows(&mut rng, n_ctx, dim, 1.0 / (dim as f64).sqrt()),
        q_non: gaussian_rows(&mut rng, n_non, dim, 1.0 / (dim as f64).sqrt()),
        anchor,
    }
}

fn rms_norm(x: &[f64], gain: &[f64]) -> Vec<f64> {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let inv = 1.0 / (ms + 1e-6).sqrt();
    x.iter().zip(gain).map(|(v, g)| v * inv * g).collect()
}

fn vec_mat(x: &[f64], w: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; w.cols()];
    for (j, o) in out.iter_mut().enumerate() {
        for (i, xi) in x.iter().enumerate() {
            *o += xi * w.get(i, j);
        }
    }
    out
}

fn rope(x: &mut [f64], pos: usize, heads: usize) {
    let hd = x.len() / heads;
    for h in 0..heads {
        for j in 0..hd / 2 {
            let theta = pos as f64 * 10000f64.powf(-((2 * j) as f64) / hd as f64);
            let (a, b) = (x[h * hd + 2 * j], x[h * hd + 2 * j + 1]);
            x[h * hd + 2 * j] = a * theta.cos() - b * theta.sin();
            x[h * hd + 2 * j + 1] = a * theta.sin() + b * theta.cos();
        }
    }
}

/// Full causal decoder forward with positions `0..n`; returns the final rows.
pub fn decoder_forward(model: &ToyTransformer, input: &Rows) -> Rows {
    let cfg = model.config();
    let (heads, hd) = (cfg.heads, cfg.dim / cfg.heads);
    let mut x = input.clone();
    for b in model.blocks() {
        let n = x.len();
        let mut q = Vec::with_capacity(n);
        let mut k = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for (i, row) in x.iter().enumerate() {
            let a = rms_norm(row, &b.attn_norm);
            let mut qi = vec_mat(&a, &b.wq);
            let mut ki = vec_mat(&a, &b.wk);
            rope(&mut qi, i, heads);
            rope(&mut ki, i, heads);
            q.push(qi);
            k.push(ki);
            v.push(vec_mat(&a, &b.wv));
        }
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let mut ctx = vec![0.0; cfg.dim];
            for h in 0..heads {
                let span = h * hd..(h + 1) * hd;
                let scores: Vec<f64> = (0..=i)
                    .map(|j| q[i][span.clone()].iter().zip(&k[j][span.clone()]).map(|(a, b)| a * b).sum::<f64>() / (hd as f64).sqrt())
                    .collect();
                let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|s| (s - mx).exp()).sum();
                for (j, s) in scores.iter().enumerate() {
                    let p = (s - mx).exp() / z;
                    for c in span.clone() {
                        ctx[c] += p * v[j][c];
                    }
                }
            }
            let h1 = plus(&x[i], &vec_mat(&ctx, &b.wo));
            let m = rms_norm(&h1, &b.mlp_norm);
            let up: Vec<f64> = vec_mat(&m, &b.w_up).into_iter().map(|u| u / (1.0 + (-u).exp())).collect();
            next.push(plus(&h1, &vec_mat(&up, &b.w_down)));
        }
        x = next;
    }
    x
}

/// Largest relative error between analytic and central-difference gradients
/// of `⟨upstream, compress(...)⟩` over `probes` random coordinates of each of
/// the contextual queries, non-contextual queries and input tokens.
///
/// Per coordinate the error is `|a − f| / max(|a|, |f|, 1e-6)`.
pub fn plc_gradient_error(case: &PlcCase, seed: u64, probes: usize) -> f64 {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (tokens, params) = case.library_inputs();
    let rows = params.config().output_rows();
    let upstream = Matrix::from_rows(&gaussian_rows(&mut rng, rows, params.dim(), 1.0)).unwrap();
    let (grads, token_grad) = compress_backward(&tokens, &case.region, &params, &upstream).unwrap();
    let loss = |t: &VisualTokens, p: &PlcParams| compress(t, &case.region, p).unwrap().tokens.frobenius_dot(&upstream);
    let rel = |a: f64, f: f64| (a - f).abs() / a.abs().max(f.abs()).max(1e-6);

    let mut worst = 0.0f64;
    for which in 0..3 {
        let analytic = match which {
            0 => &grads.q_contextual,
            1 => &grads.q_noncontextual,
            _ => &token_grad,
        };
        for _ in 0..probes {
            let i = rng.random_range(0..analytic.rows());
            let j = rng.random_range(0..analytic.cols());
            let eval = |delta: f64| -> f64 {
                match which {
                    0 | 1 => {
                        let mut qc = params.q_contextual().clone();
                        let mut qn = params.q_noncontextual().clone();
                        let m = if which == 0 { &mut qc } else { &mut qn };
                        m.set(i, j, m.get(i, j) + delta);
                        loss(&tokens, &params.with_queries(qc, qn).unwrap())
                    }
                    _ => {
                        let mut e = tokens.embeddings().clone();
                        e.set(i, j, e.get(i, j) + delta);
                        loss(&VisualTokens::new(tokens.grid(), e).unwrap(), &params)
                    }
                }
            };
            let fd = (eval(H) - eval(-H)) / (2.0 * H);
            worst = worst.max(rel(analytic.get(i, j), fd));
        }
    }
    worst
}
