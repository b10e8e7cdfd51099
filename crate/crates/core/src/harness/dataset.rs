//! JSON Lines datasets of evaluation samples and seeded synthetic content.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::grid::{parse_region, region_to_tokens, Region, TokenGrid, GRID_BLOCKS};
use crate::ilp::MultimodalSequence;
use crate::localizer::sample_rng;
use crate::tensor::Matrix;
use crate::tokens::VisualTokens;

fn one() -> usize {
    1
}

/// One evaluation unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub side: usize,
    #[serde(default = "one")]
    pub views: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_region: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<Vec<f64>>>,
    pub m: usize,
    pub query_len: usize,
}

/// Synthetic content knobs.
///
/// Every token is `N(0, 1)` noise. Tokens inside the ground-truth region
/// add `key · s + content · c` and query rows add `query_key · s`, for two
/// per-sample random directions: `s` lets the query find the region, `c` is
/// information only the region holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub key: f64,
    pub content: f64,
    pub query_key: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            key: 4.0,
            content: 2.0,
            query_key: 4.0,
        }
    }
}

impl Sample {
    pub fn grid(&self) -> Result<TokenGrid, HarnessError> {
        TokenGrid::new(self.side, self.views).map_err(|e| HarnessError::Data(format!("sample `{}`: {e}", self.id)))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| HarnessError::Data(format!("sample `{}`: {msg}", self.id));
        let grid = self.grid()?;
        if self.m == 0 || self.query_len == 0 {
            return Err(bad("prompt lengths must be positive".into()));
        }
        match (&self.seed, &self.tokens) {
            (Some(_), None) => {}
            (None, Some(rows)) => {
                if rows.len() != grid.total_tokens() {
                    return Err(bad(format!("{} token rows for a grid of {}", rows.len(), grid.total_tokens())));
                }
                let w = rows.first().map_or(0, Vec::len);
                if w == 0 || rows.iter().any(|r| r.len() != w) {
                    return Err(bad("token rows must share a nonzero width".into()));
                }
            }
            _ => return Err(bad("exactly one of `seed` or `tokens` is required".into())),
        }
        if let Some(text) = &self.gt_region {
            parse_region(text).map_err(|e| bad(e.to_string()))?;
        }
        Ok(())
    }

    pub fn gt(&self) -> Result<Option<Region>, HarnessError> {
        self.gt_region
            .as_deref()
            .map(|t| {
                parse_region(t)
                    .map(|p| p.region)
                    .map_err(|e| HarnessError::Data(format!("sample `{}`: {e}", self.id)))
            })
            .transpose()
    }

    pub fn require_gt(&self) -> Result<Region, HarnessError> {
        self.gt()?
            .ok_or_else(|| HarnessError::Data(format!("sample `{}` has no gt_region", self.id)))
    }

    fn rng(&self, run_seed: u64) -> rand_chacha::ChaCha8Rng {
        sample_rng(self.seed.unwrap_or(0) ^ run_seed, &self.id)
    }

    /// Visual tokens of width `dim`: the embedded matrix if present,
    /// otherwise seeded synthetic tokens.
    pub fn visual_tokens(&self, dim: usize, synth: &SynthSpec, run_seed: u64) -> Result<VisualTokens, HarnessError> {
        let grid = self.grid()?;
        if let Some(rows) = &self.tokens {
            let m = Matrix::from_rows(rows).map_err(|e| HarnessError::Data(e.to_string()))?;
            if m.cols() != dim {
                return Err(HarnessError::Config(format!(
                    "sample `{}` embeds width-{} tokens but the model uses {dim}",
                    self.id,
                    m.cols()
                )));
            }
            return VisualTokens::new(grid, m).map_err(|e| HarnessError::Data(e.to_string()));
        }
        let mut rng = self.rng(run_seed);
        let (tokens, _) = synth_visual(&mut rng, grid, dim, self.gt()?, synth);
        VisualTokens::new(grid, tokens).map_err(|e| HarnessError::Data(e.to_string()))
    }

    /// Full system → visual → query sequence for a model of width `dim`.
    pub fn sequence(&self, dim: usize, synth: &SynthSpec, run_seed: u64) -> Result<MultimodalSequence, HarnessError> {
        let mut rng = self.rng(run_seed);
        let grid = self.grid()?;
        let (visual, direction) = match &self.tokens {
            Some(_) => (self.visual_tokens(dim, synth, run_seed)?.embeddings().clone(), vec![0.0; dim]),
            None => synth_visual(&mut rng, grid, dim, self.gt()?, synth),
        };
        let system = Matrix::gaussian(self.m, dim, 1.0, &mut rng);
        let mut query = Matrix::gaussian(self.query_len, dim, 1.0, &mut rng);
        for i in 0..query.rows() {
            for (q, s) in query.row_mut(i).iter_mut().zip(&direction) {
                *q += synth.query_key * s;
            }
        }
        let visual = VisualTokens::new(grid, visual).map_err(|e| HarnessError::Data(e.to_string()))?;
        MultimodalSequence::new(system, visual, query).map_err(HarnessError::from)
    }
}

fn synth_visual<R: Rng>(rng: &mut R, grid: TokenGrid, dim: usize, gt: Option<Region>, synth: &SynthSpec) -> (Matrix, Vec<f64>) {
    let mut tokens = Matrix::gaussian(grid.total_tokens(), dim, 1.0, rng);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let key: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
    let content: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
    if let Some(region) = gt {
        for &i in region_to_tokens(&region, &grid).indices() {
            for ((t, s), c) in tokens.row_mut(i).iter_mut().zip(&key).zip(&content) {
                *t += synth.key * s + synth.content * c;
            }
        }
    }
    (tokens, key)
}

pub fn read_samples<R: BufRead>(reader: R) -> Result<Vec<Sample>, HarnessError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Data(format!("line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Sample = serde_json::from_str(&line).map_err(|e| HarnessError::Data(format!("line {}: {e}", i + 1)))?;
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}

pub fn load_samples(path: &Path) -> Result<Vec<Sample>, HarnessError> {
    let f = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_samples(std::io::BufReader::new(f))
}

pub fn write_samples<W: Write>(mut w: W, samples: &[Sample]) -> std::io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parameters for [`generate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSpec {
    pub count: usize,
    pub side: usize,
    pub views: usize,
    pub m: usize,
    pub query_len: usize,
    /// Standard deviation, in blocks, of the ground-truth center around the
    /// grid center.
    pub center_spread: f64,
    pub min_dim: u8,
    pub max_dim: u8,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            count: 100,
            side: 24,
            views: 1,
            m: 8,
            query_len: 8,
            center_spread: 0.8,
            min_dim: 2,
            max_dim: 5,
        }
    }
}

/// Seeded synthetic samples whose ground-truth regions cluster around the
/// image center, the way salient content does in natural photos.
pub fn generate(spec: &GenSpec, seed: u64) -> Vec<Sample> {
    let spread = Normal::new(0.0, spec.center_spread.max(1e-9)).expect("finite spread");
    (0..spec.count)
        .map(|i| {
            let id = format!("synth-{i:05}");
            let mut rng = sample_rng(seed, &id);
            let w = rng.random_range(spec.min_dim..=spec.max_dim);
            let h = rng.random_range(spec.min_dim..=spec.max_dim);
            let place = |len: u8, rng: &mut rand_chacha::ChaCha8Rng| -> u8 {
                let center = GRID_BLOCKS as f64 / 2.0 + spread.sample(rng);
                let start = (center - len as f64 / 2.0).round();
                start.clamp(0.0, (GRID_BLOCKS - len) as f64) as u8
            };
            let x = place(w, &mut rng);
            let y = place(h, &mut rng);
            let gt = Region::from_origin(x, y, w, h).expect("placement fits");
            Sample {
                id,
                side: spec.side,
                views: spec.views,
                gt_region: Some(gt.format()),
                seed: Some(rng.random()),
                tokens: None,
                m: spec.m,
                query_len: spec.query_len,
            }
        })
        .collect()
}
