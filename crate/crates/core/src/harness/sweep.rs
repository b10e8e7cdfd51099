//! Pruning-layer sweeps: proxy quality and cost as functions of `K` and rate.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::grid::{region_to_tokens, Region};
use crate::ilp::{count_flops, proxy_quality, MultimodalSequence, PositionPolicy, ToyTransformer};
use crate::localizer::{fit_budget_dataset, BudgetSpec};

/// How a layer index `K` maps to the number of blocks run on the full
/// sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrunePoint {
    /// Prune once block `K` has finished: `K` full blocks.
    #[default]
    After,
    /// Prune at the input of block `K`: `K - 1` full blocks.
    Input,
}

impl PrunePoint {
    pub fn blocks_before(self, k: usize, layers: usize) -> Result<usize, HarnessError> {
        if k > layers {
            return Err(HarnessError::Config(format!("K = {k} exceeds the model's {layers} layers")));
        }
        match self {
            PrunePoint::After => Ok(k),
            PrunePoint::Input if k == 0 => Err(HarnessError::Config("K = 0 has no input to prune at".into())),
            PrunePoint::Input => Ok(k - 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub ks: Vec<usize>,
    pub rates: Vec<f64>,
    pub point: PrunePoint,
    pub policy: PositionPolicy,
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub rate: f64,
    pub achieved_rate: f64,
    pub proxy_quality: f64,
    /// Summed over the dataset.
    pub flops: u64,
    pub wall_time_s: Option<f64>,
}

/// One sample prepared for the sweep: the sequence and the region the
/// budget fit starts from.
pub struct SweepItem {
    pub sequence: MultimodalSequence,
    pub region: Region,
}

pub fn sweep_k(model: &ToyTransformer, items: &[SweepItem], spec: &SweepSpec) -> Result<Vec<SweepRow>, HarnessError> {
    let cfg = *model.config();
    let Some(first) = items.first() else {
        return Err(HarnessError::Data("empty dataset".into()));
    };
    let grid = first.sequence.visual().grid();
    if items.iter().any(|it| it.sequence.visual().grid() != grid) {
        return Err(HarnessError::Data("sweep needs every sample on the same token grid".into()));
    }
    let blocks: Vec<usize> = spec
        .ks
        .iter()
        .map(|&k| spec.point.blocks_before(k, cfg.layers))
        .collect::<Result<_, _>>()?;
    let baselines: Vec<_> = items
        .iter()
        .map(|it| model.forward_baseline(&it.sequence))
        .collect::<Result<_, _>>()?;
    let regions: Vec<Region> = items.iter().map(|it| it.region).collect();

    let mut rows = Vec::new();
    for &rate in &spec.rates {
        let budget = BudgetSpec::new(rate, grid)?;
        let fits = fit_budget_dataset(&regions, &budget);
        let keeps: Vec<_> = fits.iter().map(|f| region_to_tokens(&f.region, &grid)).collect();
        let kept: usize = keeps.iter().map(|k| k.len()).sum();
        let achieved_rate = 1.0 - kept as f64 / (grid.total_tokens() * items.len()) as f64;
        for (&k, &before) in spec.ks.iter().zip(&blocks) {
            let mut quality = 0.0;
            let mut flops = 0u64;
            let start = Instant::now();
            for ((it, keep), base) in items.iter().zip(&keeps).zip(&baselines) {
                let trace = model.forward_pruned(&it.sequence, before, keep.indices(), spec.policy)?;
                quality += proxy_quality(base, &trace);
                let len_after = trace.rows.len() as u64;
                flops += count_flops(it.sequence.len() as u64, len_after, before as u64, cfg.layers as u64, cfg.dim as u64, cfg.heads as u64, cfg.mlp as u64);
            }
            let elapsed = start.elapsed().as_secs_f64();
            rows.push(SweepRow {
                k,
                rate,
                achieved_rate,
                proxy_quality: quality / items.len() as f64,
                flops,
                wall_time_s: spec.timing.then_some(elapsed),
            });
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "k,rate,achieved_rate,proxy_quality,flops,wall_time_s";

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let wall = r.wall_time_s.map(|w| format!("{w:.6}")).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{:.6},{:.12},{},{}\n",
            r.k, r.rate, r.achieved_rate, r.proxy_quality, r.flops, wall
        ));
    }
    s
}
