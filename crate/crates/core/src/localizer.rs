//! Contextual-region providers and budget fitting.
//!
//! The trained localization model is out of scope; its predictions arrive
//! through a JSON Lines file. Center and random providers serve as the
//! reference baselines for localization quality.

use std::collections::BTreeMap;
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::{parse_region, recall, region_to_tokens, resize_to_match, GridError, Region, RepairEvent, TokenGrid, GRID_BLOCKS};

#[derive(Debug, Error)]
pub enum LocalizerError {
    #[error("no prediction for sample `{0}`")]
    MissingSample(String),
    #[error("predictions line {line}: {message}")]
    BadLine { line: usize, message: String },
    #[error("predictions line {line}: {source}")]
    BadRegion {
        line: usize,
        #[source]
        source: GridError,
    },
    #[error("recall lists differ in length: {gt} ground truth vs {pred} predictions")]
    LengthMismatch { gt: usize, pred: usize },
    #[error("recall over an empty list")]
    Empty,
    #[error("pruning rate {0} outside [0, 1)")]
    Rate(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Deserialize)]
struct PredictionLine {
    id: String,
    region: String,
}

/// Region predictions keyed by sample id, in the localizer's reply format.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    regions: BTreeMap<String, (Region, Vec<RepairEvent>)>,
}

impl Predictions {
    /// Reads `{"id": ..., "region": "x0 y0 x1 y1"}` lines. Blank lines are
    /// skipped, unknown keys ignored, and a repeated id replaces the earlier
    /// entry with a warning.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, LocalizerError> {
        let mut regions = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: PredictionLine = serde_json::from_str(&line).map_err(|e| LocalizerError::BadLine {
                line: i + 1,
                message: e.to_string(),
            })?;
            let p = parse_region(&parsed.region).map_err(|source| LocalizerError::BadRegion { line: i + 1, source })?;
            for ev in &p.repairs {
                log::warn!("sample `{}`: {ev}", parsed.id);
            }
            if regions.insert(parsed.id.clone(), (p.region, p.repairs)).is_some() {
                log::warn!("duplicate prediction for `{}`; keeping the last one", parsed.id);
            }
        }
        Ok(Predictions { regions })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, LocalizerError> {
        let f = std::fs::File::open(path)?;
        Predictions::from_reader(std::io::BufReader::new(f))
    }

    pub fn insert(&mut self, id: impl Into<String>, region: Region) {
        self.regions.insert(id.into(), (region, Vec::new()));
    }

    pub fn get(&self, id: &str) -> Option<Region> {
        self.regions.get(id).map(|(r, _)| *r)
    }

    pub fn repairs(&self, id: &str) -> &[RepairEvent] {
        self.regions.get(id).map_or(&[], |(_, e)| e.as_slice())
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// Width and height in blocks that center/random regions adopt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDims {
    pub width: u8,
    pub height: u8,
}

impl BlockDims {
    pub fn of(region: &Region) -> Self {
        BlockDims {
            width: region.width(),
            height: region.height(),
        }
    }

    fn as_region(&self) -> Region {
        Region::from_origin(0, 0, self.width, self.height).expect("dims within grid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Localizer {
    FileBacked(Predictions),
    Center,
    Random { seed: u64 },
}

/// Per-sample RNG derived from `(seed, sample id)` only.
pub fn sample_rng(seed: u64, id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(bytes)
}

impl Localizer {
    /// `dims` sizes the center and random baselines and is ignored by the
    /// file-backed provider.
    pub fn localize(&self, id: &str, dims: BlockDims) -> Result<Region, LocalizerError> {
        match self {
            Localizer::FileBacked(p) => p.get(id).ok_or_else(|| LocalizerError::MissingSample(id.to_string())),
            Localizer::Center => Ok(center_region(dims)),
            Localizer::Random { seed } => Ok(random_region(*seed, id, dims)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Localizer::FileBacked(_) => "file",
            Localizer::Center => "center",
            Localizer::Random { .. } => "random",
        }
    }
}

pub fn center_region(dims: BlockDims) -> Region {
    resize_to_match(&Region::FULL, &dims.as_region())
}

/// Uniform over every placement of `dims` on the grid.
pub fn random_region(seed: u64, id: &str, dims: BlockDims) -> Region {
    let mut rng = sample_rng(seed, id);
    let x = rng.random_range(0..=GRID_BLOCKS - dims.width);
    let y = rng.random_range(0..=GRID_BLOCKS - dims.height);
    Region::from_origin(x, y, dims.width, dims.height).expect("placement fits")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub rate: f64,
    pub grid: TokenGrid,
}

impl BudgetSpec {
    pub fn new(rate: f64, grid: TokenGrid) -> Result<Self, LocalizerError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(LocalizerError::Rate(rate));
        }
        Ok(BudgetSpec { rate, grid })
    }

    /// `round((1 - rate) · total)`, at least one token.
    pub fn kept_target(&self) -> usize {
        let t = ((1.0 - self.rate) * self.grid.total_tokens() as f64).round() as usize;
        t.max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Up,
    Right,
    Down,
}

const GROW_ORDER: [Side; 4] = [Side::Right, Side::Down, Side::Left, Side::Up];
const SHRINK_ORDER: [Side; 4] = [Side::Left, Side::Up, Side::Right, Side::Down];

fn step(region: &Region, side: Side, grow: bool) -> Option<Region> {
    let (mut x0, mut y0, mut x1, mut y1) = (
        region.x_min() as i64,
        region.y_min() as i64,
        region.x_max() as i64,
        region.y_max() as i64,
    );
    let d = if grow { 1 } else { -1 };
    match side {
        Side::Left => x0 -= d,
        Side::Up => y0 -= d,
        Side::Right => x1 += d,
        Side::Down => y1 += d,
    }
    Region::new(x0, y0, x1, y1).ok()
}

fn kept(region: &Region, grid: &TokenGrid) -> usize {
    region_to_tokens(region, grid).len()
}

/// Result of fitting one region, with the number of greedy moves taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fit {
    pub region: Region,
    pub kept: usize,
    pub steps: usize,
}

/// Grows or shrinks `region` one block-strip at a time toward `target`
/// kept tokens.
///
/// Under target only growth is tried, over target only shrinking, so the
/// result always contains or is contained by the input. Each move picks the
/// strip whose result lands closest to the target (ties: right, down, left,
/// up when growing; left, up, right, down when shrinking) and the loop stops
/// once no move strictly reduces the distance.
pub fn fit_to_count(region: &Region, grid: &TokenGrid, target: usize) -> Fit {
    let mut cur = *region;
    let mut cur_kept = kept(&cur, grid);
    let grow = cur_kept < target;
    let order = if grow { GROW_ORDER } else { SHRINK_ORDER };
    let mut steps = 0;
    while cur_kept != target {
        let best = order
            .iter()
            .filter_map(|&s| step(&cur, s, grow))
            .map(|r| (kept(&r, grid), r))
            .min_by_key(|(k, _)| k.abs_diff(target));
        match best {
            Some((k, r)) if k.abs_diff(target) < cur_kept.abs_diff(target) => {
                cur = r;
                cur_kept = k;
                steps += 1;
            }
            _ => break,
        }
    }
    Fit {
        region: cur,
        kept: cur_kept,
        steps,
    }
}

pub fn fit_budget(region: &Region, spec: &BudgetSpec) -> Region {
    fit_to_count(region, &spec.grid, spec.kept_target()).region
}

/// Fits a whole dataset so its average kept count tracks the target.
///
/// Each sample is fitted toward the target plus the running shortfall of the
/// samples before it, so per-sample rounding to whole blocks does not
/// accumulate into the dataset average.
pub fn fit_budget_dataset(regions: &[Region], spec: &BudgetSpec) -> Vec<Fit> {
    let target = spec.kept_target() as i64;
    let total = spec.grid.total_tokens() as i64;
    let mut carry: i64 = 0;
    regions
        .iter()
        .map(|r| {
            let adjusted = (target + carry).clamp(1, total) as usize;
            let fit = fit_to_count(r, &spec.grid, adjusted);
            carry += target - fit.kept as i64;
            fit
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallSummary {
    pub count: usize,
    pub mean: f64,
    pub above_0_5: usize,
    pub above_0_7: usize,
    pub above_0_9: usize,
}

pub fn mean_recall(gt: &[Region], pred: &[Region]) -> Result<RecallSummary, LocalizerError> {
    if gt.len() != pred.len() {
        return Err(LocalizerError::LengthMismatch {
            gt: gt.len(),
            pred: pred.len(),
        });
    }
    if gt.is_empty() {
        return Err(LocalizerError::Empty);
    }
    let values: Vec<f64> = gt.iter().zip(pred).map(|(g, p)| recall(g, p)).collect();
    let above = |t: f64| values.iter().filter(|&&v| v > t).count();
    Ok(RecallSummary {
        count: values.len(),
        mean: values.iter().sum::<f64>() / values.len() as f64,
        above_0_5: above(0.5),
        above_0_7: above(0.7),
        above_0_9: above(0.9),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(a: i64, b: i64, c: i64, d: i64) -> Region {
        Region::new(a, b, c, d).unwrap()
    }

    #[test]
    fn file_backed_lookup_and_repairs() {
        let text = "{\"id\":\"a\",\"region\":\"2 1 5 2\",\"score\":0.3}\n\n{\"id\":\"b\",\"region\":\"<9> <1> <5> <-1>\"}\n{\"id\":\"a\",\"region\":\"0 0 1 1\"}\n";
        let p = Predictions::from_reader(text.as_bytes()).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.get("a"), Some(r(0, 0, 1, 1)));
        assert_eq!(p.get("b"), Some(r(5, 0, 7, 1)));
        assert_eq!(p.repairs("b").len(), 4);
        let loc = Localizer::FileBacked(p);
        let dims = BlockDims { width: 1, height: 1 };
        assert!(matches!(loc.localize("zz", dims), Err(LocalizerError::MissingSample(_))));
    }

    #[test]
    fn file_backed_card_text_region() {
        let p = Predictions::from_reader("{\"id\":\"fig3\",\"region\":\"2 1 5 2\"}".as_bytes()).unwrap();
        let loc = Localizer::FileBacked(p);
        assert_eq!(loc.localize("fig3", BlockDims { width: 1, height: 1 }).unwrap(), r(2, 1, 5, 2));
    }

    #[test]
    fn malformed_prediction_lines() {
        assert!(matches!(
            Predictions::from_reader("{\"id\":\"a\"}".as_bytes()),
            Err(LocalizerError::BadLine { line: 1, .. })
        ));
        assert!(matches!(
            Predictions::from_reader("{\"id\":\"a\",\"region\":\"x 1 2 3\"}".as_bytes()),
            Err(LocalizerError::BadRegion { line: 1, .. })
        ));
    }

    #[test]
    fn center_examples() {
        assert_eq!(center_region(BlockDims { width: 4, height: 4 }), r(2, 2, 5, 5));
        assert_eq!(center_region(BlockDims { width: 8, height: 8 }), Region::FULL);
        assert_eq!(center_region(BlockDims { width: 3, height: 1 }), r(2, 3, 4, 3));
        let loc = Localizer::Center;
        let d = BlockDims { width: 2, height: 5 };
        assert_eq!(loc.localize("x", d).unwrap(), loc.localize("y", d).unwrap());
    }

    #[test]
    fn random_is_deterministic_per_sample() {
        let loc = Localizer::Random { seed: 5 };
        let d = BlockDims { width: 3, height: 2 };
        let a = loc.localize("s1", d).unwrap();
        assert_eq!(a, loc.localize("s1", d).unwrap());
        assert_eq!((a.width(), a.height()), (3, 2));
        let distinct: std::collections::BTreeSet<_> =
            (0..200).map(|i| loc.localize(&format!("s{i}"), d).unwrap()).collect();
        assert!(distinct.len() > 20);
    }

    #[test]
    fn fit_fixed_point_and_full_grid() {
        let g = TokenGrid::single(24).unwrap();
        let spec = BudgetSpec::new(1.0 - 72.0 / 576.0, g).unwrap();
        assert_eq!(spec.kept_target(), 72);
        assert_eq!(fit_budget(&r(2, 1, 5, 2), &spec), r(2, 1, 5, 2));
        let all = BudgetSpec::new(0.0, g).unwrap();
        assert_eq!(fit_budget(&r(3, 3, 3, 3), &all), Region::FULL);
        assert!(BudgetSpec::new(1.0, g).is_err());
        assert!(BudgetSpec::new(-0.1, g).is_err());
    }

    #[test]
    fn fit_grows_small_region_toward_64() {
        let g = TokenGrid::single(24).unwrap();
        let fit = fit_to_count(&r(3, 3, 4, 4), &g, 64);
        assert_eq!(fit.region, r(3, 3, 6, 4));
        assert_eq!(fit.kept, 72);
        // best achievable among all rectangles containing the input
        let best = Region::all()
            .filter(|c| c.contains(&r(3, 3, 4, 4)))
            .map(|c| region_to_tokens(&c, &g).len().abs_diff(64))
            .min()
            .unwrap();
        assert_eq!(fit.kept.abs_diff(64), best);
    }

    #[test]
    fn dataset_fit_tracks_average() {
        let g = TokenGrid::single(24).unwrap();
        let spec = BudgetSpec::new(0.889, g).unwrap();
        let regions: Vec<Region> = (0..50).map(|i| r(i % 4, i % 3, 4 + i % 4, 3 + i % 5)).collect();
        let fits = fit_budget_dataset(&regions, &spec);
        let avg = fits.iter().map(|f| f.kept as f64).sum::<f64>() / fits.len() as f64;
        assert!((avg - 64.0).abs() <= 1.0, "avg {avg}");
    }

    #[test]
    fn recall_summary() {
        let gt = vec![r(0, 0, 3, 3), r(1, 1, 4, 4), r(0, 0, 1, 1)];
        let s = mean_recall(&gt, &gt).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!((s.above_0_5, s.above_0_7, s.above_0_9), (3, 3, 3));
        let pred = vec![r(2, 2, 5, 5), r(1, 1, 4, 4), r(4, 4, 7, 7)];
        let s = mean_recall(&gt, &pred).unwrap();
        assert!((s.mean - 1.25 / 3.0).abs() < 1e-15);
        assert_eq!((s.above_0_5, s.above_0_7, s.above_0_9), (1, 1, 1));
        assert!(matches!(mean_recall(&[], &[]), Err(LocalizerError::Empty)));
        assert!(matches!(mean_recall(&gt, &pred[..2]), Err(LocalizerError::LengthMismatch { .. })));
    }

    proptest::proptest! {
        #[test]
        fn fit_stays_rectangular_and_nested(idx in 0usize..1296, rate in 0.0f64..0.99, side in proptest::sample::select(vec![8usize, 14, 24])) {
            let region = Region::all().nth(idx).unwrap();
            let g = TokenGrid::single(side).unwrap();
            let spec = BudgetSpec::new(rate, g).unwrap();
            let fit = fit_to_count(&region, &g, spec.kept_target());
            proptest::prop_assert!(fit.region.contains(&region) || region.contains(&fit.region));
            proptest::prop_assert!(fit.steps <= 28);
            let start = kept(&region, &g).abs_diff(spec.kept_target());
            proptest::prop_assert!(fit.kept.abs_diff(spec.kept_target()) <= start);
        }
    }
}
