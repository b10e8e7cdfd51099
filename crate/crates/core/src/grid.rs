//! Block-coordinate regions on the 8×8 localization grid and their mapping
//! onto visual-token index sets.
//!
//! A [`Region`] is an inclusive rectangle of grid blocks. A [`TokenGrid`]
//! describes how an `side × side` visual-token array (repeated once per
//! image view) lies under that grid. A token belongs to a region when its
//! cell center falls inside the region's half-open continuous extent, which
//! keeps the rule well defined for sides that are not multiples of 8.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of blocks along each edge of the localization grid.
pub const GRID_BLOCKS: u8 = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("region field `{token}` is not an integer")]
    NotAnInteger { token: String },
    #[error("expected 4 region fields, found {found} in `{text}`")]
    FieldCount { found: usize, text: String },
    #[error("invalid region [{x_min}, {y_min}, {x_max}, {y_max}]: coordinates must satisfy 0 <= min <= max <= 7")]
    InvalidRegion {
        x_min: i64,
        y_min: i64,
        x_max: i64,
        y_max: i64,
    },
    #[error("invalid token grid: side {side}, views {views}")]
    InvalidGrid { side: usize, views: usize },
}

/// Inclusive rectangle of blocks on the 8×8 grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RegionRepr", into = "RegionRepr")]
pub struct Region {
    x_min: u8,
    y_min: u8,
    x_max: u8,
    y_max: u8,
}

#[derive(Serialize, Deserialize)]
struct RegionRepr([i64; 4]);

impl TryFrom<RegionRepr> for Region {
    type Error = GridError;
    fn try_from(r: RegionRepr) -> Result<Self, GridError> {
        let [a, b, c, d] = r.0;
        Region::new(a, b, c, d)
    }
}

impl From<Region> for RegionRepr {
    fn from(r: Region) -> Self {
        RegionRepr([
            r.x_min as i64,
            r.y_min as i64,
            r.x_max as i64,
            r.y_max as i64,
        ])
    }
}

impl Region {
    pub const FULL: Region = Region {
        x_min: 0,
        y_min: 0,
        x_max: GRID_BLOCKS - 1,
        y_max: GRID_BLOCKS - 1,
    };

    pub fn new(x_min: i64, y_min: i64, x_max: i64, y_max: i64) -> Result<Self, GridError> {
        let hi = (GRID_BLOCKS - 1) as i64;
        let ok = (0..=hi).contains(&x_min)
            && (0..=hi).contains(&y_min)
            && (x_min..=hi).contains(&x_max)
            && (y_min..=hi).contains(&y_max);
        if !ok {
            return Err(GridError::InvalidRegion {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Region {
            x_min: x_min as u8,
            y_min: y_min as u8,
            x_max: x_max as u8,
            y_max: y_max as u8,
        })
    }

    /// Region of `width × height` blocks with its top-left block at `(x, y)`.
    pub fn from_origin(x: u8, y: u8, width: u8, height: u8) -> Result<Self, GridError> {
        Region::new(
            x as i64,
            y as i64,
            x as i64 + width as i64 - 1,
            y as i64 + height as i64 - 1,
        )
    }

    pub fn x_min(&self) -> u8 {
        self.x_min
    }
    pub fn y_min(&self) -> u8 {
        self.y_min
    }
    pub fn x_max(&self) -> u8 {
        self.x_max
    }
    pub fn y_max(&self) -> u8 {
        self.y_max
    }

    pub fn width(&self) -> u8 {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> u8 {
        self.y_max - self.y_min + 1
    }

    pub fn block_area(&self) -> u32 {
        self.width() as u32 * self.height() as u32
    }

    pub fn contains(&self, other: &Region) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    pub fn contains_block(&self, x: u8, y: u8) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn intersection(&self, other: &Region) -> Option<Region> {
        let x_min = self.x_min.max(other.x_min);
        let y_min = self.y_min.max(other.y_min);
        let x_max = self.x_max.min(other.x_max);
        let y_max = self.y_max.min(other.y_max);
        (x_min <= x_max && y_min <= y_max).then_some(Region {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Every valid region, in lexicographic `(x_min, y_min, x_max, y_max)` order.
    pub fn all() -> impl Iterator<Item = Region> {
        let n = GRID_BLOCKS;
        (0..n).flat_map(move |x0| {
            (0..n).flat_map(move |y0| {
                (x0..n).flat_map(move |x1| {
                    (y0..n).map(move |y1| Region {
                        x_min: x0,
                        y_min: y0,
                        x_max: x1,
                        y_max: y1,
                    })
                })
            })
        })
    }

    /// Textual form used by the localizer reply: `x_min y_min x_max y_max`.
    pub fn format(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.x_min, self.y_min, self.x_max, self.y_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    XMin,
    YMin,
    XMax,
    YMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
}

/// A correction applied while turning localizer output into a valid region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RepairEvent {
    Clamped { field: Field, from: i64, to: u8 },
    Swapped { axis: Axis },
}

impl fmt::Display for RepairEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RepairEvent::Clamped { field, from, to } => {
                write!(f, "clamped {field:?} from {from} to {to}")
            }
            RepairEvent::Swapped { axis } => write!(f, "swapped {axis:?} min/max"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedRegion {
    pub region: Region,
    pub repairs: Vec<RepairEvent>,
}

/// Parses `"<x_min> <y_min> <x_max> <y_max>"` (angle brackets optional, a
/// trailing period tolerated). Out-of-range coordinates are clamped into
/// `0..=7` and inverted pairs swapped; each correction is reported.
pub fn parse_region(text: &str) -> Result<ParsedRegion, GridError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(GridError::FieldCount {
            found: fields.len(),
            text: text.to_string(),
        });
    }
    let mut raw = [0i64; 4];
    for (slot, token) in raw.iter_mut().zip(&fields) {
        let trimmed = token
            .trim_end_matches('.')
            .trim_start_matches('<')
            .trim_end_matches('>');
        *slot = trimmed.parse().map_err(|_| GridError::NotAnInteger {
            token: token.to_string(),
        })?;
    }

    let mut repairs = Vec::new();
    let hi = (GRID_BLOCKS - 1) as i64;
    let names = [Field::XMin, Field::YMin, Field::XMax, Field::YMax];
    let mut v = [0u8; 4];
    for i in 0..4 {
        let c = raw[i].clamp(0, hi);
        if c != raw[i] {
            repairs.push(RepairEvent::Clamped {
                field: names[i],
                from: raw[i],
                to: c as u8,
            });
        }
        v[i] = c as u8;
    }
    if v[0] > v[2] {
        v.swap(0, 2);
        repairs.push(RepairEvent::Swapped { axis: Axis::X });
    }
    if v[1] > v[3] {
        v.swap(1, 3);
        repairs.push(RepairEvent::Swapped { axis: Axis::Y });
    }
    let region = Region {
        x_min: v[0],
        y_min: v[1],
        x_max: v[2],
        y_max: v[3],
    };
    Ok(ParsedRegion { region, repairs })
}

/// Layout of a visual-token array: `views` images of `side × side` tokens,
/// stored view-major then row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenGrid {
    side: usize,
    views: usize,
}

/// Grid position of one visual token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenPos {
    pub view: usize,
    pub row: usize,
    pub col: usize,
}

impl TokenGrid {
    pub fn new(side: usize, views: usize) -> Result<Self, GridError> {
        if side == 0 || views == 0 {
            return Err(GridError::InvalidGrid { side, views });
        }
        Ok(TokenGrid { side, views })
    }

    pub fn single(side: usize) -> Result<Self, GridError> {
        TokenGrid::new(side, 1)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn tokens_per_view(&self) -> usize {
        self.side * self.side
    }

    pub fn total_tokens(&self) -> usize {
        self.views * self.tokens_per_view()
    }

    pub fn index(&self, pos: TokenPos) -> usize {
        pos.view * self.tokens_per_view() + pos.row * self.side + pos.col
    }

    pub fn pos(&self, index: usize) -> TokenPos {
        let per = self.tokens_per_view();
        let view = index / per;
        let rem = index % per;
        TokenPos {
            view,
            row: rem / self.side,
            col: rem % self.side,
        }
    }

    /// Half-open token range `lo..hi` along one axis covered by blocks
    /// `block_min..=block_max`, under the cell-center rule.
    ///
    /// Token `t` is inside iff `block_min/8 <= (t+0.5)/side < (block_max+1)/8`,
    /// i.e. `2·side·block_min <= 16t + 8 < 2·side·(block_max+1)`.
    pub fn axis_span(&self, block_min: u8, block_max: u8) -> (usize, usize) {
        let first_center_at_or_after = |block: usize| -> usize {
            // smallest t with 16t + 8 >= 2·side·block
            let need = 2 * self.side * block;
            if need <= 8 {
                0
            } else {
                (need - 8).div_ceil(16)
            }
        };
        let lo = first_center_at_or_after(block_min as usize);
        let hi = first_center_at_or_after(block_max as usize + 1).min(self.side);
        (lo.min(hi), hi)
    }

    /// Token-coordinate rectangle `(rows, cols)` a region covers in each view.
    pub fn token_extent(&self, region: &Region) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (r0, r1) = self.axis_span(region.y_min, region.y_max);
        let (c0, c1) = self.axis_span(region.x_min, region.x_max);
        (r0..r1, c0..c1)
    }
}

/// Sorted, duplicate-free token row indices into a grid's token matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenIndexSet {
    indices: Vec<usize>,
    grid: TokenGrid,
}

impl TokenIndexSet {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn grid(&self) -> TokenGrid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    /// Indices of the grid not in this set, ascending.
    pub fn complement(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.grid.total_tokens() - self.indices.len());
        let mut it = self.indices.iter().peekable();
        for i in 0..self.grid.total_tokens() {
            if it.peek() == Some(&&i) {
                it.next();
            } else {
                out.push(i);
            }
        }
        out
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.indices
    }
}

/// Maps a region to the visual tokens whose cell centers it covers, applying
/// the same region to every view.
pub fn region_to_tokens(region: &Region, grid: &TokenGrid) -> TokenIndexSet {
    let (rows, cols) = grid.token_extent(region);
    let mut indices = Vec::with_capacity(grid.views * rows.len() * cols.len());
    for view in 0..grid.views {
        for row in rows.clone() {
            for col in cols.clone() {
                indices.push(grid.index(TokenPos { view, row, col }));
            }
        }
    }
    TokenIndexSet {
        indices,
        grid: *grid,
    }
}

/// Area-based recall: `|gt ∩ pred| / |gt|` in blocks.
pub fn recall(gt: &Region, pred: &Region) -> f64 {
    let inter = gt.intersection(pred).map_or(0, |r| r.block_area());
    inter as f64 / gt.block_area() as f64
}

/// Returns a region with `target`'s width and height centered on `source`'s
/// center, shifted the minimum amount needed to stay on the grid.
///
/// Half-block centers round toward the top-left.
pub fn resize_to_match(source: &Region, target: &Region) -> Region {
    let place = |lo: u8, hi: u8, len: u8| -> u8 {
        // twice the ideal start: (lo + hi) - (len - 1)
        let doubled = lo as i64 + hi as i64 - (len as i64 - 1);
        let start = doubled.div_euclid(2);
        start.clamp(0, (GRID_BLOCKS - len) as i64) as u8
    };
    let w = target.width();
    let h = target.height();
    let x = place(source.x_min, source.x_max, w);
    let y = place(source.y_min, source.y_max, h);
    Region {
        x_min: x,
        y_min: y,
        x_max: x + w - 1,
        y_max: y + h - 1,
    }
}
