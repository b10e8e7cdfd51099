//! Static overlays of regions and kept tokens on one view's token grid.

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::grid::{Region, TokenGrid, GRID_BLOCKS};

const CELL: usize = 10;
const MARGIN: usize = 20;
const PALETTE: [&str; 4] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd"];
const PPM_PALETTE: [[u8; 3]; 4] = [[214, 39, 40], [31, 119, 180], [44, 160, 44], [148, 103, 189]];

/// Token-cell rectangle covered by a region: `cols` and `rows` are
/// half-open ranges of token indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellRect {
    pub cols: std::ops::Range<usize>,
    pub rows: std::ops::Range<usize>,
}

pub fn cell_rect(region: &Region, side: usize) -> CellRect {
    let grid = TokenGrid::single(side).expect("positive side");
    let (rows, cols) = grid.token_extent(region);
    CellRect { cols, rows }
}

#[derive(Debug, Clone)]
pub struct Overlay {
    pub side: usize,
    pub regions: Vec<(String, Region)>,
    /// Kept token indices within one view; defaults to the union of the
    /// regions' tokens.
    pub kept: Option<Vec<usize>>,
}

impl Overlay {
    pub fn new(side: usize) -> Self {
        Overlay {
            side,
            regions: Vec::new(),
            kept: None,
        }
    }

    pub fn region(mut self, label: impl Into<String>, region: Region) -> Self {
        self.regions.push((label.into(), region));
        self
    }

    fn kept_set(&self) -> BTreeSet<usize> {
        match &self.kept {
            Some(k) => k.iter().copied().filter(|&i| i < self.side * self.side).collect(),
            None => {
                let mut s = BTreeSet::new();
                for (_, r) in &self.regions {
                    let c = cell_rect(r, self.side);
                    for row in c.rows.clone() {
                        for col in c.cols.clone() {
                            s.insert(row * self.side + col);
                        }
                    }
                }
                s
            }
        }
    }

    pub fn svg(&self) -> String {
        let n = self.side;
        let size = n * CELL + 2 * MARGIN;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
        );
        let _ = writeln!(s, r##"<rect x="0" y="0" width="{size}" height="{size}" fill="#ffffff"/>"##);
        let _ = writeln!(s, r##"<g id="kept" fill="#9ecae1">"##);
        for i in self.kept_set() {
            let (row, col) = (i / n, i % n);
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}"/>"#,
                MARGIN + col * CELL,
                MARGIN + row * CELL
            );
        }
        s.push_str("</g>\n");
        let _ = writeln!(s, r##"<g id="grid" stroke="#bbbbbb" stroke-width="0.5">"##);
        let end = MARGIN + n * CELL;
        for k in 0..=n {
            let p = MARGIN + k * CELL;
            let _ = writeln!(s, r#"<line x1="{p}" y1="{MARGIN}" x2="{p}" y2="{end}"/>"#);
            let _ = writeln!(s, r#"<line x1="{MARGIN}" y1="{p}" x2="{end}" y2="{p}"/>"#);
        }
        s.push_str("</g>\n");
        let _ = writeln!(s, r##"<g id="blocks" stroke="#555555" stroke-width="1" stroke-dasharray="2,2">"##);
        for b in 0..=GRID_BLOCKS as usize {
            // block boundaries in continuous image coordinates
            let p = MARGIN as f64 + (b * n * CELL) as f64 / GRID_BLOCKS as f64;
            let _ = writeln!(s, r#"<line x1="{p}" y1="{MARGIN}" x2="{p}" y2="{end}"/>"#);
            let _ = writeln!(s, r#"<line x1="{MARGIN}" y1="{p}" x2="{end}" y2="{p}"/>"#);
        }
        s.push_str("</g>\n");
        for (k, (label, region)) in self.regions.iter().enumerate() {
            let c = cell_rect(region, n);
            let color = PALETTE[k % PALETTE.len()];
            let (x, y) = (MARGIN + c.cols.start * CELL, MARGIN + c.rows.start * CELL);
            let (w, h) = (c.cols.len() * CELL, c.rows.len() * CELL);
            let _ = writeln!(
                s,
                r#"<rect class="region" x="{x}" y="{y}" width="{w}" height="{h}" fill="{color}" fill-opacity="0.15" stroke="{color}" stroke-width="2"/>"#
            );
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{}" font-family="monospace" font-size="10" fill="{color}">{} [{}]</text>"#,
                y.saturating_sub(3).max(10),
                escape(label),
                region
            );
        }
        s.push_str("</svg>\n");
        s
    }

    /// Plain-text PPM (P3) at `scale` pixels per token cell.
    pub fn ppm(&self, scale: usize) -> String {
        let scale = scale.max(1);
        let n = self.side;
        let px = n * scale;
        let mut img = vec![[255u8; 3]; px * px];
        for i in self.kept_set() {
            let (row, col) = (i / n, i % n);
            for y in row * scale..(row + 1) * scale {
                for x in col * scale..(col + 1) * scale {
                    img[y * px + x] = [158, 202, 225];
                }
            }
        }
        for (k, (_, region)) in self.regions.iter().enumerate() {
            let c = cell_rect(region, n);
            if c.cols.is_empty() || c.rows.is_empty() {
                continue;
            }
            let color = PPM_PALETTE[k % PPM_PALETTE.len()];
            let (x0, x1) = (c.cols.start * scale, c.cols.end * scale - 1);
            let (y0, y1) = (c.rows.start * scale, c.rows.end * scale - 1);
            for x in x0..=x1 {
                img[y0 * px + x] = color;
                img[y1 * px + x] = color;
            }
            for y in y0..=y1 {
                img[y * px + x0] = color;
                img[y * px + x1] = color;
            }
        }
        let mut s = format!("P3\n{px} {px}\n255\n");
        for row in img.chunks(px) {
            let line: Vec<String> = row.iter().map(|p| format!("{} {} {}", p[0], p[1], p[2])).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_follows_token_extent() {
        let r = Region::new(2, 1, 5, 2).unwrap();
        assert_eq!(cell_rect(&r, 24), CellRect { cols: 6..18, rows: 3..9 });
        let svg = Overlay::new(24).region("gt", r).svg();
        assert!(svg.contains(r#"x="80" y="50" width="120" height="60""#), "{svg}");
    }

    #[test]
    fn full_region_shades_everything() {
        let o = Overlay::new(5).region("all", Region::FULL);
        assert_eq!(o.kept_set().len(), 25);
        assert_eq!(o.svg().matches(r#"width="10" height="10""#).count(), 25);
    }

    #[test]
    fn deterministic_and_well_formed() {
        let o = Overlay::new(7).region("a<b", Region::new(0, 0, 3, 3).unwrap()).region("pred", Region::new(2, 2, 6, 5).unwrap());
        assert_eq!(o.svg(), o.svg());
        assert!(o.svg().contains("a&lt;b"));
        let ppm = o.ppm(2);
        assert!(ppm.starts_with("P3\n14 14\n255\n"));
        assert_eq!(ppm.lines().count(), 3 + 14);
        assert_eq!(ppm, o.ppm(2));
    }

    #[test]
    fn explicit_kept_set_overrides_regions() {
        let mut o = Overlay::new(4).region("r", Region::FULL);
        o.kept = Some(vec![0, 5, 99]);
        assert_eq!(o.kept_set().into_iter().collect::<Vec<_>>(), vec![0, 5]);
    }
}
