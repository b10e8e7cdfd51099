//! Wall-clock timing and the localizer/backbone pipeline cost model.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::report::Timing;

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs `f` once to warm up, then `reps` timed times on the current thread.
pub fn time_reps<T>(reps: usize, mut f: impl FnMut() -> T) -> Timing {
    std::hint::black_box(f());
    let secs: Vec<f64> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(f());
            t.elapsed().as_secs_f64()
        })
        .collect();
    Timing {
        reps,
        median_s: median(&secs),
        min_s: secs.iter().copied().fold(f64::INFINITY, f64::min),
        max_s: secs.iter().copied().fold(0.0, f64::max),
    }
}

/// Two-stage pipeline over `items` requests: the localizer for request
/// `i + 1` can run while the backbone serves request `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub localizer_s: f64,
    pub backbone_s: f64,
    pub items: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineCost {
    pub serial_s: f64,
    pub overlapped_s: f64,
    pub saving_s: f64,
}

impl Pipeline {
    pub fn cost(&self) -> PipelineCost {
        let n = self.items as f64;
        let serial = n * (self.localizer_s + self.backbone_s);
        // steady state is bounded by the slower stage; the faster one only
        // shows up once, as pipeline fill
        let overlapped = if self.items == 0 {
            0.0
        } else {
            n * self.localizer_s.max(self.backbone_s) + self.localizer_s.min(self.backbone_s)
        };
        PipelineCost {
            serial_s: serial,
            overlapped_s: overlapped,
            saving_s: serial - overlapped,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn single_item_has_no_overlap() {
        let c = Pipeline { localizer_s: 0.2, backbone_s: 0.5, items: 1 }.cost();
        assert!((c.serial_s - 0.7).abs() < 1e-12 && (c.overlapped_s - 0.7).abs() < 1e-12);
        let c = Pipeline { localizer_s: 0.2, backbone_s: 0.5, items: 4 }.cost();
        assert!((c.overlapped_s - 2.2).abs() < 1e-12);
    }

    #[test]
    fn timing_counts_reps() {
        let t = time_reps(3, || (0..1000).sum::<u64>());
        assert_eq!(t.reps, 3);
        assert!(t.min_s <= t.median_s && t.median_s <= t.max_s);
    }

    proptest! {
        #[test]
        fn overlapped_never_exceeds_serial(l in 0.0f64..10.0, b in 0.0f64..10.0, n in 0usize..50) {
            let c = Pipeline { localizer_s: l, backbone_s: b, items: n }.cost();
            prop_assert!(c.overlapped_s <= c.serial_s + 1e-12);
            prop_assert!(c.saving_s >= -1e-12);
        }
    }
}
