//! Relative accuracy against an unpruned baseline.
//!
//! Each metric contributes `run / baseline`; the ratios are averaged with
//! equal weight unless a weight table is supplied.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HarnessError;

pub type Metrics = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelAcc {
    pub ratios: BTreeMap<String, f64>,
    /// Aggregate as a fraction; `1.0` means parity with the baseline.
    pub value: f64,
}

impl RelAcc {
    pub fn percent(&self) -> String {
        format_percent(self.value)
    }
}

pub fn format_percent(fraction: f64) -> String {
    format!("{:.1}%", fraction * 100.0)
}

pub fn relacc(run: &Metrics, baseline: &Metrics, weights: Option<&Metrics>) -> Result<RelAcc, HarnessError> {
    let only_run: Vec<&str> = run.keys().filter(|k| !baseline.contains_key(*k)).map(String::as_str).collect();
    let only_base: Vec<&str> = baseline.keys().filter(|k| !run.contains_key(*k)).map(String::as_str).collect();
    if !only_run.is_empty() || !only_base.is_empty() {
        return Err(HarnessError::Data(format!(
            "metric sets differ: only in run {only_run:?}, only in baseline {only_base:?}"
        )));
    }
    if run.is_empty() {
        return Err(HarnessError::Data("no metrics to compare".into()));
    }
    let mut ratios = BTreeMap::new();
    let mut num = 0.0;
    let mut den = 0.0;
    for (name, &b) in baseline {
        if b == 0.0 {
            return Err(HarnessError::Data(format!("baseline metric `{name}` is zero")));
        }
        let ratio = run[name] / b;
        let w = match weights {
            Some(ws) => *ws
                .get(name)
                .ok_or_else(|| HarnessError::Config(format!("no weight for metric `{name}`")))?,
            None => 1.0,
        };
        num += w * ratio;
        den += w;
        ratios.insert(name.clone(), ratio);
    }
    if den <= 0.0 {
        return Err(HarnessError::Config("weights must sum to a positive value".into()));
    }
    Ok(RelAcc { ratios, value: num / den })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(pairs: &[(&str, f64)]) -> Metrics {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn identity_is_100_percent() {
        let b = m(&[("gqa", 61.9), ("mme", 1862.0)]);
        assert_eq!(relacc(&b, &b, None).unwrap().percent(), "100.0%");
    }

    #[test]
    fn unweighted_mean_of_ratios() {
        let b = m(&[("a", 10.0), ("b", 10.0)]);
        let r = m(&[("a", 9.0), ("b", 11.0)]);
        assert_eq!(relacc(&r, &b, None).unwrap().percent(), "100.0%");
        let single = relacc(&m(&[("x", 98.9)]), &m(&[("x", 100.0)]), None).unwrap();
        assert_eq!(single.percent(), "98.9%");
    }

    #[test]
    fn weighted_mean() {
        let b = m(&[("a", 10.0), ("b", 10.0)]);
        let r = m(&[("a", 9.0), ("b", 11.0)]);
        let w = m(&[("a", 3.0), ("b", 1.0)]);
        let v = relacc(&r, &b, Some(&w)).unwrap().value;
        assert!((v - 0.95).abs() < 1e-12);
    }

    #[test]
    fn mismatch_lists_the_difference() {
        let err = relacc(&m(&[("a", 1.0), ("c", 1.0)]), &m(&[("a", 1.0), ("b", 1.0)]), None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("\"c\"") && msg.contains("\"b\""), "{msg}");
    }
}
