//! Machine-readable run reports and the configuration fingerprint.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::relacc::RelAcc;
use crate::grid::Region;

/// SHA-256 over length-prefixed `(key, value)` pairs, hex encoded.
#[derive(Debug, Clone, Default)]
pub struct Fingerprint {
    hasher: Sha256,
}

impl Fingerprint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(mut self, key: &str, value: &[u8]) -> Self {
        for part in [key.as_bytes(), value] {
            self.hasher.update((part.len() as u64).to_le_bytes());
            self.hasher.update(part);
        }
        self
    }

    pub fn add_json<T: Serialize>(self, key: &str, value: &T) -> Self {
        let bytes = serde_json::to_vec(value).expect("serializable config");
        self.add(key, &bytes)
    }

    pub fn finish(self) -> String {
        hex::encode(self.hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub region: Region,
    pub visual_total: usize,
    pub kept: usize,
    pub dropped: usize,
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proxy_quality: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub reps: usize,
    pub median_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub fingerprint: String,
    pub samples: Vec<SampleRecord>,
    /// Dataset-level aggregates such as `mean_rate` or `mean_proxy_quality`.
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relacc: Option<RelAcc>,
}

impl RunReport {
    pub fn new(command: impl Into<String>, fingerprint: String, samples: Vec<SampleRecord>) -> Self {
        let mut metrics = BTreeMap::new();
        if !samples.is_empty() {
            let n = samples.len() as f64;
            metrics.insert("mean_kept".into(), samples.iter().map(|s| s.kept as f64).sum::<f64>() / n);
            metrics.insert("mean_rate".into(), samples.iter().map(|s| s.rate).sum::<f64>() / n);
            let q: Vec<f64> = samples.iter().filter_map(|s| s.proxy_quality).collect();
            if !q.is_empty() {
                metrics.insert("mean_proxy_quality".into(), q.iter().sum::<f64>() / q.len() as f64);
            }
            let r: Vec<f64> = samples.iter().filter_map(|s| s.recall).collect();
            if !r.is_empty() {
                metrics.insert("mean_recall".into(), r.iter().sum::<f64>() / r.len() as f64);
            }
        }
        RunReport {
            command: command.into(),
            fingerprint,
            samples,
            metrics,
            timing: None,
            baseline: None,
            relacc: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
