//! Per-sample trace records: prune bookkeeping and, for attention-ranked
//! runs, the query rows of the ranking layer's attention maps.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::ilp::{AttentionMaps, PruneReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryAttention {
    pub layer: usize,
    pub heads: usize,
    /// Sequence length the maps were computed over.
    pub len: usize,
    pub visual: Range<usize>,
    pub query: Range<usize>,
    /// `heads × query.len() × len`, row-major.
    pub probs: Vec<f64>,
}

impl QueryAttention {
    pub fn from_maps(maps: &AttentionMaps, visual: Range<usize>, query: Range<usize>) -> Self {
        let mut probs = Vec::with_capacity(maps.heads * query.len() * maps.len);
        for h in 0..maps.heads {
            for i in query.clone() {
                probs.extend((0..maps.len).map(|j| maps.get(h, i, j)));
            }
        }
        QueryAttention {
            layer: maps.layer,
            heads: maps.heads,
            len: maps.len,
            visual,
            query,
            probs,
        }
    }

    /// Probability that query row `i` (0-based within the query block) of
    /// head `h` puts on sequence row `j`.
    pub fn get(&self, h: usize, i: usize, j: usize) -> f64 {
        self.probs[(h * self.query.len() + i) * self.len + j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub id: String,
    pub method: String,
    /// Kept visual-token indices, ascending.
    pub kept: Vec<usize>,
    pub report: PruneReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<QueryAttention>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_only_query_rows() {
        let len = 4;
        let probs: Vec<f64> = (0..2 * len * len).map(|v| v as f64).collect();
        let maps = AttentionMaps { layer: 1, heads: 2, len, probs };
        let q = QueryAttention::from_maps(&maps, 1..3, 3..4);
        assert_eq!(q.probs.len(), 2 * len);
        for h in 0..2 {
            for j in 0..len {
                assert_eq!(q.get(h, 0, j), maps.get(h, 3, j));
            }
        }
        let back: QueryAttention = serde_json::from_str(&serde_json::to_string(&q).unwrap()).unwrap();
        assert_eq!(back, q);
    }
}
