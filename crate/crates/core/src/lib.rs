//! Contextual-region visual token pruning.
//!
//! A coarse 8×8 block region over the image selects which visual tokens a
//! multimodal model keeps. [`grid`] maps regions to tokens, [`plc`]
//! compresses tokens before the language model, [`ilp`] drops tokens inside
//! a small decoder, [`localizer`] produces and budget-fits regions, and
//! [`harness`] holds the evaluation plumbing.

pub mod grid;
pub mod harness;
pub mod ilp;
pub mod localizer;
pub mod plc;
pub mod tensor;
pub mod tokens;

pub use grid::{parse_region, recall, region_to_tokens, resize_to_match, GridError, Region, RepairEvent, TokenGrid, TokenIndexSet};
pub use ilp::{count_flops, proxy_quality, ModelConfig, MultimodalSequence, PositionPolicy, PruneConfig, PruneReport, ToyTransformer};
pub use localizer::{fit_budget, BudgetSpec, Localizer};
pub use plc::{compress, compress_ablated, PlcConfig, PlcOutput, PlcParams};
pub use tensor::Matrix;
pub use tokens::VisualTokens;
