use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{TokenGrid, TokenPos};
use crate::tensor::Matrix;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("token matrix has {rows} rows but grid holds {expected} tokens")]
pub struct TokenShapeError {
    pub rows: usize,
    pub expected: usize,
}

/// Visual-token embeddings, one row per grid cell in [`TokenGrid`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualTokens {
    grid: TokenGrid,
    embeddings: Matrix,
}

impl VisualTokens {
    pub fn new(grid: TokenGrid, embeddings: Matrix) -> Result<Self, TokenShapeError> {
        if embeddings.rows() != grid.total_tokens() {
            return Err(TokenShapeError {
                rows: embeddings.rows(),
                expected: grid.total_tokens(),
            });
        }
        Ok(VisualTokens { grid, embeddings })
    }

    pub fn grid(&self) -> TokenGrid {
        self.grid
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.rows() == 0
    }

    pub fn position(&self, row: usize) -> TokenPos {
        self.grid.pos(row)
    }

    pub fn positions(&self, rows: &[usize]) -> Vec<TokenPos> {
        rows.iter().map(|&r| self.grid.pos(r)).collect()
    }
}
