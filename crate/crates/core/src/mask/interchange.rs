//! JSON interchange for attention tensors, pre-reduced bundles, queries and
//! masks.

use super::{
    reduce_attention, AttentionBundle, AttentionField, AttentionTensor, DefectMask, Grid,
    QueryMatrix,
};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// `{"grid", "layers", "heads", "tokens", "data"}` with `data` flat row-major
/// over `[layers, heads, tokens, S]`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawTensorDocument {
    pub grid: Grid,
    pub layers: usize,
    pub heads: usize,
    pub tokens: usize,
    pub data: Vec<f64>,
}

impl RawTensorDocument {
    pub fn tensor(&self) -> AttentionTensor {
        AttentionTensor {
            layers: self.layers,
            heads: self.heads,
            tokens: self.tokens,
            spatial: self.grid.rows * self.grid.cols,
            data: self.data.clone(),
        }
    }

    pub fn reduce(&self) -> Result<AttentionField> {
        Grid::new(self.grid.rows, self.grid.cols)?;
        reduce_attention(&self.tensor(), self.grid)
    }
}

/// `{"grid", "orig", "pos", "neg"}` with pre-reduced fields.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BundleDocument {
    pub grid: Grid,
    pub orig: Vec<f64>,
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

impl BundleDocument {
    pub fn bundle(&self) -> Result<AttentionBundle> {
        let grid = Grid::new(self.grid.rows, self.grid.cols)?;
        AttentionBundle::new(
            AttentionField::new(grid, self.orig.clone())?,
            AttentionField::new(grid, self.pos.clone())?,
            AttentionField::new(grid, self.neg.clone())?,
        )
    }

    pub fn from_bundle(bundle: &AttentionBundle) -> Self {
        Self {
            grid: bundle.grid(),
            orig: bundle.orig.values.clone(),
            pos: bundle.pos.values.clone(),
            neg: bundle.neg.values.clone(),
        }
    }
}

/// Either interchange shape.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum AttentionDocument {
    Raw(RawTensorDocument),
    Bundle(BundleDocument),
}

impl AttentionDocument {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::invalid(format!("{}: not an attention document: {e}", path.display())))
    }
}

/// `{"rows", "dim", "data"}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct QueryDocument {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl QueryDocument {
    pub fn queries(&self) -> Result<QueryMatrix> {
        QueryMatrix::new(self.rows, self.dim, self.data.clone())
    }
}

/// Mask output `{"grid", "ratio", "bits"}` with bits as 0/1.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MaskDocument {
    pub grid: Grid,
    pub ratio: f64,
    pub bits: Vec<u8>,
}

impl From<&DefectMask> for MaskDocument {
    fn from(m: &DefectMask) -> Self {
        Self {
            grid: m.grid(),
            ratio: m.ratio(),
            bits: m.bits().iter().map(|&b| u8::from(b)).collect(),
        }
    }
}

impl MaskDocument {
    pub fn mask(&self) -> Result<DefectMask> {
        if let Some(i) = self.bits.iter().position(|&b| b > 1) {
            return Err(Error::invalid(format!("mask bit {i} is not 0 or 1")));
        }
        DefectMask::from_bits(self.grid, self.ratio, self.bits.iter().map(|&b| b == 1).collect())
    }
}
