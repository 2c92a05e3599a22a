//! Sparse tensor data model: shapes, observed entries, and the helpers that
//! turn a list of entries into a seeded train/test split and a batch stream.

mod coo;
mod split;
pub mod synth;

pub use coo::{parse_coo, parse_index_lines, write_coo};
pub use split::{partition_stream, split_train_test};
pub use synth::{synth_generate, GeneratorSpec, GroundTruth, SynthOutput};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions `d_1..d_K` of a K-mode tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct TensorShape {
    dims: Vec<usize>,
}

impl TensorShape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::arg("tensor shape needs at least one mode"));
        }
        if let Some(k) = dims.iter().position(|&d| d == 0) {
            return Err(Error::arg(format!("mode {k} has zero nodes")));
        }
        Ok(TensorShape { dims })
    }

    pub fn mode_count(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of cells, or `None` if it overflows `u64`.
    pub fn total_cells(&self) -> Option<u64> {
        self.dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
    }

    pub fn check_index(&self, index: &[usize]) -> Result<()> {
        if index.len() != self.dims.len() {
            return Err(Error::Bounds(format!(
                "index has {} modes, tensor has {}",
                index.len(),
                self.dims.len()
            )));
        }
        for (k, (&i, &d)) in index.iter().zip(&self.dims).enumerate() {
            if i >= d {
                return Err(Error::Bounds(format!("mode {k}: node {i} >= {d}")));
            }
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for TensorShape {
    type Error = Error;

    fn try_from(dims: Vec<usize>) -> Result<Self> {
        TensorShape::new(dims)
    }
}

impl From<TensorShape> for Vec<usize> {
    fn from(shape: TensorShape) -> Self {
        shape.dims
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Continuous,
    Binary,
}

impl ValueKind {
    pub fn check_value(self, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Value(format!("non-finite entry value {value}")));
        }
        if self == ValueKind::Binary && value != 0.0 && value != 1.0 {
            return Err(Error::Value(format!("binary entry value {value} is not 0 or 1")));
        }
        Ok(())
    }
}

impl std::str::FromStr for ValueKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(ValueKind::Continuous),
            "binary" => Ok(ValueKind::Binary),
            other => Err(Error::arg(format!("unknown value kind '{other}'"))),
        }
    }
}

/// One observed tensor cell: node indices (0-based) and its value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedEntry {
    pub index: Vec<usize>,
    pub value: f64,
}

impl ObservedEntry {
    pub fn new(index: Vec<usize>, value: f64) -> Self {
        ObservedEntry { index, value }
    }

    pub fn validate(&self, shape: &TensorShape, kind: ValueKind) -> Result<()> {
        shape.check_index(&self.index)?;
        kind.check_value(self.value)
    }
}

/// A contiguous slice of the training stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryBatch {
    pub ordinal: u64,
    pub entries: Vec<ObservedEntry>,
}

impl EntryBatch {
    pub fn new(ordinal: u64, entries: Vec<ObservedEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::arg("a batch must hold at least one entry"));
        }
        Ok(EntryBatch { ordinal, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<ObservedEntry>,
    pub test: Vec<ObservedEntry>,
}
