//! Datasets, LIBSVM text I/O, partitioning and the toy Gaussian mixture.
//!
//! [`LabeledDataset`] is the single owner of sample order. Partitions refer
//! to examples by their position in the parent dataset, so the pair
//! `(m, l)` always resolves through [`Partitioning`].

mod libsvm;
mod partition;
mod toy;

pub use libsvm::{parse_libsvm, read_libsvm, serialize_libsvm, write_libsvm};
pub use partition::{partition, Partitioning};
pub use toy::{toy_gaussian_mixture, ToyComponent, ToyMixture, ToySample};

use crate::error::{Error, Result};
use crate::local_svm::FeatureRow;

/// Binary class label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn value(self) -> f64 {
        match self {
            Label::Negative => -1.0,
            Label::Positive => 1.0,
        }
    }

    pub fn from_sign(value: f64) -> Label {
        if value < 0.0 {
            Label::Negative
        } else {
            Label::Positive
        }
    }
}

/// One example: sparse features keyed by 1-based index, plus a label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    features: Vec<(u32, f64)>,
    pub label: Label,
}

impl LabeledExample {
    /// Builds an example from `(index, value)` pairs. Indices must be
    /// positive and strictly increasing.
    pub fn new(features: Vec<(u32, f64)>, label: Label) -> Result<Self> {
        let mut prev = 0u32;
        for &(idx, _) in &features {
            if idx == 0 {
                return Err(Error::contract("feature indices are 1-based"));
            }
            if idx <= prev {
                return Err(Error::contract(format!(
                    "feature index {idx} does not increase past {prev}"
                )));
            }
            prev = idx;
        }
        Ok(Self { features, label })
    }

    /// Example with every coordinate of `values` stored (index `i + 1`).
    pub fn from_dense(values: &[f64], label: Label) -> Self {
        let features = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as u32 + 1, v))
            .collect();
        Self { features, label }
    }

    pub fn features(&self) -> &[(u32, f64)] {
        &self.features
    }

    pub fn max_index(&self) -> u32 {
        self.features.last().map_or(0, |&(i, _)| i)
    }

    pub fn get(&self, index: u32) -> f64 {
        self.features
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0.0, |pos| self.features[pos].1)
    }

    pub fn is_finite(&self) -> bool {
        self.features.iter().all(|(_, v)| v.is_finite())
    }

    /// Dense copy of length `dim`.
    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(i, v) in &self.features {
            out[i as usize - 1] = v;
        }
        out
    }
}

impl FeatureRow for LabeledExample {
    #[inline]
    fn dot(&self, w: &[f64]) -> f64 {
        self.features
            .iter()
            .map(|&(i, v)| v * w[i as usize - 1])
            .sum()
    }

    #[inline]
    fn add_scaled_to(&self, scale: f64, w: &mut [f64]) {
        for &(i, v) in &self.features {
            w[i as usize - 1] += scale * v;
        }
    }

    #[inline]
    fn norm_sq(&self) -> f64 {
        self.features.iter().map(|(_, v)| v * v).sum()
    }
}

/// An ordered sample with a fixed feature dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    examples: Vec<LabeledExample>,
    dimension: usize,
    bias_index: Option<u32>,
}

impl LabeledDataset {
    pub fn new(examples: Vec<LabeledExample>, dimension: usize) -> Result<Self> {
        if let Some(ex) = examples.iter().find(|e| e.max_index() as usize > dimension) {
            return Err(Error::contract(format!(
                "feature index {} exceeds dimension {dimension}",
                ex.max_index()
            )));
        }
        Ok(Self {
            examples,
            dimension,
            bias_index: None,
        })
    }

    pub fn empty() -> Self {
        Self {
            examples: Vec::new(),
            dimension: 0,
            bias_index: None,
        }
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// 1-based index of the bias slot, once augmented.
    pub fn bias_index(&self) -> Option<u32> {
        self.bias_index
    }

    pub fn labels(&self) -> Vec<f64> {
        self.examples.iter().map(|e| e.label.value()).collect()
    }

    /// New dataset holding the examples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            dimension: self.dimension,
            bias_index: self.bias_index,
        }
    }

    /// Replaces the example at `index`; the replacement must fit the dimension.
    pub fn with_replaced(&self, index: usize, replacement: LabeledExample) -> Result<Self> {
        if index >= self.len() {
            return Err(Error::contract(format!("index {index} out of range")));
        }
        if replacement.max_index() as usize > self.dimension {
            return Err(Error::contract(format!(
                "replacement uses index {} beyond dimension {}",
                replacement.max_index(),
                self.dimension
            )));
        }
        let mut out = self.clone();
        out.examples[index] = replacement;
        Ok(out)
    }

    /// Widens the dimension (e.g. to align a test set with a training set).
    pub fn with_dimension(mut self, dimension: usize) -> Result<Self> {
        if dimension < self.dimension {
            return Err(Error::contract(format!(
                "cannot shrink dimension {} to {dimension}",
                self.dimension
            )));
        }
        self.dimension = dimension;
        Ok(self)
    }

    pub(crate) fn from_parts(
        examples: Vec<LabeledExample>,
        dimension: usize,
        bias_index: Option<u32>,
    ) -> Self {
        Self {
            examples,
            dimension,
            bias_index,
        }
    }
}

/// Appends a constant-1 feature at index `d + 1` so the bias folds into `w`.
pub fn augment_bias(dataset: &LabeledDataset) -> Result<LabeledDataset> {
    if dataset.bias_index.is_some() {
        return Err(Error::contract("dataset is already bias-augmented"));
    }
    let bias = dataset.dimension as u32 + 1;
    let examples = dataset
        .examples
        .iter()
        .map(|e| {
            let mut features = e.features.clone();
            features.push((bias, 1.0));
            LabeledExample {
                features,
                label: e.label,
            }
        })
        .collect();
    Ok(LabeledDataset {
        examples,
        dimension: dataset.dimension + 1,
        bias_index: Some(bias),
    })
}
