//! Datasets, file loaders, a synthetic generator, and non-IID partitioners.

mod csv_io;
mod idx;
mod partition;
mod synth;

pub use csv_io::{load_csv, write_csv};
pub use idx::{load_idx, read_idx_images, read_idx_labels};
pub use partition::{
    partition_dirichlet, partition_label_shard, ClientSplit, DirichletOptions, Partition,
    PartitionScheme,
};
pub use synth::synth_gaussian_mixture;

use crate::error::{Error, Result};

/// An immutable labelled dataset with dense features stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f32>,
    dims: usize,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f32>,
        dims: usize,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if dims == 0 || num_classes == 0 {
            return Err(Error::config("dataset", "dims and num_classes must be positive"));
        }
        if features.len() != dims * labels.len() {
            return Err(Error::DimensionMismatch {
                expected: dims * labels.len(),
                found: features.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::config(
                "dataset",
                format!("label {bad} outside [0, {num_classes})"),
            ));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                step: pos / dims,
                what: format!("non-finite feature in example {}", pos / dims),
            });
        }
        Ok(Self {
            features,
            dims,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self, index: usize) -> &[f32] {
        &self.features[index * self.dims..(index + 1) * self.dims]
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn raw_features(&self) -> &[f32] {
        &self.features
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Example indices grouped by class.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }

    /// Copies the given examples into a new dataset with the same class count.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dims);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            dims: self.dims,
            labels,
            num_classes: self.num_classes,
        }
    }
}
