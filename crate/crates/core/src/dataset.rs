//! In-memory labeled image collections.

use crate::error::{Error, Result};
use crate::image::Image;

/// A labeled set of same-shaped images belonging to one split.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub images: Vec<Image>,
    /// Class index per image, within `0..n_classes`.
    pub labels: Vec<usize>,
    /// Stable per-sample identifier (used by external prediction tables).
    pub ids: Vec<String>,
    pub n_classes: usize,
    pub class_names: Vec<String>,
    /// Split tag: `train`, `val` or `test`.
    pub split: String,
}

impl LabeledDataset {
    pub fn new(
        images: Vec<Image>,
        labels: Vec<usize>,
        ids: Vec<String>,
        class_names: Vec<String>,
        split: impl Into<String>,
    ) -> Result<Self> {
        let n_classes = class_names.len();
        if images.len() != labels.len() {
            return Err(Error::LengthMismatch {
                preds: images.len(),
                labels: labels.len(),
            });
        }
        for &l in &labels {
            if l >= n_classes {
                return Err(Error::InvalidLabel {
                    label: l,
                    n_classes,
                });
            }
        }
        if let Some(first) = images.first() {
            let shape = (first.channels, first.height, first.width);
            for img in &images {
                if (img.channels, img.height, img.width) != shape {
                    return Err(Error::DimensionMismatch {
                        expected: format!("{}x{}x{}", shape.0, shape.1, shape.2),
                        got: format!("{}x{}x{}", img.channels, img.height, img.width),
                    });
                }
            }
        }
        Ok(LabeledDataset {
            images,
            labels,
            ids,
            n_classes,
            class_names,
            split: split.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.images.first().map(|i| i.channels).unwrap_or(0)
    }

    pub fn side(&self) -> usize {
        self.images.first().map(|i| i.height).unwrap_or(0)
    }

    pub fn per_class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Indices of every sample of one class.
    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    }

    /// Images of one class, in dataset order.
    pub fn class_images(&self, class: usize) -> Vec<&Image> {
        self.class_indices(class)
            .into_iter()
            .map(|i| &self.images[i])
            .collect()
    }

    /// A new dataset holding only the selected indices.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            n_classes: self.n_classes,
            class_names: self.class_names.clone(),
            split: self.split.clone(),
        }
    }

    /// Apply a per-image transform, keeping labels and ids.
    pub fn map_images(&self, f: impl Fn(&Image) -> Result<Image> + Sync) -> Result<LabeledDataset> {
        use rayon::prelude::*;
        let images: Result<Vec<Image>> = self.images.par_iter().map(|img| f(img)).collect();
        Ok(LabeledDataset {
            images: images?,
            labels: self.labels.clone(),
            ids: self.ids.clone(),
            n_classes: self.n_classes,
            class_names: self.class_names.clone(),
            split: self.split.clone(),
        })
    }
}
