//! Pluggable prediction sources: an owned model or an externally supplied
//! score table keyed by sample id. The table route lets any classifier's
//! predictions flow through the band-stop and DFM protocols.

use std::collections::HashMap;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

use super::model::{argmax_low, forward_batch, Model};
use super::train::{flatten_dataset, FlatData};

/// External predictions: one score vector per sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub n_classes: usize,
    scores: HashMap<String, Vec<f64>>,
}

impl PredictionTable {
    pub fn new(n_classes: usize) -> Self {
        PredictionTable {
            n_classes,
            scores: HashMap::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, scores: Vec<f64>) {
        assert_eq!(scores.len(), self.n_classes, "score vector length mismatch");
        self.scores.insert(id.into(), scores);
    }

    pub fn get(&self, id: &str) -> Result<&Vec<f64>> {
        self.scores.get(id).ok_or_else(|| Error::MissingPrediction {
            id: id.to_string(),
        })
    }

    /// Parse `id,score_0,...,score_{k-1}` rows; a leading header line
    /// starting with `id` is skipped.
    pub fn from_csv_str(s: &str) -> Result<Self> {
        let mut table: Option<PredictionTable> = None;
        for (ln, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (ln == 0 && line.starts_with("id")) {
                continue;
            }
            let mut cells = line.split(',');
            let id = cells.next().unwrap_or_default().to_string();
            let scores: std::result::Result<Vec<f64>, _> =
                cells.map(|c| c.trim().parse::<f64>()).collect();
            let scores = scores.map_err(|_| {
                Error::InvalidConfig(format!("prediction table line {}: bad score", ln + 1))
            })?;
            if scores.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "prediction table line {}: no scores",
                    ln + 1
                )));
            }
            let t = table.get_or_insert_with(|| PredictionTable::new(scores.len()));
            if scores.len() != t.n_classes {
                return Err(Error::InvalidConfig(format!(
                    "prediction table line {}: expected {} scores, got {}",
                    ln + 1,
                    t.n_classes,
                    scores.len()
                )));
            }
            t.scores.insert(id, scores);
        }
        table.ok_or_else(|| Error::InvalidConfig("prediction table is empty".into()))
    }
}

/// A source of class scores: the trained model, or an external table.
pub enum Predictor {
    Model(Model<f32>),
    Table(PredictionTable),
}

/// Predicted labels plus the full score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOutput {
    pub labels: Vec<usize>,
    pub scores: Vec<Vec<f64>>,
}

impl Predictor {
    pub fn n_classes(&self) -> usize {
        match self {
            Predictor::Model(m) => m.config.n_classes,
            Predictor::Table(t) => t.n_classes,
        }
    }

    /// Score a batch of flattened samples. Model predictors consume the
    /// pixel data; table predictors look up the ids.
    pub fn scores_flat(
        &self,
        data: &[f32],
        count: usize,
        side: usize,
        ids: &[String],
    ) -> Result<Vec<Vec<f64>>> {
        match self {
            Predictor::Model(model) => Ok(forward_batch(model, data, count, side)
                .into_iter()
                .map(|l| l.into_iter().map(f64::from).collect())
                .collect()),
            Predictor::Table(table) => ids
                .iter()
                .map(|id| table.get(id).cloned())
                .collect::<Result<Vec<_>>>(),
        }
    }

    /// Mean cross-entropy over flattened samples with true labels.
    pub fn mean_cross_entropy_flat(
        &self,
        data: &[f32],
        count: usize,
        side: usize,
        ids: &[String],
        labels: &[usize],
    ) -> Result<f64> {
        let scores = self.scores_flat(data, count, side, ids)?;
        let mut total = 0.0;
        for (s, &y) in scores.iter().zip(labels.iter()) {
            total += cross_entropy_f64(s, y);
        }
        Ok(total / count as f64)
    }
}

fn cross_entropy_f64(scores: &[f64], label: usize) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = scores.iter().map(|&s| (s - max).exp()).sum();
    max + sum.ln() - scores[label]
}

/// Argmax predictions over a dataset, with the deterministic low-index
/// tie-break.
pub fn predict(predictor: &Predictor, ds: &LabeledDataset) -> Result<PredictionOutput> {
    let flat: FlatData<f32> = flatten_dataset(ds);
    let scores = predictor.scores_flat(&flat.data, flat.count, flat.side, &ds.ids)?;
    let labels = scores.iter().map(|s| argmax_low(s)).collect();
    Ok(PredictionOutput { labels, scores })
}

/// Mean cross-entropy of a predictor over a dataset with its stored labels.
pub fn mean_cross_entropy(predictor: &Predictor, ds: &LabeledDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let flat: FlatData<f32> = flatten_dataset(ds);
    predictor.mean_cross_entropy_flat(&flat.data, flat.count, flat.side, &ds.ids, &ds.labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;

    fn toy_dataset() -> LabeledDataset {
        let images = vec![Image::zeros(1, 4, 4), Image::constant(1, 4, 4, 1.0)];
        LabeledDataset::new(
            images,
            vec![0, 1],
            vec!["a".into(), "b".into()],
            vec!["C0".into(), "C1".into()],
            "test",
        )
        .unwrap()
    }

    #[test]
    fn table_predictor_echoes_one_hot_rows() {
        let mut table = PredictionTable::new(2);
        table.insert("a", vec![0.0, 1.0]);
        table.insert("b", vec![1.0, 0.0]);
        let out = predict(&Predictor::Table(table), &toy_dataset()).unwrap();
        assert_eq!(out.labels, vec![1, 0]);
    }

    #[test]
    fn missing_id_is_named() {
        let mut table = PredictionTable::new(2);
        table.insert("a", vec![0.0, 1.0]);
        let err = predict(&Predictor::Table(table), &toy_dataset()).unwrap_err();
        match err {
            Error::MissingPrediction { id } => assert_eq!(id, "b"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn tied_scores_pick_class_zero() {
        let mut table = PredictionTable::new(2);
        table.insert("a", vec![0.5, 0.5]);
        table.insert("b", vec![0.5, 0.5]);
        let out = predict(&Predictor::Table(table), &toy_dataset()).unwrap();
        assert_eq!(out.labels, vec![0, 0]);
    }

    #[test]
    fn csv_parse_round_trip() {
        let table =
            PredictionTable::from_csv_str("id,score_0,score_1\nx,0.25,0.75\ny,1.5,-0.5\n").unwrap();
        assert_eq!(table.n_classes, 2);
        assert_eq!(table.get("x").unwrap(), &vec![0.25, 0.75]);
        assert!(table.get("z").is_err());
    }

    #[test]
    fn table_loss_ignores_pixels() {
        let mut table = PredictionTable::new(2);
        table.insert("a", vec![2.0, 0.0]);
        table.insert("b", vec![0.0, 2.0]);
        let predictor = Predictor::Table(table);
        let ds = toy_dataset();
        let loss1 = mean_cross_entropy(&predictor, &ds).unwrap();
        // scrambling the images changes nothing
        let scrambled = ds
            .map_images(|img| {
                let mut flipped = img.clone();
                flipped.data.iter_mut().for_each(|v| *v = 1.0 - *v);
                Ok(flipped)
            })
            .unwrap();
        let loss2 = mean_cross_entropy(&predictor, &scrambled).unwrap();
        assert_eq!(loss1, loss2);
    }
}
