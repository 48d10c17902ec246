//! Class-wise evaluation metrics: confusion matrices, the relative confusion
//! matrix used for band-stop comparisons, precision/recall/F1, one-vs-rest
//! TPR/FPR, and the ADCS spectrum-comparison metric.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::spectrum::{dft2, BandPartition, FrequencyCoord};

/// Exact prediction counts: `counts[i][j]` is the number of true-class-`i`
/// samples predicted as class `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    /// Row-major `n_classes x n_classes`.
    pub counts: Vec<u64>,
    pub class_names: Vec<String>,
}

/// Count predictions into a confusion matrix.
pub fn confusion(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    let mut counts = vec![0u64; n_classes * n_classes];
    for (&p, &l) in preds.iter().zip(labels.iter()) {
        if l >= n_classes {
            return Err(Error::InvalidLabel {
                label: l,
                n_classes,
            });
        }
        if p >= n_classes {
            return Err(Error::InvalidLabel {
                label: p,
                n_classes,
            });
        }
        counts[l * n_classes + p] += 1;
    }
    Ok(ConfusionMatrix {
        n_classes,
        counts,
        class_names: (0..n_classes).map(|c| format!("C{c}")).collect(),
    })
}

impl ConfusionMatrix {
    pub fn with_names(mut self, names: &[String]) -> Self {
        if names.len() == self.n_classes {
            self.class_names = names.to_vec();
        }
        self
    }

    pub fn get(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.n_classes + predicted]
    }

    pub fn row_sum(&self, true_class: usize) -> u64 {
        self.counts[true_class * self.n_classes..(true_class + 1) * self.n_classes]
            .iter()
            .sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.n_classes).map(|i| self.get(i, predicted)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let diag: u64 = (0..self.n_classes).map(|i| self.get(i, i)).sum();
        diag as f64 / total as f64
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("true\\pred");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for i in 0..self.n_classes {
            out.push_str(&self.class_names[i]);
            for j in 0..self.n_classes {
                out.push_str(&format!(",{}", self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

/// Percentage-point change between a filtered and the original test set:
/// `delta[i][j] = (pred_filtered[i][j] - pred_original[i][j]) / N_i * 100`.
/// Rows sum to zero because both matrices share per-class populations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeConfusionMatrix {
    pub n_classes: usize,
    /// Row-major `n_classes x n_classes`, in percentage points.
    pub delta: Vec<f64>,
    /// Per-class population `N_c` shared by both operands.
    pub n_per_class: Vec<u64>,
    pub class_names: Vec<String>,
    /// What the operands were (e.g. a band-stop code and "original").
    pub source_tags: (String, String),
}

/// Compute the relative confusion matrix of `filtered` against `original`.
pub fn relative_confusion(
    cm_filtered: &ConfusionMatrix,
    cm_original: &ConfusionMatrix,
) -> Result<RelativeConfusionMatrix> {
    if cm_filtered.n_classes != cm_original.n_classes {
        return Err(Error::DimensionMismatch {
            expected: format!("{} classes", cm_original.n_classes),
            got: format!("{} classes", cm_filtered.n_classes),
        });
    }
    let n = cm_filtered.n_classes;
    let mut n_per_class = Vec::with_capacity(n);
    for i in 0..n {
        let a = cm_filtered.row_sum(i);
        let b = cm_original.row_sum(i);
        if a != b {
            return Err(Error::RowSumMismatch {
                class: i,
                left: a,
                right: b,
            });
        }
        n_per_class.push(a);
    }
    let mut delta = vec![0.0; n * n];
    for i in 0..n {
        if n_per_class[i] == 0 {
            continue;
        }
        for j in 0..n {
            let diff = cm_filtered.get(i, j) as i64 - cm_original.get(i, j) as i64;
            delta[i * n + j] = diff as f64 * 100.0 / n_per_class[i] as f64;
        }
    }
    Ok(RelativeConfusionMatrix {
        n_classes: n,
        delta,
        n_per_class,
        class_names: cm_original.class_names.clone(),
        source_tags: ("filtered".into(), "original".into()),
    })
}

impl RelativeConfusionMatrix {
    pub fn with_tags(mut self, filtered: impl Into<String>, original: impl Into<String>) -> Self {
        self.source_tags = (filtered.into(), original.into());
        self
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.delta[i * self.n_classes + j]
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = format!(
            "# delta = ({} - {}) / N_c * 100, one decimal place\ntrue\\pred",
            self.source_tags.0, self.source_tags.1
        );
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for i in 0..self.n_classes {
            out.push_str(&self.class_names[i]);
            for j in 0..self.n_classes {
                out.push_str(&format!(",{:.1}", self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

/// Per-class precision, recall and F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfRecord {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision/recall/F1 per class; zero-denominator cases yield 0.
pub fn prf1(cm: &ConfusionMatrix) -> Vec<PrfRecord> {
    (0..cm.n_classes)
        .map(|c| {
            let tp = cm.get(c, c) as f64;
            let col = cm.col_sum(c) as f64;
            let row = cm.row_sum(c) as f64;
            let precision = if col > 0.0 { tp / col } else { 0.0 };
            let recall = if row > 0.0 { tp / row } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            PrfRecord {
                class: c,
                precision,
                recall,
                f1,
            }
        })
        .collect()
}

/// One-vs-rest true/false positive rates for one class.
///
/// `tpr` is `None` when the class is absent from the labels; `fpr` is `None`
/// when every label belongs to the class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TprFpr {
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
}

pub fn tpr_fpr(preds: &[usize], labels: &[usize], class: usize) -> Result<TprFpr> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    let mut tp = 0u64;
    let mut pos = 0u64;
    let mut fp = 0u64;
    let mut neg = 0u64;
    for (&p, &l) in preds.iter().zip(labels.iter()) {
        if l == class {
            pos += 1;
            if p == class {
                tp += 1;
            }
        } else {
            neg += 1;
            if p == class {
                fp += 1;
            }
        }
    }
    Ok(TprFpr {
        tpr: (pos > 0).then(|| tp as f64 / pos as f64),
        fpr: (neg > 0).then(|| fp as f64 / neg as f64),
    })
}

/// Accumulative Difference of Class-wise average Spectrum for one class:
/// at each frequency, the sign of the class's average-amplitude advantage is
/// accumulated against every other class, per channel, then averaged into a
/// one-channel map. Values lie in `[1-|C|, |C|-1]` and sum to zero across
/// classes at every frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdcsMap {
    pub class: usize,
    pub side: usize,
    pub channels: usize,
    /// Channel-averaged map, row-major, centered.
    pub values: Vec<f64>,
    /// Per-channel average amplitude spectrum `E_c(u,v)` of this class.
    pub mean_amplitude: Vec<Vec<f64>>,
}

/// Compute one ADCS map per class from per-class image groups.
pub fn adcs(groups: &[Vec<&Image>]) -> Result<Vec<AdcsMap>> {
    let n_classes = groups.len();
    if n_classes < 2 {
        return Err(Error::TooFewClasses { n_classes });
    }
    for (c, g) in groups.iter().enumerate() {
        if g.is_empty() {
            return Err(Error::EmptyClass { class: c });
        }
    }
    let first = groups[0][0];
    let (channels, side) = (first.channels, first.height);
    for g in groups {
        for img in g {
            if (img.channels, img.height, img.width) != (channels, side, side) {
                return Err(Error::DimensionMismatch {
                    expected: format!("{channels}x{side}x{side}"),
                    got: format!("{}x{}x{}", img.channels, img.height, img.width),
                });
            }
        }
    }

    let plane = side * side;
    // E_c(u,v) per channel: mean |F| over the class.
    let mean_amplitude: Result<Vec<Vec<Vec<f64>>>> = groups
        .par_iter()
        .map(|g| {
            let mut acc = vec![vec![0.0f64; plane]; channels];
            for img in g {
                let spec = dft2(img)?;
                for ch in 0..channels {
                    for (a, z) in acc[ch].iter_mut().zip(spec.channel(ch).iter()) {
                        *a += z.norm();
                    }
                }
            }
            let inv = 1.0 / g.len() as f64;
            for ch in acc.iter_mut() {
                ch.iter_mut().for_each(|v| *v *= inv);
            }
            Ok(acc)
        })
        .collect();
    let mean_amplitude = mean_amplitude?;

    let sign = |d: f64| {
        if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        }
    };

    let maps = (0..n_classes)
        .map(|ci| {
            let mut values = vec![0.0f64; plane];
            for (idx, v) in values.iter_mut().enumerate() {
                let mut channel_sum = 0.0;
                for ch in 0..channels {
                    let e_i = mean_amplitude[ci][ch][idx];
                    let mut acc = 0.0;
                    for (cj, other) in mean_amplitude.iter().enumerate() {
                        if cj != ci {
                            acc += sign(e_i - other[ch][idx]);
                        }
                    }
                    channel_sum += acc;
                }
                *v = channel_sum / channels as f64;
            }
            AdcsMap {
                class: ci,
                side,
                channels,
                values,
                mean_amplitude: mean_amplitude[ci].clone(),
            }
        })
        .collect();
    Ok(maps)
}

impl AdcsMap {
    /// Mean map value over the members of each band. The DC bin is excluded
    /// (its amplitude is dominated by per-image display normalization).
    pub fn band_means(&self, partition: &BandPartition) -> Vec<f64> {
        let mut sums = vec![0.0; partition.n_bands];
        let mut counts = vec![0usize; partition.n_bands];
        for i in 0..self.side {
            for j in 0..self.side {
                let f = partition_coord(self.side, i, j);
                if f == FrequencyCoord::new(0, 0) {
                    continue;
                }
                let b = partition.band_at_index(i, j).index() as usize - 1;
                sums[b] += self.values[i * self.side + j];
                counts[b] += 1;
            }
        }
        sums.iter()
            .zip(counts.iter())
            .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect()
    }

    /// Mean map value over all non-DC frequencies outside the given band.
    pub fn out_of_band_mean(&self, partition: &BandPartition, band: crate::spectrum::Band) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..self.side {
            for j in 0..self.side {
                let f = partition_coord(self.side, i, j);
                if f == FrequencyCoord::new(0, 0) {
                    continue;
                }
                if partition.band_at_index(i, j) != band {
                    sum += self.values[i * self.side + j];
                    count += 1;
                }
            }
        }
        if count > 0 {
            sum / count as f64
        } else {
            0.0
        }
    }
}

fn partition_coord(side: usize, i: usize, j: usize) -> FrequencyCoord {
    let c = (side / 2) as i32;
    FrequencyCoord::new(i as i32 - c, j as i32 - c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_are_diagonal() {
        let labels = [0usize, 1, 2, 1, 0];
        let cm = confusion(&labels, &labels, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(cm.get(i, j), 0);
                }
            }
        }
        assert_eq!(cm.accuracy(), 1.0);
        let prf = prf1(&cm);
        assert!(prf.iter().all(|r| r.precision == 1.0 && r.recall == 1.0 && r.f1 == 1.0));
    }

    #[test]
    fn hand_counted_two_class_case() {
        let labels = [0usize, 0, 1, 1];
        let preds = [0usize, 1, 0, 1];
        let cm = confusion(&preds, &labels, 2).unwrap();
        assert_eq!(cm.counts, vec![1, 1, 1, 1]);
        let prf = prf1(&cm);
        for r in prf {
            assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
        }
        let rates = tpr_fpr(&preds, &labels, 0).unwrap();
        assert_eq!(rates.tpr, Some(0.5));
        assert_eq!(rates.fpr, Some(0.5));
    }

    #[test]
    fn empty_input_gives_zero_matrix() {
        let cm = confusion(&[], &[], 3).unwrap();
        assert!(cm.counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(matches!(
            confusion(&[0], &[0, 1], 2),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn identical_matrices_give_zero_delta() {
        let labels = [0usize, 0, 1, 1, 2, 2];
        let preds = [0usize, 1, 1, 1, 2, 0];
        let cm = confusion(&preds, &labels, 3).unwrap();
        let rel = relative_confusion(&cm, &cm).unwrap();
        assert!(rel.delta.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn delta_arithmetic_matches_hand_computation() {
        // N_c = 50 per class; original diagonal 46, filtered diagonal 45 with
        // the lost sample moving to class 1.
        let n = 2;
        let org = ConfusionMatrix {
            n_classes: n,
            counts: vec![46, 4, 0, 50],
            class_names: vec!["C0".into(), "C1".into()],
        };
        let bs = ConfusionMatrix {
            n_classes: n,
            counts: vec![45, 5, 0, 50],
            class_names: vec!["C0".into(), "C1".into()],
        };
        let rel = relative_confusion(&bs, &org).unwrap();
        assert_eq!(rel.get(0, 0), -2.0);
        assert_eq!(rel.get(0, 1), 2.0);
        assert_eq!(rel.get(1, 1), 0.0);
    }

    #[test]
    fn row_sum_mismatch_rejected() {
        let a = ConfusionMatrix {
            n_classes: 2,
            counts: vec![1, 0, 0, 1],
            class_names: vec!["C0".into(), "C1".into()],
        };
        let b = ConfusionMatrix {
            n_classes: 2,
            counts: vec![2, 0, 0, 1],
            class_names: vec!["C0".into(), "C1".into()],
        };
        assert!(matches!(
            relative_confusion(&a, &b),
            Err(Error::RowSumMismatch { class: 0, .. })
        ));
    }

    #[test]
    fn degenerate_class_yields_zero_prf() {
        // class 1 never occurs and is never predicted
        let labels = [0usize, 0];
        let preds = [0usize, 0];
        let cm = confusion(&preds, &labels, 2).unwrap();
        let prf = prf1(&cm);
        assert_eq!((prf[1].precision, prf[1].recall, prf[1].f1), (0.0, 0.0, 0.0));
        let rates = tpr_fpr(&preds, &labels, 1).unwrap();
        assert_eq!(rates.tpr, None);
        assert_eq!(rates.fpr, Some(0.0));
    }

    #[test]
    fn adcs_sign_saturation_and_antisymmetry() {
        // Two classes: one bright, one dark image -> E differs everywhere
        // except possibly at frequencies where both are zero.
        let bright = Image::new(1, 4, 4, vec![0.9; 16]).unwrap();
        let dark = Image::new(1, 4, 4, vec![0.1; 16]).unwrap();
        let groups = vec![vec![&bright], vec![&dark]];
        let maps = adcs(&groups).unwrap();
        // DC: bright has more energy -> +1 vs -1
        let dc = 2 * 4 + 2;
        assert_eq!(maps[0].values[dc], 1.0);
        assert_eq!(maps[1].values[dc], -1.0);
        // antisymmetry at every frequency
        for idx in 0..16 {
            let total: f64 = maps.iter().map(|m| m.values[idx]).sum();
            assert_eq!(total, 0.0);
        }
    }

    #[test]
    fn adcs_identical_classes_are_zero() {
        let img = Image::new(1, 4, 4, (0..16).map(|i| i as f64 / 15.0).collect()).unwrap();
        let groups = vec![vec![&img], vec![&img]];
        let maps = adcs(&groups).unwrap();
        assert!(maps[0].values.iter().all(|&v| v == 0.0));
        assert!(maps[1].values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adcs_rejects_single_class() {
        let img = Image::zeros(1, 4, 4);
        assert!(matches!(
            adcs(&[vec![&img]]),
            Err(Error::TooFewClasses { .. })
        ));
    }
}
