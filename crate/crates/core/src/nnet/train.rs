//! SGD training with the plateau learning-rate schedule and early-iteration
//! probe logging.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::metrics::{confusion, prf1, PrfRecord};

use super::model::{
    argmax_low, forward_batch, loss_and_grads, BatchView, Model, ModelConfig,
};
use super::scalar::Scalar;

/// Optimization recipe: SGD, momentum 0.9, weight decay 1e-4, batch 128,
/// initial rate 0.01 cut by 10 whenever validation loss stalls for 10 epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    /// Log per-iteration probe metrics for this many leading iterations.
    pub probe_iters: usize,
    /// Probe every `probe_stride`-th iteration within the probe window.
    pub probe_stride: usize,
    pub seed: u64,
    /// Stop once a plateau cut would push the rate below this value; `None`
    /// runs all epochs.
    pub early_stop_min_lr: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 128,
            epochs: 100,
            plateau_factor: 10.0,
            plateau_patience: 10,
            probe_iters: 500,
            probe_stride: 1,
            seed: 0,
            early_stop_min_lr: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr0", self.lr0),
            ("momentum", self.momentum + 1.0), // momentum 0 is fine
            ("weight_decay", self.weight_decay + 1.0),
            ("plateau_factor", self.plateau_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 || self.probe_stride == 0 {
            return Err(Error::InvalidConfig(
                "epochs, batch_size and probe_stride must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Momentum buffer of the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState<T> {
    pub velocity: Vec<T>,
}

impl<T: Scalar> SgdState<T> {
    pub fn zeros(len: usize) -> Self {
        SgdState {
            velocity: vec![T::ZERO; len],
        }
    }
}

/// One SGD update:
/// `v <- momentum * v + (grad + weight_decay * theta)`,
/// `theta <- theta - lr * v`.
pub fn sgd_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    state: &mut SgdState<T>,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.velocity.len());
    let mu = T::from_f64(momentum);
    let wd = T::from_f64(weight_decay);
    let step = T::from_f64(lr);
    for ((p, &g), v) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.velocity.iter_mut())
    {
        *v = mu * *v + (g + wd * *p);
        *p -= step * *v;
    }
}

/// Probe metrics logged at one iteration: raw confusion counts plus the
/// derived per-class precision/recall/F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    /// Row-major `n_classes x n_classes` counts on the probe set.
    pub confusion: Vec<u64>,
    pub prf: Vec<PrfRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    /// 1-based global iteration index.
    pub iteration: usize,
    pub train_loss: f64,
    pub probe: Option<ProbeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub val_loss: f64,
    pub lr: f64,
}

/// Full training history: per-iteration records for the probe window and
/// per-epoch validation loss and learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub n_classes: usize,
    pub iterations: Vec<IterRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// Mean probe F1 of one class over all probed iterations.
    pub fn mean_probe_f1(&self, class: usize) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for rec in &self.iterations {
            if let Some(p) = &rec.probe {
                sum += p.prf[class].f1;
                count += 1;
            }
        }
        if count > 0 {
            sum / count as f64
        } else {
            0.0
        }
    }

    pub fn to_csv_string(&self) -> String {
        let n = self.n_classes;
        let mut out = String::from("iteration,train_loss");
        for c in 0..n {
            out.push_str(&format!(",precision_{c},recall_{c},f1_{c}"));
        }
        for i in 0..n {
            for j in 0..n {
                out.push_str(&format!(",conf_{i}_{j}"));
            }
        }
        out.push('\n');
        for rec in &self.iterations {
            out.push_str(&format!("{},{}", rec.iteration, rec.train_loss));
            match &rec.probe {
                Some(p) => {
                    for r in &p.prf {
                        out.push_str(&format!(",{},{},{}", r.precision, r.recall, r.f1));
                    }
                    for v in &p.confusion {
                        out.push_str(&format!(",{v}"));
                    }
                }
                None => {
                    for _ in 0..(3 * n + n * n) {
                        out.push(',');
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv_str(s: &str, n_classes: usize) -> Result<TrainLog> {
        let bad = |line: usize, what: &str| {
            Error::InvalidConfig(format!("trainlog csv line {line}: {what}"))
        };
        let mut iterations = Vec::new();
        for (ln, line) in s.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            let expect = 2 + 3 * n_classes + n_classes * n_classes;
            if cells.len() != expect {
                return Err(bad(ln + 1, "wrong column count"));
            }
            let iteration: usize = cells[0].parse().map_err(|_| bad(ln + 1, "iteration"))?;
            let train_loss: f64 = cells[1].parse().map_err(|_| bad(ln + 1, "loss"))?;
            let probe = if cells[2].is_empty() {
                None
            } else {
                let mut prf = Vec::with_capacity(n_classes);
                for c in 0..n_classes {
                    let p: f64 = cells[2 + 3 * c].parse().map_err(|_| bad(ln + 1, "precision"))?;
                    let r: f64 = cells[3 + 3 * c].parse().map_err(|_| bad(ln + 1, "recall"))?;
                    let f1: f64 = cells[4 + 3 * c].parse().map_err(|_| bad(ln + 1, "f1"))?;
                    prf.push(PrfRecord {
                        class: c,
                        precision: p,
                        recall: r,
                        f1,
                    });
                }
                let base = 2 + 3 * n_classes;
                let mut conf = Vec::with_capacity(n_classes * n_classes);
                for cell in &cells[base..] {
                    conf.push(cell.parse().map_err(|_| bad(ln + 1, "confusion"))?);
                }
                Some(ProbeRecord {
                    confusion: conf,
                    prf,
                })
            };
            iterations.push(IterRecord {
                iteration,
                train_loss,
                probe,
            });
        }
        Ok(TrainLog {
            n_classes,
            iterations,
            epochs: Vec::new(),
        })
    }

    pub fn lr_schedule_csv(&self) -> String {
        let mut out = String::from("epoch,val_loss,lr\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.val_loss, e.lr));
        }
        out
    }
}

/// Dataset flattened to the scalar type of the network.
pub struct FlatData<T> {
    pub data: Vec<T>,
    pub labels: Vec<usize>,
    pub count: usize,
    pub side: usize,
    pub sample_len: usize,
}

pub fn flatten_dataset<T: Scalar>(ds: &LabeledDataset) -> FlatData<T> {
    let sample_len = ds.channels() * ds.side() * ds.side();
    let mut data = Vec::with_capacity(ds.len() * sample_len);
    for img in &ds.images {
        data.extend(img.data.iter().map(|&v| T::from_f64(v)));
    }
    FlatData {
        data,
        labels: ds.labels.clone(),
        count: ds.len(),
        side: ds.side(),
        sample_len,
    }
}

/// Predicted labels for a flattened dataset.
pub fn predict_flat<T: Scalar>(model: &Model<T>, flat: &FlatData<T>) -> Vec<usize> {
    forward_batch(model, &flat.data, flat.count, flat.side)
        .iter()
        .map(|logits| argmax_low(logits))
        .collect()
}

fn probe_record(model: &Model<f32>, probe: &FlatData<f32>, n_classes: usize) -> Result<ProbeRecord> {
    let preds = predict_flat(model, probe);
    let cm = confusion(&preds, &probe.labels, n_classes)?;
    Ok(ProbeRecord {
        prf: prf1(&cm),
        confusion: cm.counts,
    })
}

fn shuffle_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(b"shuf");
    key[12..20].copy_from_slice(&(epoch as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Train the compact CNN on one dataset. The probe set is evaluated every
/// `probe_stride` iterations within the first `probe_iters` iterations;
/// the plateau schedule watches per-epoch validation loss.
pub fn train(
    train_set: &LabeledDataset,
    val_set: &LabeledDataset,
    probe_set: &LabeledDataset,
    config: &TrainConfig,
) -> Result<(Model<f32>, TrainLog)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if val_set.is_empty() {
        return Err(Error::MissingSplit {
            split: "val".into(),
        });
    }
    let n_classes = train_set.n_classes;
    let model_config = ModelConfig::compact(train_set.channels(), n_classes);
    let mut model: Model<f32> = Model::init(model_config, config.seed);
    let mut state = SgdState::zeros(model.parameter_count());

    let train_flat: FlatData<f32> = flatten_dataset(train_set);
    let val_flat: FlatData<f32> = flatten_dataset(val_set);
    let probe_flat: FlatData<f32> = flatten_dataset(probe_set);

    let mut log = TrainLog {
        n_classes,
        iterations: Vec::new(),
        epochs: Vec::new(),
    };

    let mut lr = config.lr0;
    let mut best_val = f64::INFINITY;
    let mut stall = 0usize;
    let mut iteration = 0usize;
    let sample_len = train_flat.sample_len;

    let mut batch_data: Vec<f32> = Vec::with_capacity(config.batch_size * sample_len);
    let mut batch_labels: Vec<usize> = Vec::with_capacity(config.batch_size);

    'epochs: for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_flat.count).collect();
        order.shuffle(&mut shuffle_rng(config.seed, epoch));

        for chunk in order.chunks(config.batch_size) {
            iteration += 1;
            batch_data.clear();
            batch_labels.clear();
            for &i in chunk {
                batch_data.extend_from_slice(
                    &train_flat.data[i * sample_len..(i + 1) * sample_len],
                );
                batch_labels.push(train_flat.labels[i]);
            }
            let batch = BatchView {
                data: &batch_data,
                labels: &batch_labels,
                count: chunk.len(),
                sample_len,
                side: train_flat.side,
            };
            let (loss, grads) = loss_and_grads(&model, &batch)?;
            sgd_step(
                &mut model.params,
                &grads,
                &mut state,
                lr,
                config.momentum,
                config.weight_decay,
            );

            if iteration <= config.probe_iters {
                let probe = if (iteration - 1) % config.probe_stride == 0 {
                    Some(probe_record(&model, &probe_flat, n_classes)?)
                } else {
                    None
                };
                log.iterations.push(IterRecord {
                    iteration,
                    train_loss: loss,
                    probe,
                });
            }
        }

        let val_loss = super::model::batch_loss(&model, &val_flat.data, &val_flat.labels, val_flat.side);
        log.epochs.push(EpochRecord {
            epoch,
            val_loss,
            lr,
        });

        if val_loss < best_val {
            best_val = val_loss;
            stall = 0;
        } else {
            stall += 1;
            if stall >= config.plateau_patience {
                let next = lr / config.plateau_factor;
                if let Some(min_lr) = config.early_stop_min_lr {
                    if next < min_lr {
                        break 'epochs;
                    }
                }
                lr = next;
                stall = 0;
            }
        }
    }

    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_plain_step_subtracts_gradient() {
        let mut p = vec![1.0f64, -2.0];
        let g = vec![0.25f64, 0.5];
        let mut st = SgdState::zeros(2);
        sgd_step(&mut p, &g, &mut st, 1.0, 0.0, 0.0);
        assert_eq!(p, vec![0.75, -2.5]);
    }

    #[test]
    fn sgd_weight_decay_shrinks_parameters() {
        let mut p = vec![2.0f64, -4.0];
        let g = vec![0.0f64, 0.0];
        let mut st = SgdState::zeros(2);
        let (lr, wd) = (0.1, 1e-4);
        sgd_step(&mut p, &g, &mut st, lr, 0.0, wd);
        assert!((p[0] - 2.0 * (1.0 - lr * wd)).abs() < 1e-15);
        assert!((p[1] - -4.0 * (1.0 - lr * wd)).abs() < 1e-15);
    }

    #[test]
    fn sgd_momentum_two_step_displacement() {
        // constant gradient g, momentum 0.9: after two steps the parameter
        // moved by lr*g*(1 + 1.9)
        let g0 = 0.5f64;
        let lr = 0.01;
        let mut p = vec![1.0f64];
        let g = vec![g0];
        let mut st = SgdState::zeros(1);
        sgd_step(&mut p, &g, &mut st, lr, 0.9, 0.0);
        sgd_step(&mut p, &g, &mut st, lr, 0.9, 0.0);
        let expect = 1.0 - lr * g0 * (1.0 + 1.9);
        assert!((p[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn trainlog_csv_round_trip() {
        let log = TrainLog {
            n_classes: 2,
            iterations: vec![
                IterRecord {
                    iteration: 1,
                    train_loss: 0.6931471805599453,
                    probe: Some(ProbeRecord {
                        confusion: vec![3, 1, 0, 4],
                        prf: vec![
                            PrfRecord {
                                class: 0,
                                precision: 1.0,
                                recall: 0.75,
                                f1: 6.0 / 7.0,
                            },
                            PrfRecord {
                                class: 1,
                                precision: 0.8,
                                recall: 1.0,
                                f1: 8.0 / 9.0,
                            },
                        ],
                    }),
                },
                IterRecord {
                    iteration: 2,
                    train_loss: 0.5,
                    probe: None,
                },
            ],
            epochs: vec![],
        };
        let csv = log.to_csv_string();
        let back = TrainLog::from_csv_str(&csv, 2).unwrap();
        assert_eq!(back.iterations, log.iterations);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut c = TrainConfig::default();
        c.epochs = 0;
        assert!(c.validate().is_err());
    }
}
