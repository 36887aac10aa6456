//! Training loop: one document per optimizer step, seeded shuffling.

mod adam;
mod loss;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureLayout, GraphInstance};
use crate::model::{init_params, EcnConfig, EcnParams};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{bce_loss, gradients, loss_and_logit_grad, PROBABILITY_EPSILON};

/// Step decay of the learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrDecay {
    pub every_epochs: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub positive_weight: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub adam: AdamConfig,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub lr_decay: Option<LrDecay>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            epochs: 400,
            positive_weight: 1.0,
            seed: 0,
            shuffle: true,
            adam: AdamConfig::default(),
            clip_norm: None,
            lr_decay: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(
                "learning rate must be finite and >= 0".into(),
            ));
        }
        if self.positive_weight.is_nan() || self.positive_weight <= 0.0 {
            return Err(Error::InvalidArgument("positive weight must be > 0".into()));
        }
        Ok(())
    }

    fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.lr_decay {
            Some(d) if d.every_epochs > 0 => {
                self.learning_rate * d.factor.powi((epoch / d.every_epochs) as i32)
            }
            _ => self.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub seed: u64,
    /// Mean per-document loss of each epoch, measured before each step.
    pub epoch_losses: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
}

impl TrainRecord {
    /// Line-per-epoch TSV: `epoch \t mean_loss \t seconds`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\tmean_loss\tseconds\n");
        for (e, (l, s)) in self
            .epoch_losses
            .iter()
            .zip(&self.epoch_seconds)
            .enumerate()
        {
            out.push_str(&format!("{}\t{l:.8}\t{s:.3}\n", e + 1));
        }
        out
    }
}

/// Shuffle stream independent of the initialization stream.
fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn clip(grads: &mut EcnParams, max_norm: f64) {
    let norm: f64 = grads
        .tensors()
        .iter()
        .flat_map(|t| t.data.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for t in grads.tensors_mut() {
            t.data.iter_mut().for_each(|g| *g *= scale);
        }
    }
}

pub fn train(
    instances: &[GraphInstance],
    layout: &FeatureLayout,
    model: &EcnConfig,
    config: &TrainConfig,
) -> Result<(EcnParams, TrainRecord)> {
    train_with_callback(instances, layout, model, config, |_, _, _| Ok(()))
}

/// As [`train`], calling `on_epoch(epoch, params, mean_loss)` after each
/// epoch (1-based).
pub fn train_with_callback(
    instances: &[GraphInstance],
    layout: &FeatureLayout,
    model: &EcnConfig,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &EcnParams, f64) -> Result<()>,
) -> Result<(EcnParams, TrainRecord)> {
    model.validate()?;
    config.validate()?;
    if instances.is_empty() {
        return Err(Error::InvalidArgument("no training instances".into()));
    }
    if let Some(inst) = instances.iter().find(|i| &i.layout != layout) {
        layout.ensure_matches(&inst.layout)?;
    }

    let mut params = init_params(model, layout, config.seed);
    let mut state = AdamState::new(&params);
    let mut rng = shuffle_rng(config.seed);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut record = TrainRecord {
        seed: config.seed,
        epoch_losses: Vec::with_capacity(config.epochs),
        epoch_seconds: Vec::with_capacity(config.epochs),
    };

    for epoch in 0..config.epochs {
        let started = Instant::now();
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let lr = config.learning_rate_at(epoch);
        let mut total = 0.0;
        for &doc in &order {
            let diverged = |loss| Error::Diverged {
                epoch: epoch + 1,
                document: doc,
                loss,
            };
            let (loss, mut grads) =
                gradients(&instances[doc], &params, model, config.positive_weight).map_err(
                    |e| match e {
                        Error::NonFinite(_) => diverged(f64::NAN),
                        other => other,
                    },
                )?;
            if !loss.is_finite() {
                return Err(diverged(loss));
            }
            if let Some(max) = config.clip_norm {
                clip(&mut grads, max);
            }
            adam_step(&mut params, &grads, &mut state, lr, &config.adam);
            total += loss;
        }
        let mean = total / instances.len() as f64;
        record.epoch_losses.push(mean);
        record.epoch_seconds.push(started.elapsed().as_secs_f64());
        log::debug!("epoch {} loss {mean:.6}", epoch + 1);
        on_epoch(epoch + 1, &params, mean)?;
    }
    Ok((params, record))
}
