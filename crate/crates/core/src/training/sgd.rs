use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grad::{dataset_loss, loss_and_grad, Loss};
use super::task::Dataset;
use crate::error::{Error, Result};
use crate::netcore::Network;
use crate::symmetry::{remove_permutations, PermutationSet, SortKey};

/// Learning rate divided by `divisor` every `every_epochs` epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub every_epochs: usize,
    pub divisor: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "key")]
pub enum PermutationTracking {
    #[default]
    Off,
    PerStep(SortKey),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub lr_decay: Option<StepDecay>,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub momentum: f64,
    pub loss: Loss,
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub loss_threshold: f64,
    #[serde(default)]
    pub permutation_tracking: PermutationTracking,
}

fn default_threshold() -> f64 {
    0.1
}

impl TrainConfig {
    /// 10 epochs, batch 10, constant learning rate 2, binary cross-entropy.
    pub fn toy(seed: u64) -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 10,
            learning_rate: 2.0,
            lr_decay: None,
            weight_decay: 0.0,
            momentum: 0.0,
            loss: Loss::Bce,
            seed,
            loss_threshold: 0.1,
            permutation_tracking: PermutationTracking::Off,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if let Some(d) = self.lr_decay {
            if d.every_epochs == 0 || !(d.divisor > 0.0 && d.divisor.is_finite()) {
                return bad("lr decay needs every_epochs >= 1 and a positive divisor");
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_decay {
            Some(d) => self.learning_rate / d.divisor.powi((epoch / d.every_epochs) as i32),
            None => self.learning_rate,
        }
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }
}

/// Index order of epoch `epoch`: a shuffle drawn from stream `epoch` of `seed`.
pub fn batch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

#[derive(Clone, Debug)]
pub struct TrainTrace {
    /// Mini-batch loss before each update.
    pub losses: Vec<f64>,
    /// Sorting permutation of the network after each update, when tracked.
    pub permutations: Option<Vec<PermutationSet>>,
    pub steps_per_epoch: usize,
    pub final_loss: f64,
    pub network: Network,
}

/// Plain mini-batch SGD, `w ← w − lr (∇L + wd·w)` (heavy-ball velocity when
/// momentum is non-zero). Weight decay applies to every trainable tensor.
pub fn sgd_train(net: &Network, data: &Dataset, cfg: &TrainConfig) -> Result<TrainTrace> {
    cfg.validate()?;
    data.validate()?;
    cfg.loss.check(net, data)?;
    let n = data.len();
    let steps_per_epoch = cfg.steps_per_epoch(n);
    let mut net = net.clone();
    let mut velocity = (cfg.momentum > 0.0).then(|| super::grad::Gradients::zeros(&net));
    let mut losses = Vec::with_capacity(cfg.epochs * steps_per_epoch);
    let mut perms = match cfg.permutation_tracking {
        PermutationTracking::Off => None,
        PermutationTracking::PerStep(_) => Some(Vec::with_capacity(losses.capacity())),
    };
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let order = batch_order(cfg.seed, epoch, n);
        for batch in order.chunks(cfg.batch_size) {
            let step = losses.len();
            let (loss, grads) = loss_and_grad(&net, data, batch, cfg.loss)?;
            if loss.is_nan() {
                return Err(Error::NanLoss { step });
            }
            losses.push(loss);
            for (l, lp) in net.layers_mut().iter_mut().enumerate() {
                let mut vel = velocity.as_mut().map(|v| &mut v.layers[l]);
                for (k, param) in lp.trainable_mut().into_iter().enumerate() {
                    let vk = vel.as_deref_mut().map(|v| &mut v[k]);
                    update(param, &grads.layers[l][k], lr, cfg.weight_decay, cfg.momentum, vk);
                }
            }
            if let (Some(p), PermutationTracking::PerStep(key)) = (perms.as_mut(), cfg.permutation_tracking) {
                p.push(remove_permutations(&net, key)?.1);
            }
        }
    }
    if net.flat_params().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("parameters after {} steps", losses.len())));
    }
    let final_loss = dataset_loss(&net, data, cfg.loss)?;
    if final_loss.is_nan() {
        return Err(Error::NanLoss { step: losses.len() });
    }
    Ok(TrainTrace {
        losses,
        permutations: perms,
        steps_per_epoch,
        final_loss,
        network: net,
    })
}

fn update(param: &mut [f64], grad: &[f64], lr: f64, wd: f64, momentum: f64, velocity: Option<&mut Vec<f64>>) {
    match velocity {
        Some(v) => {
            for ((w, g), vi) in param.iter_mut().zip(grad).zip(v.iter_mut()) {
                *vi = momentum * *vi + g + wd * *w;
                *w -= lr * *vi;
            }
        }
        None => {
            for (w, g) in param.iter_mut().zip(grad) {
                *w -= lr * (g + wd * *w);
            }
        }
    }
}
