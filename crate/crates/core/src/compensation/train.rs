//! Joint optimization of kernel and net parameters on random patch pairs.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{extract_patch, forward_patch, mae_loss, mae_with_grad, patch_backward, DeconvNetModel, ModelGrad};
use crate::dataset::{substream_seed, Manifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before the learning rate halves.
    pub plateau_patience: usize,
    /// Epochs without validation improvement before training stops.
    pub early_stop_patience: usize,
    /// Random patches drawn from each training sample per epoch.
    pub patches_per_sample: usize,
    /// Fixed patches per validation sample, drawn once.
    pub val_patches_per_sample: usize,
    /// Wall-clock budget in seconds; training stops after the epoch that exceeds it.
    pub max_seconds: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            batch_size: 2,
            max_epochs: 100,
            plateau_patience: 2,
            early_stop_patience: 5,
            patches_per_sample: 1,
            val_patches_per_sample: 2,
            max_seconds: f64::INFINITY,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be finite and nonnegative, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.patches_per_sample == 0 || self.val_patches_per_sample == 0 {
            return Err(Error::config("batch size and patch counts must be at least 1"));
        }
        if !(self.max_seconds > 0.0) {
            return Err(Error::config("time budget must be positive"));
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::config("patience values must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean patch loss over the epoch's updates; absent before training starts.
    pub train_mae: Option<f64>,
    pub val_mae: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Validation MAE of the identity mapping on the same patches.
    pub identity_val_mae: f64,
    pub best_epoch: usize,
}

impl History {
    pub fn best_val_mae(&self) -> f64 {
        self.epochs[self.best_epoch].val_mae
    }

    pub fn to_tsv(&self) -> String {
        let mut s = format!("# identity_val_mae = {}\n# best_epoch = {}\n", self.identity_val_mae, self.best_epoch);
        s.push_str("epoch\ttrain_mae\tval_mae\tlr\tseconds\n");
        for e in &self.epochs {
            let tr = e.train_mae.map_or("NA".to_string(), |v| v.to_string());
            writeln!(s, "{}\t{tr}\t{}\t{}\t{:.1}", e.epoch, e.val_mae, e.lr, e.seconds).unwrap();
        }
        s
    }
}

/// Adam over a flat f64 view of all parameters.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
        }
    }
}

fn flatten<T: Real>(model: &DeconvNetModel<T>) -> Vec<f64> {
    let mut out: Vec<f64> = model.kernels.iter().flat_map(|k| k.local.to_array()).collect();
    out.extend(model.kernels.iter().map(|k| k.log_lambda));
    out.extend(model.net.params.iter().map(|p| p.to64()));
    out
}

fn unflatten<T: Real>(model: &mut DeconvNetModel<T>, flat: &[f64]) {
    let k = model.n_kernels();
    for (i, kn) in model.kernels.iter_mut().enumerate() {
        kn.local = [flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]].into();
        kn.log_lambda = flat[3 * k + i];
    }
    for (p, &f) in model.net.params.iter_mut().zip(&flat[4 * k..]) {
        *p = T::of(f);
    }
}

fn flatten_grad<T: Real>(g: &ModelGrad<T>) -> Vec<f64> {
    let mut out: Vec<f64> = g.local.iter().flatten().copied().collect();
    out.extend(&g.log_lambda);
    out.extend(g.net.iter().map(|p| p.to64()));
    out
}

struct PatchPair<T> {
    input: Array3<T>,
    target: Array3<T>,
}

fn random_origin(rng: &mut impl Rng, n_r: usize, n_v: usize, model_patch: usize) -> (usize, usize) {
    (rng.random_range(0..=n_r - model_patch), rng.random_range(0..n_v))
}

fn sample_pairs<T: Real>(
    manifest: &Manifest,
    entry: &ManifestEntry,
    model: &DeconvNetModel<T>,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<PatchPair<T>>> {
    let (input, target) = manifest.load_pair::<T>(entry)?;
    let (n_r, n_v, _) = input.data.dim();
    (0..count)
        .map(|_| {
            let (r0, v0) = random_origin(rng, n_r, n_v, model.patch.n_r_patch);
            Ok(PatchPair {
                input: extract_patch(&input.data, &model.patch, r0, v0)?,
                target: extract_patch(&target.data, &model.patch, r0, v0)?,
            })
        })
        .collect()
}

fn evaluate<T: Real>(model: &DeconvNetModel<T>, pairs: &[PatchPair<T>]) -> Result<f64> {
    let mut sum = 0.0;
    for p in pairs {
        sum += mae_loss(forward_patch(model, p.input.view())?.view(), p.target.view())?;
    }
    Ok(sum / pairs.len() as f64)
}

/// Trains `model` on the manifest's train split, scheduling on fixed validation
/// patches; returns the best-validation model and the per-epoch history.
pub fn train<T: Real>(
    mut model: DeconvNetModel<T>,
    manifest: &Manifest,
    hp: &TrainConfig,
) -> Result<(DeconvNetModel<T>, History)> {
    hp.validate()?;
    model.validate()?;
    if model.system != manifest.config {
        return Err(Error::config("model and dataset were built for different systems"));
    }
    let train_entries: Vec<&ManifestEntry> = manifest.split(Split::Train).collect();
    let val_entries: Vec<&ManifestEntry> = manifest.split(Split::Val).collect();
    if train_entries.is_empty() || val_entries.is_empty() {
        return Err(Error::Empty("training needs nonempty train and val splits".into()));
    }
    let start = Instant::now();
    let mut val_rng = ChaCha8Rng::seed_from_u64(substream_seed(hp.seed, 2, 0));
    let mut val_pairs = Vec::new();
    for e in &val_entries {
        val_pairs.extend(sample_pairs(manifest, e, &model, hp.val_patches_per_sample, &mut val_rng)?);
    }
    let identity = val_pairs
        .iter()
        .map(|p| mae_loss(p.input.view(), p.target.view()))
        .sum::<Result<f64>>()?
        / val_pairs.len() as f64;

    let mut history = History {
        identity_val_mae: identity,
        ..History::default()
    };
    let val0 = evaluate(&model, &val_pairs)?;
    let mut lr = hp.lr;
    history.epochs.push(EpochRecord {
        epoch: 0,
        train_mae: None,
        val_mae: val0,
        lr,
        seconds: start.elapsed().as_secs_f64(),
    });
    log::info!("epoch 0: val MAE {val0:.4e} (identity {identity:.4e})");

    let mut best = model.clone();
    let mut best_val = val0;
    let mut since_best = 0;
    let mut since_drop = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(hp.seed, 3, 0));
    let mut adam = Adam::new(flatten(&model).len());

    for epoch in 1..=hp.max_epochs {
        let mut order = train_entries.clone();
        order.shuffle(&mut rng);
        let mut losses = Vec::new();
        let mut queue: Vec<PatchPair<T>> = Vec::new();
        for (i, e) in order.iter().enumerate() {
            queue.extend(sample_pairs(manifest, e, &model, hp.patches_per_sample, &mut rng)?);
            let last = i + 1 == order.len();
            while queue.len() >= hp.batch_size || (last && !queue.is_empty()) {
                let n = queue.len().min(hp.batch_size);
                let mut grad = ModelGrad::zeros(&model);
                for pair in queue.drain(..n) {
                    let loss = patch_backward(&model, pair.input.view(), |o| mae_with_grad(o, pair.target.view()), &mut grad)?;
                    if !loss.is_finite() {
                        return Err(Error::NonFinite(format!("training loss at epoch {epoch}, sample {}", e.id)));
                    }
                    losses.push(loss);
                }
                grad.scale(1.0 / n as f64);
                let flat_grad = flatten_grad(&grad);
                if flat_grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient at epoch {epoch}, sample {}", e.id)));
                }
                let mut flat = flatten(&model);
                adam.step(&mut flat, &flat_grad, lr);
                unflatten(&mut model, &flat);
            }
        }
        let train_mae = losses.iter().sum::<f64>() / losses.len() as f64;
        let val = evaluate(&model, &val_pairs)?;
        if !val.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_mae: Some(train_mae),
            val_mae: val,
            lr,
            seconds: start.elapsed().as_secs_f64(),
        });
        log::info!(
            "epoch {epoch}: train {train_mae:.4e} val {val:.4e} ({:.3} of identity) lr {lr:.1e}",
            val / identity
        );
        if val < best_val {
            best_val = val;
            best = model.clone();
            history.best_epoch = epoch;
            since_best = 0;
            since_drop = 0;
        } else {
            since_best += 1;
            since_drop += 1;
            if since_drop >= hp.plateau_patience {
                lr *= 0.5;
                since_drop = 0;
            }
            if since_best >= hp.early_stop_patience {
                log::info!("early stop after {epoch} epochs");
                break;
            }
        }
        if start.elapsed().as_secs_f64() > hp.max_seconds {
            log::info!("time budget exhausted after {epoch} epochs");
            break;
        }
    }
    Ok((best, history))
}
