use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::features::PreparedVolume;
use super::model::RefModel;
use crate::error::{Error, Result};
use crate::rng;
use crate::selection::{CurveEntry, MetricCurve};
use crate::synthesis::LabeledSample;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    /// Maximum number of epochs.
    pub budget: u32,
    pub base_lr: f64,
    pub poly_exponent: f64,
    /// Voxels per optimizer step.
    pub batch_size: usize,
    /// Foreground : background voxel sampling ratio.
    pub class_ratio: (u32, u32),
    /// Voxels drawn from each training volume per epoch.
    pub voxels_per_sample: usize,
    pub patch_radius: usize,
    pub hidden_width: usize,
    pub fine_tune_epochs: u32,
    pub fine_tune_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            budget: 20,
            base_lr: 1e-2,
            poly_exponent: 0.9,
            batch_size: 4096,
            class_ratio: (1, 3),
            voxels_per_sample: 16384,
            patch_radius: 2,
            hidden_width: 16,
            fine_tune_epochs: 10,
            fine_tune_lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::param("budget", "must be >= 1"));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite())
            || !(self.fine_tune_lr > 0.0 && self.fine_tune_lr.is_finite())
        {
            return Err(Error::param("learning rate", "must be finite and > 0"));
        }
        if self.class_ratio.0 == 0 || self.class_ratio.1 == 0 {
            return Err(Error::param("class_ratio", "both parts must be positive"));
        }
        if self.batch_size == 0 || self.voxels_per_sample == 0 || self.hidden_width == 0 {
            return Err(Error::param("sizes", "batch, voxel and hidden sizes must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(Error::param("adam", "needs betas in [0, 1) and epsilon > 0"));
        }
        Ok(())
    }
}

/// `base * (1 - t / T)^p` for epoch `t` in `0..=T` (clamped to 0 past `T`).
pub fn lr_schedule(t: u32, cfg: &TrainConfig) -> f64 {
    schedule(t, cfg.budget, cfg.base_lr, cfg.poly_exponent)
}

fn schedule(t: u32, budget: u32, base: f64, power: f64) -> f64 {
    let frac = 1.0 - f64::from(t.min(budget)) / f64::from(budget);
    base * libm::pow(frac, power)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0, beta1: cfg.beta1, beta2: cfg.beta2, epsilon: cfg.epsilon }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - libm::pow(self.beta1, f64::from(self.step));
        let c2 = 1.0 - libm::pow(self.beta2, f64::from(self.step));
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (libm::sqrt(v_hat) + self.epsilon);
        }
    }
}

struct Prepared {
    volume: PreparedVolume,
    foreground: Vec<usize>,
    background: Vec<usize>,
}

fn prepare(samples: &[LabeledSample]) -> Result<Vec<Prepared>> {
    samples
        .iter()
        .map(|s| {
            if s.image.dims() != s.mask.dims() {
                return Err(Error::GridMismatch("training sample image and mask dims differ"));
            }
            let foreground = s.mask.foreground();
            let labels = s.mask.data();
            let mut background: Vec<usize> =
                s.image.data().iter().enumerate().filter(|&(i, &v)| !labels[i] && v != 0.0).map(|(i, _)| i).collect();
            if background.is_empty() {
                background = (0..labels.len()).filter(|&i| !labels[i]).collect();
            }
            Ok(Prepared { volume: PreparedVolume::new(&s.image), foreground, background })
        })
        .collect()
}

/// Runs `epochs` epochs of class-balanced minibatch Adam starting from
/// `model`. Calls `hook(epoch, model, mean_loss)` after each epoch.
fn run_epochs(
    model: &mut RefModel,
    data: &[Prepared],
    cfg: &TrainConfig,
    epochs: u32,
    base_lr: f64,
    seed: u64,
    mut hook: impl FnMut(u32, &RefModel, f64),
) -> Result<()> {
    let input = model.input_dim();
    let (fg_part, bg_part) = cfg.class_ratio;
    let n_fg_target = cfg.voxels_per_sample * fg_part as usize / (fg_part + bg_part) as usize;
    let mut adam = Adam::new(model.params().len(), cfg);
    let mut features = Vec::with_capacity(cfg.batch_size * input);
    let mut labels = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..epochs {
        let lr = schedule(epoch, epochs, base_lr, cfg.poly_exponent);
        let epoch_seed = rng::derive_seed(seed, u64::from(epoch));
        let mut picks: Vec<(u32, u32, bool)> = Vec::with_capacity(data.len() * cfg.voxels_per_sample);
        for (si, d) in data.iter().enumerate() {
            let mut r = rng::stream(rng::derive_seed(epoch_seed, si as u64));
            let n_fg = if d.foreground.is_empty() { 0 } else { n_fg_target };
            for k in 0..cfg.voxels_per_sample {
                let (pool, label) = if k < n_fg { (&d.foreground, true) } else { (&d.background, false) };
                if pool.is_empty() {
                    continue;
                }
                picks.push((si as u32, pool[r.random_range(0..pool.len())] as u32, label));
            }
        }
        picks.shuffle(&mut rng::stream(rng::derive_labeled(epoch_seed, "shuffle")));

        let mut loss_sum = 0.0;
        for batch in picks.chunks(cfg.batch_size) {
            features.clear();
            features.resize(batch.len() * input, 0.0);
            labels.clear();
            for (row, &(si, vi, label)) in features.chunks_exact_mut(input).zip(batch) {
                data[si as usize].volume.patch_into(vi as usize, model.patch_radius(), row);
                labels.push(if label { 1.0 } else { 0.0 });
            }
            let (loss, grad) = model.loss_and_gradient(&features, &labels);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch: epoch as usize + 1 });
            }
            loss_sum += loss * batch.len() as f64;
            adam.update(model.params_mut(), &grad, lr);
        }
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch: epoch as usize + 1 });
        }
        let mean_loss = if picks.is_empty() { 0.0 } else { loss_sum / picks.len() as f64 };
        hook(epoch + 1, model, mean_loss);
    }
    Ok(())
}

/// Trains from scratch for `cfg.budget` epochs. After every epoch
/// `per_epoch_hook(epoch, model)` returns the validation-task Dice, which is
/// recorded together with the mean training loss.
pub fn train(
    samples: &[LabeledSample],
    cfg: &TrainConfig,
    mut per_epoch_hook: impl FnMut(u32, &RefModel) -> f64,
) -> Result<(RefModel, MetricCurve)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyInput("no training samples"));
    }
    let data = prepare(samples)?;
    let mut model = RefModel::init(cfg.patch_radius, cfg.hidden_width, cfg.seed)?;
    // Start the output bias at the log-odds of the sampled foreground share.
    let (fg_part, bg_part) = cfg.class_ratio;
    let with_fg = data.iter().filter(|d| !d.foreground.is_empty()).count() as f64;
    let prior =
        (with_fg * f64::from(fg_part) / f64::from(fg_part + bg_part) / data.len() as f64).clamp(1e-4, 1.0 - 1e-4);
    model.set_output_bias(libm::log(prior / (1.0 - prior)));
    let mut entries = Vec::with_capacity(cfg.budget as usize);
    let seed = rng::derive_labeled(cfg.seed, "train");
    run_epochs(&mut model, &data, cfg, cfg.budget, cfg.base_lr, seed, |epoch, m, loss| {
        let dice = per_epoch_hook(epoch, m).clamp(0.0, 1.0);
        entries.push(CurveEntry { epoch, dice, train_loss: Some(loss) });
    })?;
    Ok((model, MetricCurve::new(cfg.budget, entries)?))
}

/// Continues training `model` for `cfg.fine_tune_epochs` epochs on
/// `plus_set` with learning rate `cfg.fine_tune_lr` under the same decay.
pub fn fine_tune(model: &RefModel, plus_set: &[LabeledSample], cfg: &TrainConfig) -> Result<RefModel> {
    cfg.validate()?;
    if cfg.fine_tune_epochs == 0 {
        return Ok(model.clone());
    }
    if plus_set.is_empty() {
        return Err(Error::EmptyInput("empty fine-tuning set"));
    }
    let data = prepare(plus_set)?;
    let mut tuned = model.clone();
    let seed = rng::derive_labeled(cfg.seed, "fine-tune");
    run_epochs(&mut tuned, &data, cfg, cfg.fine_tune_epochs, cfg.fine_tune_lr, seed, |_, _, _| {})?;
    Ok(tuned)
}
