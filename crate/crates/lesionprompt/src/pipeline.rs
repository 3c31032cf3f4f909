//! Parallel building blocks shared by the commands and the tests.
//!
//! Work is split per sample (synthesis), per budget (training sweep) and per
//! z-slice (prediction). Every unit is a pure function of its inputs and
//! results are gathered in input order, so outputs do not depend on the
//! number of worker threads.

use lesionprompt_core::metrics::compute_case_metrics;
use lesionprompt_core::refseg::{self, PreparedVolume, RefModel, TrainConfig};
use lesionprompt_core::rng;
use lesionprompt_core::selection::MetricCurve;
use lesionprompt_core::synthesis::{self, LabeledSample, SynthesisConfig, TaskKind};
use lesionprompt_core::volume::{make_phantom, PhantomSpec};
use lesionprompt_core::{BinaryMask, Volume};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs `f` on a pool of `workers` threads (all cores when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Internal(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// A lesion-free source scan.
#[derive(Debug, Clone)]
pub struct Source {
    pub id: String,
    pub image: Volume,
    pub brain: BinaryMask,
}

/// A labelled sample together with the brain mask of its source.
#[derive(Debug, Clone)]
pub struct Case {
    pub id: String,
    pub sample: LabeledSample,
    pub brain: BinaryMask,
}

pub fn task_label(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Prompt => "prompt",
        TaskKind::Validation => "validation",
        TaskKind::Pasted => "pasted",
    }
}

/// Seed of sample `k` of `task` under `master`.
pub fn sample_seed(master: u64, task: TaskKind, k: usize) -> u64 {
    rng::derive_seed(rng::derive_labeled(master, task_label(task)), k as u64)
}

/// Phantom `k` of the stream named `label`.
pub fn phantom_source(spec: &PhantomSpec, master: u64, label: &str, k: usize) -> Result<Source> {
    let spec = PhantomSpec { seed: rng::derive_seed(rng::derive_labeled(master, label), k as u64), ..spec.clone() };
    let (image, brain) = make_phantom(&spec)?;
    Ok(Source { id: format!("{label}-{k:04}"), image, brain })
}

/// `count` phantoms of one stream, built in parallel.
pub fn phantom_sources(spec: &PhantomSpec, master: u64, label: &str, count: usize) -> Result<Vec<Source>> {
    (0..count).into_par_iter().map(|k| phantom_source(spec, master, label, k)).collect()
}

/// Id of sample `k` of `task`.
pub fn sample_id(task: TaskKind, k: usize) -> String {
    format!("{}_{k:04}", task_label(task))
}

/// Generates `count` samples of `task`; sample `k` uses source
/// `k % sources.len()`. Failures are returned in place.
pub fn synth_batch(
    sources: &[Source],
    task: TaskKind,
    cfg: &SynthesisConfig,
    master: u64,
    count: usize,
) -> Result<Vec<(u64, Result<Case>)>> {
    if sources.is_empty() {
        return Err(Error::Data("no source volumes".into()));
    }
    if task == TaskKind::Pasted {
        return Err(Error::Usage("pasted samples come from the paste command".into()));
    }
    cfg.validate()?;
    Ok((0..count)
        .into_par_iter()
        .map(|k| {
            let src = &sources[k % sources.len()];
            let seed = sample_seed(master, task, k);
            let sample = match task {
                TaskKind::Prompt => synthesis::synth_prompt_sample(&src.image, &src.brain, cfg, &src.id, seed),
                _ => synthesis::synth_validation_sample(&src.image, &src.brain, cfg, &src.id, seed),
            };
            let case = sample.map(|sample| Case { id: sample_id(task, k), sample, brain: src.brain.clone() });
            (seed, case.map_err(Error::from))
        })
        .collect())
}

/// Same result as [`refseg::predict`], computed slice-parallel.
pub fn predict(model: &RefModel, volume: &Volume, brain: &BinaryMask, threshold: f64) -> Result<BinaryMask> {
    if volume.dims() != brain.dims() {
        return Err(lesionprompt_core::Error::GridMismatch("predict: volume and brain dims differ").into());
    }
    let prepared = PreparedVolume::new(volume);
    let [nx, ny, _] = volume.dims();
    let slice = nx * ny;
    let mut out = vec![false; volume.data().len()];
    out.par_chunks_mut(slice).zip(brain.data().par_chunks(slice)).enumerate().for_each(|(z, (dst, inside))| {
        let mut scratch = vec![0.0; model.input_dim()];
        for (i, (d, &b)) in dst.iter_mut().zip(inside).enumerate() {
            if b {
                *d = model.probability_at(&prepared, z * slice + i, &mut scratch) >= threshold;
            }
        }
    });
    Ok(BinaryMask::new(*volume.grid(), out)?)
}

/// Mean Dice of `model` over `cases`.
pub fn mean_dice(model: &RefModel, cases: &[Case], threshold: f64) -> Result<f64> {
    if cases.is_empty() {
        return Err(Error::Data("no evaluation cases".into()));
    }
    let mut total = 0.0;
    for c in cases {
        let pred = predict(model, &c.sample.image, &c.brain, threshold)?;
        total += compute_case_metrics(&c.id, &pred, &c.sample.mask)?.dice;
    }
    Ok(total / cases.len() as f64)
}

/// One budget of a sweep: its validation curve, the model after every
/// epoch (index `e - 1` for epoch `e`) and the final model.
#[derive(Debug, Clone)]
pub struct BudgetRun {
    pub curve: MetricCurve,
    pub checkpoints: Vec<RefModel>,
}

impl BudgetRun {
    pub fn model_at(&self, epoch: u32) -> Option<&RefModel> {
        self.checkpoints.get((epoch as usize).checked_sub(1)?)
    }

    pub fn final_model(&self) -> &RefModel {
        self.checkpoints.last().expect("budget >= 1")
    }
}

/// Trains one model per budget from the same seed, scoring each epoch on
/// the validation cases. Budgets run in parallel.
pub fn train_sweep(
    prompt: &[LabeledSample],
    validation: &[Case],
    cfg: &TrainConfig,
    budgets: &[u32],
    threshold: f64,
) -> Result<Vec<BudgetRun>> {
    if validation.is_empty() {
        return Err(Error::Data("no validation-task cases".into()));
    }
    budgets
        .par_iter()
        .map(|&budget| {
            let cfg = TrainConfig { budget, ..cfg.clone() };
            let mut checkpoints = Vec::with_capacity(budget as usize);
            let mut failure = None;
            let (_, curve) = refseg::train(prompt, &cfg, |_, model| {
                checkpoints.push(model.clone());
                match mean_dice(model, validation, threshold) {
                    Ok(d) => d,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            Ok(BudgetRun { curve, checkpoints })
        })
        .collect()
}
