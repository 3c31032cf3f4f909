//! Subcommand implementations.
//!
//! [`execute`] runs one [`Invocation`] with a resolved configuration into an
//! output directory and records it in that directory's manifest. Replaying
//! a manifest calls the same function with the recorded invocation and
//! configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use lesionprompt_core::metrics::{aggregate, compute_case_metrics, MetricsReport};
use lesionprompt_core::pasting::{build_plus_set, PlusSetSpec, PseudoLabeled, TumorFree};
use lesionprompt_core::refseg::{decode_model, encode_model, fine_tune, RefModel};
use lesionprompt_core::rng;
use lesionprompt_core::selection::{select_budget, MetricCurve, SelectOptions, SelectionResult};
use lesionprompt_core::synthesis::{Branch, LabeledSample, Provenance, TaskKind};
use lesionprompt_core::{BinaryMask, Volume};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset::{load_brain, scan_cases, write_case, CaseFiles, Role};
use crate::error::{Error, Result};
use crate::io::{self, write_file};
use crate::manifest::{Invocation, RunManifest, RunRecord, SampleRecord};
use crate::pipeline::{self, Case, Source};
use crate::report;

pub const CURVES_FILE: &str = "curves.json";
pub const SELECTION_FILE: &str = "selection.json";
pub const SELECTED_MODEL_FILE: &str = "selected_model.bin";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_CSV: &str = "cases.csv";
pub const FINETUNED_MODEL_FILE: &str = "model.bin";

/// Contents of `selection.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionFile {
    pub selection: SelectionResult,
    /// Chosen checkpoint, relative to the training directory.
    pub checkpoint: String,
}

pub fn checkpoint_name(budget: u32, epoch: u32) -> String {
    format!("checkpoints/T{budget:03}_E{epoch:03}.bin")
}

pub fn final_model_name(budget: u32) -> String {
    format!("model_T{budget:03}.bin")
}

/// Runs `inv` into `out` and updates `out/manifest.json`.
pub fn execute(inv: &Invocation, cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut manifest = RunManifest::load_or_default(out)?;
    let mut rec = RunRecord::new(inv.clone(), cfg);
    log::info!("{} -> {}", inv.name(), out.display());
    match inv {
        Invocation::Phantom { count } => phantom(cfg, out, *count, &mut rec)?,
        Invocation::Synth { task, count, input } => {
            synth(cfg, out, *task, *count, input.as_deref(), &manifest, &mut rec)?
        }
        Invocation::Paste { unlabeled, pseudo, tumor_free } => {
            paste(cfg, out, unlabeled, pseudo, tumor_free, &mut rec)?
        }
        Invocation::Train { prompt, validation } => train(cfg, out, prompt, validation, &mut rec)?,
        Invocation::Select { train_dir } => select(cfg, out, train_dir, &mut rec)?,
        Invocation::Predict { model, input } => predict(cfg, out, model, input, &mut rec)?,
        Invocation::Evaluate { pred, truth, baseline } => evaluate(out, pred, truth, baseline.as_deref(), &mut rec)?,
        Invocation::Finetune { model, data } => finetune(cfg, out, model, data, &mut rec)?,
    }
    let failed = rec.samples.iter().filter(|s| s.error.is_some()).count();
    let total = rec.samples.len();
    manifest.upsert(out, rec)?;
    manifest.save(out)?;
    if failed > 0 {
        return Err(Error::Data(format!("{failed} of {total} samples failed; see the manifest for per-sample errors")));
    }
    Ok(())
}

/// Re-executes every run recorded in `manifest` into `out`, in order.
/// `workers` only sizes the thread pool.
pub fn replay(manifest: &Path, out: &Path, workers: Option<usize>) -> Result<()> {
    let m = RunManifest::load(manifest)?;
    for run in &m.runs {
        let cfg = RunConfig { workers, ..run.config.clone() };
        pipeline::with_workers(workers, || execute(&run.invocation, &cfg, out))??;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path: path.into(), source: e })
}

fn load_model(path: &Path) -> Result<RefModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_model(&bytes)?)
}

fn cases_in(dir: &Path) -> Result<BTreeMap<String, CaseFiles>> {
    if !dir.is_dir() {
        return Err(Error::Data(format!("{} is not a directory", dir.display())));
    }
    scan_cases(dir)
}

fn load_image(files: &CaseFiles, id: &str) -> Result<Volume> {
    io::load_volume_auto(files.require(Role::Image, id)?)
}

fn load_label(files: &CaseFiles, id: &str) -> Result<BinaryMask> {
    io::load_mask_auto(files.require(Role::Label, id)?)
}

fn placeholder_provenance(id: &str) -> Provenance {
    Provenance::new(id, 0, TaskKind::Prompt, Branch::Hyper)
}

/// Labelled cases of a directory with brains (falling back to nonzero
/// voxels), loaded in parallel. When `task` is given and the directory's
/// manifest records a synthesis run of that task, only its samples are used,
/// so prompt and validation samples may share one directory.
fn load_labeled(dir: &Path, task: Option<TaskKind>) -> Result<Vec<Case>> {
    let mut cases = cases_in(dir)?;
    if let Some(task) = task {
        let manifest = RunManifest::load_or_default(dir)?;
        let run =
            manifest.find("synth").find(|r| matches!(r.invocation, Invocation::Synth { task: t, .. } if t == task));
        if let Some(run) = run {
            let ids: BTreeSet<&str> = run.samples.iter().filter(|s| s.error.is_none()).map(|s| s.id.as_str()).collect();
            cases.retain(|id, _| ids.contains(id.as_str()));
        }
    }
    let list: Vec<_> = cases.into_iter().filter(|(_, f)| f.image.is_some()).collect();
    if list.is_empty() {
        return Err(Error::Data(format!("no cases in {}", dir.display())));
    }
    list.par_iter()
        .map(|(id, files)| {
            let image = load_image(files, id)?;
            let mask = load_label(files, id)?;
            let brain = load_brain(files, &image)?;
            Ok(Case {
                id: id.clone(),
                sample: LabeledSample { image, mask, provenance: placeholder_provenance(id) },
                brain,
            })
        })
        .collect()
}

fn phantom(cfg: &RunConfig, out: &Path, count: usize, rec: &mut RunRecord) -> Result<()> {
    if count == 0 {
        return Err(Error::Usage("--count must be at least 1".into()));
    }
    let sources = pipeline::phantom_sources(&cfg.phantom, cfg.seed, "phantom", count)?;
    let files: Vec<Vec<String>> = sources
        .par_iter()
        .map(|s| write_case(out, &s.id, Some(&s.image), None, Some(&s.brain), cfg.format))
        .collect::<Result<_>>()?;
    let base = rng::derive_labeled(cfg.seed, "phantom");
    for (k, (s, f)) in sources.iter().zip(files).enumerate() {
        rec.files.extend(f.iter().cloned());
        rec.samples.push(SampleRecord {
            id: s.id.clone(),
            source_id: s.id.clone(),
            seed: rng::derive_seed(base, k as u64),
            files: f,
            provenance: None,
            error: None,
        });
    }
    Ok(())
}

/// Splits sorted ids by a seeded shuffle; the prompt task gets the larger half.
fn split_pool(ids: &[String], seed: u64, task: TaskKind) -> Vec<String> {
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut rng::stream(rng::derive_labeled(seed, "split")));
    let cut = shuffled.len().div_ceil(2);
    let mut part = if task == TaskKind::Prompt { shuffled[..cut].to_vec() } else { shuffled[cut..].to_vec() };
    part.sort();
    part
}

fn synth(
    cfg: &RunConfig,
    out: &Path,
    task: TaskKind,
    count: usize,
    input: Option<&Path>,
    manifest: &RunManifest,
    rec: &mut RunRecord,
) -> Result<()> {
    if count == 0 {
        return Err(Error::Usage("--count must be at least 1".into()));
    }
    if task == TaskKind::Pasted {
        return Err(Error::Usage("synth supports the prompt and validation tasks".into()));
    }
    let label = pipeline::task_label(task);
    let sources: Vec<Source> = match input {
        None => pipeline::phantom_sources(&cfg.phantom, cfg.seed, &format!("{label}-src"), count)?,
        Some(dir) => {
            let cases = cases_in(dir)?;
            let ids: Vec<String> = cases.iter().filter(|(_, f)| f.image.is_some()).map(|(id, _)| id.clone()).collect();
            if ids.len() < 2 {
                return Err(Error::Data(format!(
                    "{} holds {} source volumes; at least 2 are needed to split prompt and validation pools",
                    dir.display(),
                    ids.len()
                )));
            }
            split_pool(&ids, cfg.seed, task)
                .par_iter()
                .map(|id| {
                    let files = &cases[id];
                    let image = load_image(files, id)?;
                    let brain = load_brain(files, &image)?;
                    Ok(Source { id: id.clone(), image, brain })
                })
                .collect::<Result<_>>()?
        }
    };
    let ids: BTreeSet<&str> = sources.iter().map(|s| s.id.as_str()).collect();
    for other in manifest.find("synth") {
        if matches!(other.invocation, Invocation::Synth { task: t, .. } if t != task) {
            if let Some(shared) = other.sources.iter().find(|s| ids.contains(s.as_str())) {
                return Err(Error::Data(format!(
                    "source {shared:?} is already used by the other task in this manifest; task source pools must be disjoint"
                )));
            }
        }
    }
    let results = pipeline::synth_batch(&sources, task, &cfg.synthesis, cfg.seed, count)?;
    let written: Vec<Result<Vec<String>>> = results
        .par_iter()
        .map(|(_, r)| match r {
            Ok(c) => write_case(out, &c.id, Some(&c.sample.image), Some(&c.sample.mask), Some(&c.brain), cfg.format),
            Err(_) => Ok(Vec::new()),
        })
        .collect();
    rec.sources = sources.iter().map(|s| s.id.clone()).collect();
    for (k, ((seed, result), files)) in results.into_iter().zip(written).enumerate() {
        let files = files?;
        rec.files.extend(files.iter().cloned());
        let source_id = sources[k % sources.len()].id.clone();
        let (provenance, error) = match result {
            Ok(c) => (Some(c.sample.provenance), None),
            Err(e) => (None, Some(e.to_string())),
        };
        rec.samples.push(SampleRecord { id: pipeline::sample_id(task, k), source_id, seed, files, provenance, error });
    }
    Ok(())
}

fn paste(
    cfg: &RunConfig,
    out: &Path,
    unlabeled: &Path,
    pseudo: &Path,
    tumor_free: &Path,
    rec: &mut RunRecord,
) -> Result<()> {
    let images = cases_in(unlabeled)?;
    let labels = cases_in(pseudo)?;
    let label_ids: Vec<&String> = labels.iter().filter(|(_, f)| f.label.is_some()).map(|(id, _)| id).collect();
    if label_ids.is_empty() {
        return Err(Error::Data(format!("no pseudo-labels in {}", pseudo.display())));
    }
    let unlabeled_set: Vec<PseudoLabeled> = label_ids
        .par_iter()
        .map(|&id| {
            let files = images
                .get(id)
                .ok_or_else(|| Error::Data(format!("pseudo-label {id:?} has no image in {}", unlabeled.display())))?;
            Ok(PseudoLabeled {
                id: id.clone(),
                image: load_image(files, id)?,
                pseudo_label: load_label(&labels[id], id)?,
            })
        })
        .collect::<Result<_>>()?;
    let free = cases_in(tumor_free)?;
    let free_list: Vec<(&String, &CaseFiles)> = free.iter().filter(|(_, f)| f.image.is_some()).collect();
    if free_list.is_empty() {
        return Err(Error::Data(format!("no lesion-free images in {}", tumor_free.display())));
    }
    let free_loaded: Vec<(TumorFree, Option<BinaryMask>)> = free_list
        .par_iter()
        .map(|(id, files)| {
            let image = load_image(files, id)?;
            let brain = files.brain.as_deref().map(io::load_mask_auto).transpose()?;
            Ok((TumorFree { id: (*id).clone(), image }, brain))
        })
        .collect::<Result<_>>()?;
    let spec = PlusSetSpec {
        unlabeled_count: unlabeled_set.len(),
        tumor_free_count: free_loaded.len(),
        uses_per_pseudo_label: cfg.paste.uses_per_pseudo_label,
        uses_per_tumor_free: cfg.paste.uses_per_tumor_free,
        seed: rng::derive_labeled(cfg.seed, "paste"),
        renormalize_intensity: cfg.paste.renormalize_intensity,
    };
    let targets: Vec<TumorFree> = free_loaded.iter().map(|(t, _)| t.clone()).collect();
    let plus = build_plus_set(&unlabeled_set, &targets, &spec)?;

    let mut jobs: Vec<(String, &LabeledSample, Option<&BinaryMask>)> = Vec::new();
    let mut pasted = plus.pasted.iter();
    for (k, pair) in plus.pairing.iter().enumerate() {
        if pair.skipped.is_none() {
            let s = pasted.next().ok_or_else(|| Error::Internal("pairing and pasted samples disagree".into()))?;
            jobs.push((format!("paste_{k:04}"), s, free_loaded[pair.tumor_free].1.as_ref()));
        }
    }
    for s in &plus.originals {
        jobs.push((format!("orig-{}", s.provenance.source_id), s, None));
    }
    let written: Vec<Vec<String>> = jobs
        .par_iter()
        .map(|(id, s, brain)| write_case(out, id, Some(&s.image), Some(&s.mask), *brain, cfg.format))
        .collect::<Result<_>>()?;
    for ((id, s, _), files) in jobs.iter().zip(written) {
        rec.files.extend(files.iter().cloned());
        rec.samples.push(SampleRecord {
            id: id.clone(),
            source_id: s.provenance.source_id.clone(),
            seed: s.provenance.seed,
            files,
            provenance: Some(s.provenance.clone()),
            error: None,
        });
    }
    rec.pairing = Some(plus.pairing);
    Ok(())
}

fn train(cfg: &RunConfig, out: &Path, prompt: &Path, validation: &Path, rec: &mut RunRecord) -> Result<()> {
    let mut budgets = cfg.sweep.budgets.clone();
    budgets.sort_unstable_by(|a, b| b.cmp(a));
    budgets.dedup();
    let prompt_cases = load_labeled(prompt, Some(TaskKind::Prompt))?;
    let validation_cases = load_labeled(validation, Some(TaskKind::Validation))?;
    let samples: Vec<LabeledSample> = prompt_cases.into_iter().map(|c| c.sample).collect();
    let runs = pipeline::train_sweep(&samples, &validation_cases, &cfg.train, &budgets, cfg.predict.threshold)?;
    let mut curves = Vec::with_capacity(runs.len());
    for (run, &budget) in runs.iter().zip(&budgets) {
        for (e, model) in run.checkpoints.iter().enumerate() {
            let name = checkpoint_name(budget, e as u32 + 1);
            write_file(&out.join(&name), &encode_model(model))?;
            rec.files.push(name);
        }
        let name = final_model_name(budget);
        write_file(&out.join(&name), &encode_model(run.final_model()))?;
        rec.files.push(name);
        let csv = format!("curve_T{budget:03}.csv");
        write_file(&out.join(&csv), report::curve_csv(&run.curve).as_bytes())?;
        rec.files.push(csv);
        curves.push(run.curve.clone());
    }
    write_json(&out.join(CURVES_FILE), &curves)?;
    rec.files.push(CURVES_FILE.into());
    Ok(())
}

fn select(cfg: &RunConfig, out: &Path, train_dir: &Path, rec: &mut RunRecord) -> Result<()> {
    let curves: Vec<MetricCurve> = read_json(&train_dir.join(CURVES_FILE))?;
    let candidates = &cfg.sweep.budgets;
    let chosen: Vec<MetricCurve> = curves.into_iter().filter(|c| candidates.contains(&c.budget)).collect();
    if chosen.is_empty() {
        return Err(Error::Data(format!(
            "no curve in {} matches the candidate budgets {candidates:?}",
            train_dir.display()
        )));
    }
    let opts = SelectOptions { smoothing_window: cfg.sweep.smoothing_window };
    let selection = select_budget(&chosen, candidates, &opts)?;
    let checkpoint = checkpoint_name(selection.budget, selection.epoch);
    let src = train_dir.join(&checkpoint);
    let bytes = std::fs::read(&src).map_err(|e| Error::io(&src, e))?;
    decode_model(&bytes)?;
    write_file(&out.join(SELECTED_MODEL_FILE), &bytes)?;
    write_json(&out.join(SELECTION_FILE), &SelectionFile { selection, checkpoint })?;
    rec.files.extend([SELECTED_MODEL_FILE.to_string(), SELECTION_FILE.to_string()]);
    Ok(())
}

fn predict(cfg: &RunConfig, out: &Path, model: &Path, input: &Path, rec: &mut RunRecord) -> Result<()> {
    let model = load_model(model)?;
    let cases = cases_in(input)?;
    let list: Vec<_> = cases.iter().filter(|(_, f)| f.image.is_some()).collect();
    if list.is_empty() {
        return Err(Error::Data(format!("no images in {}", input.display())));
    }
    for (id, files) in list {
        let image = load_image(files, id)?;
        let brain = load_brain(files, &image)?;
        let mask = pipeline::predict(&model, &image, &brain, cfg.predict.threshold)?;
        let written = write_case(out, id, None, Some(&mask), None, cfg.format)?;
        rec.files.extend(written.iter().cloned());
        rec.samples.push(SampleRecord {
            id: id.clone(),
            source_id: id.clone(),
            seed: 0,
            files: written,
            provenance: None,
            error: None,
        });
    }
    Ok(())
}

fn evaluate(out: &Path, pred: &Path, truth: &Path, baseline: Option<&Path>, rec: &mut RunRecord) -> Result<()> {
    let preds = cases_in(pred)?;
    let truths = cases_in(truth)?;
    let ids: Vec<&String> = truths.iter().filter(|(_, f)| f.label.is_some()).map(|(id, _)| id).collect();
    if ids.is_empty() {
        return Err(Error::Data(format!("no ground-truth labels in {}", truth.display())));
    }
    let cases = ids
        .par_iter()
        .map(|&id| {
            let p = preds.get(id).ok_or_else(|| Error::Data(format!("no prediction for case {id:?}")))?;
            let pm = load_label(p, id)?;
            let tm = load_label(&truths[id], id)?;
            Ok(compute_case_metrics(id, &pm, &tm)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = aggregate(&cases)?;
    if let Some(path) = baseline {
        let base: MetricsReport = read_json(path)?;
        let by_id: BTreeMap<&str, _> = base.cases.iter().map(|c| (c.case_id.as_str(), c.clone())).collect();
        let aligned = report
            .cases
            .iter()
            .map(|c| {
                by_id
                    .get(c.case_id.as_str())
                    .cloned()
                    .ok_or_else(|| Error::Data(format!("baseline lacks case {:?}", c.case_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        report.compare_with(&aggregate(&aligned)?)?;
    }
    write_json(&out.join(REPORT_JSON), &report)?;
    let table = report::table(&report);
    write_file(&out.join(REPORT_TEXT), table.as_bytes())?;
    write_file(&out.join(REPORT_CSV), report::cases_csv(&report).as_bytes())?;
    print!("{table}");
    rec.files.extend([REPORT_JSON, REPORT_TEXT, REPORT_CSV].map(String::from));
    Ok(())
}

fn finetune(cfg: &RunConfig, out: &Path, model: &Path, data: &Path, rec: &mut RunRecord) -> Result<()> {
    let model = load_model(model)?;
    let samples: Vec<LabeledSample> = load_labeled(data, None)?.into_iter().map(|c| c.sample).collect();
    let tuned = fine_tune(&model, &samples, &cfg.train)?;
    write_file(&out.join(FINETUNED_MODEL_FILE), &encode_model(&tuned))?;
    rec.files.push(FINETUNED_MODEL_FILE.into());
    Ok(())
}
