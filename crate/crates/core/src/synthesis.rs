//! Prompt-task and validation-task sample generation.
//!
//! A prompt sample mixes a blurred, scaled copy of the source into a soft
//! region `A`:
//!
//! ```text
//! X = (lambda * blur(x)) * A + x * (1 - A)      Y = [A >= a]
//! ```
//!
//! where `A` is the smoothed intersection `M` of a random polyhedron with
//! the brain mask. With a small probability a darker core is mixed in
//! afterwards with `lambda_dark` and its own weight image, leaving `Y`
//! untouched. A validation sample uses the unblurred source and a binary
//! `A = M`, so its lesions have sharp borders and native texture.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{place_in_brain, rasterize_polyhedron, PolyhedronSpec, SizeDistribution};
use crate::rng;
use crate::volume::{gaussian_blur, BinaryMask, Volume};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct SynthesisConfig {
    /// Weight threshold for the label.
    pub threshold_a: f64,
    pub lambda_range: (f64, f64),
    pub lambda_dark_range: (f64, f64),
    pub dark_component_probability: f64,
    /// Sigma of the smoothing that turns `M` into `A`.
    pub mask_smoothing_sigma_mm: f64,
    /// Sigma of the blur inside the intensity transform.
    pub blur_sigma_mm: f64,
    pub size_dist: SizeDistribution,
    /// Dark polyhedron volume as a fraction of `|M|`.
    pub dark_size_fraction_range: (f64, f64),
    pub enable_dark: bool,
    pub validation_lambda_range: (f64, f64),
    /// Smallest acceptable `|M|` in voxels.
    pub min_lesion_voxels: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            threshold_a: 0.1,
            lambda_range: (1.5, 5.0),
            lambda_dark_range: (0.8, 1.2),
            dark_component_probability: 0.1,
            mask_smoothing_sigma_mm: 1.0,
            blur_sigma_mm: 2.0,
            size_dist: SizeDistribution::tumor(),
            dark_size_fraction_range: (0.1, 0.5),
            enable_dark: true,
            validation_lambda_range: (1.5, 5.0),
            min_lesion_voxels: crate::geometry::DEFAULT_MIN_VOXELS,
        }
    }
}

impl SynthesisConfig {
    pub fn tumor() -> Self {
        Self::default()
    }

    /// Stroke lesions: bimodal sizes, hyper-intensity only.
    pub fn stroke() -> Self {
        Self { size_dist: SizeDistribution::stroke(), enable_dark: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !(self.threshold_a > 0.0 && self.threshold_a < 1.0) {
            return Err(Error::param("threshold_a", "must lie in (0, 1)"));
        }
        if !range_ok(self.lambda_range) || self.lambda_range.0 <= 1.0 {
            return Err(Error::param("lambda_range", "needs 1 < lower <= upper"));
        }
        if !range_ok(self.lambda_dark_range) || self.lambda_dark_range.0 <= 0.0 {
            return Err(Error::param("lambda_dark_range", "needs 0 < lower <= upper"));
        }
        if !range_ok(self.validation_lambda_range) || self.validation_lambda_range.0 <= 0.0 {
            return Err(Error::param("validation_lambda_range", "needs 0 < lower <= upper"));
        }
        if !(0.0..=1.0).contains(&self.dark_component_probability) {
            return Err(Error::param("dark_component_probability", "must lie in [0, 1]"));
        }
        for (name, s) in
            [("mask_smoothing_sigma_mm", self.mask_smoothing_sigma_mm), ("blur_sigma_mm", self.blur_sigma_mm)]
        {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::param(name, "must be finite and > 0"));
            }
        }
        let (flo, fhi) = self.dark_size_fraction_range;
        if !(range_ok(self.dark_size_fraction_range) && flo > 0.0 && fhi < 1.0) {
            return Err(Error::param("dark_size_fraction_range", "needs 0 < lower <= upper < 1"));
        }
        if self.min_lesion_voxels == 0 {
            return Err(Error::param("min_lesion_voxels", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TaskKind {
    Prompt,
    Validation,
    Pasted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Branch {
    /// Smooth hyper-intensity only.
    Hyper,
    /// Hyper-intensity followed by a darker core.
    HyperWithDark,
    /// Validation-task binary region.
    Sharp,
    /// Lesion pasted from a pseudo-labelled scan.
    Paste,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    pub source_id: String,
    pub seed: u64,
    pub task: TaskKind,
    pub branch: Branch,
    pub lambda: Option<f64>,
    pub lambda_dark: Option<f64>,
    pub target_volume_mm3: Option<f64>,
    /// Rasterized polyhedron volume before intersecting with the brain.
    pub polyhedron_volume_mm3: Option<f64>,
    /// For pasted samples, the pseudo-label's source id.
    pub lesion_source_id: Option<String>,
}

impl Provenance {
    pub fn new(source_id: impl Into<String>, seed: u64, task: TaskKind, branch: Branch) -> Self {
        Self {
            source_id: source_id.into(),
            seed,
            task,
            branch,
            lambda: None,
            lambda_dark: None,
            target_volume_mm3: None,
            polyhedron_volume_mm3: None,
            lesion_source_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub image: Volume,
    pub mask: BinaryMask,
    pub provenance: Provenance,
}

/// Intermediate fields kept for auditing a generated sample.
#[derive(Debug, Clone)]
pub struct SynthesisTrace {
    /// `M`, the lesion region inside the brain.
    pub region: BinaryMask,
    /// `A`; binary for validation samples.
    pub weight: Volume,
    pub dark_weight: Option<Volume>,
}

/// `A = blur(m) * brain`, in [0, 1].
pub fn make_weight_image(m: &BinaryMask, brain: &BinaryMask, sigma_mm: f64) -> Result<Volume> {
    if !m.grid().same_lattice(brain.grid()) {
        return Err(Error::GridMismatch("make_weight_image: region and brain grids differ"));
    }
    if !m.is_subset_of(brain) {
        return Err(Error::param("m", "region must lie inside the brain mask"));
    }
    let blurred = gaussian_blur(&m.to_volume(), sigma_mm)?;
    let data =
        blurred.data().iter().zip(brain.data()).map(|(&a, &b)| if b { a.clamp(0.0, 1.0) } else { 0.0 }).collect();
    Volume::new(*m.grid(), data)
}

fn check_weight(x: &Volume, a: &Volume) -> Result<()> {
    if !x.grid().same_lattice(a.grid()) {
        return Err(Error::GridMismatch("weight image and volume grids differ"));
    }
    if a.data().iter().any(|&w| !(0.0..=1.0).contains(&w)) {
        return Err(Error::param("a_img", "weights must lie in [0, 1]"));
    }
    Ok(())
}

/// `out = t * w + base * (1 - w)`, copying `base` bit-for-bit where `w == 0`.
fn mix(t: impl Fn(usize) -> f64, base: &Volume, w: &Volume) -> Result<Volume> {
    let data = base
        .data()
        .iter()
        .zip(w.data())
        .enumerate()
        .map(|(i, (&b, &wi))| if wi == 0.0 { b } else { t(i) * wi + b * (1.0 - wi) })
        .collect();
    Volume::new(*base.grid(), data)
}

/// Mixes `lambda * blur(x_i)` into `x_i` under weight `a_img` and labels
/// voxels with `A >= threshold_a`.
pub fn apply_prompt_transform(
    x_i: &Volume,
    a_img: &Volume,
    lambda: f64,
    blur_sigma_mm: f64,
    threshold_a: f64,
) -> Result<(Volume, BinaryMask)> {
    let blurred = gaussian_blur(x_i, blur_sigma_mm)?;
    prompt_with_blurred(x_i, &blurred, a_img, lambda, threshold_a)
}

fn prompt_with_blurred(
    x_i: &Volume,
    blurred: &Volume,
    a_img: &Volume,
    lambda: f64,
    threshold_a: f64,
) -> Result<(Volume, BinaryMask)> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::param("lambda", "must be finite and > 0"));
    }
    check_weight(x_i, a_img)?;
    let b = blurred.data();
    let x = mix(|i| lambda * b[i], x_i, a_img)?;
    Ok((x, a_img.threshold(threshold_a)))
}

/// Result of adding a dark core to a prompt sample.
#[derive(Debug, Clone)]
pub struct DarkComponent {
    pub image: Volume,
    pub mask: BinaryMask,
    pub weight: Volume,
    pub lambda_dark: f64,
}

/// Mixes `lambda_dark * blur(x_i)` into `x` inside a smaller polyhedron
/// centred in `m`. The label is returned unchanged.
#[allow(clippy::too_many_arguments)]
pub fn apply_dark_component<R: Rng + ?Sized>(
    x: &Volume,
    x_i: &Volume,
    y: &BinaryMask,
    m: &BinaryMask,
    brain: &BinaryMask,
    cfg: &SynthesisConfig,
    rng: &mut R,
) -> Result<DarkComponent> {
    let blurred = gaussian_blur(x_i, cfg.blur_sigma_mm)?;
    dark_with_blurred(x, &blurred, y, m, brain, cfg, rng)
}

fn dark_with_blurred<R: Rng + ?Sized>(
    x: &Volume,
    blurred: &Volume,
    y: &BinaryMask,
    m: &BinaryMask,
    brain: &BinaryMask,
    cfg: &SynthesisConfig,
    rng: &mut R,
) -> Result<DarkComponent> {
    if m.is_empty() {
        return Err(Error::PlacementFailed { attempts: 0, min_voxels: 1 });
    }
    let (flo, fhi) = cfg.dark_size_fraction_range;
    let fraction = if flo < fhi { rng.random_range(flo..fhi) } else { flo };
    let target = fraction * m.count() as f64 * m.grid().voxel_volume();
    let spec = PolyhedronSpec::random(target, rng);
    let poly = rasterize_polyhedron(&spec, m.spacing())?;
    let core = place_in_brain(&poly.mask, m, rng, 1)?;
    let weight = make_weight_image(&core, brain, cfg.mask_smoothing_sigma_mm)?;
    let (llo, lhi) = cfg.lambda_dark_range;
    let lambda_dark = if llo < lhi { rng.random_range(llo..lhi) } else { llo };
    let b = blurred.data();
    let image = mix(|i| lambda_dark * b[i], x, &weight)?;
    Ok(DarkComponent { image, mask: y.clone(), weight, lambda_dark })
}

/// Whether the sample with this seed takes the dark branch.
pub fn takes_dark_branch(cfg: &SynthesisConfig, seed: u64) -> bool {
    if !cfg.enable_dark {
        return false;
    }
    let u: f64 = rng::stream(rng::derive_labeled(seed, "branch")).random();
    u < cfg.dark_component_probability
}

struct Region {
    m: BinaryMask,
    target: f64,
    poly_volume: f64,
}

fn sample_region(brain: &BinaryMask, cfg: &SynthesisConfig, seed: u64) -> Result<Region> {
    let mut rng = rng::stream(rng::derive_labeled(seed, "region"));
    let target = cfg.size_dist.sample(&mut rng);
    let spec = PolyhedronSpec::random(target, &mut rng);
    let poly = rasterize_polyhedron(&spec, brain.spacing())?;
    let m = place_in_brain(&poly.mask, brain, &mut rng, cfg.min_lesion_voxels)?;
    Ok(Region { m, target, poly_volume: poly.volume_mm3() })
}

fn check_inputs(x_i: &Volume, brain: &BinaryMask, cfg: &SynthesisConfig) -> Result<()> {
    cfg.validate()?;
    if !x_i.grid().same_lattice(brain.grid()) {
        return Err(Error::GridMismatch("source volume and brain mask grids differ"));
    }
    Ok(())
}

/// One prompt-task sample; see the module docs.
pub fn synth_prompt_sample(
    x_i: &Volume,
    brain: &BinaryMask,
    cfg: &SynthesisConfig,
    source_id: &str,
    seed: u64,
) -> Result<LabeledSample> {
    synth_prompt_sample_traced(x_i, brain, cfg, source_id, seed).map(|(s, _)| s)
}

pub fn synth_prompt_sample_traced(
    x_i: &Volume,
    brain: &BinaryMask,
    cfg: &SynthesisConfig,
    source_id: &str,
    seed: u64,
) -> Result<(LabeledSample, SynthesisTrace)> {
    check_inputs(x_i, brain, cfg)?;
    let region = sample_region(brain, cfg, seed)?;
    let weight = make_weight_image(&region.m, brain, cfg.mask_smoothing_sigma_mm)?;
    let (llo, lhi) = cfg.lambda_range;
    let lambda = if llo < lhi { rng::stream(rng::derive_labeled(seed, "lambda")).random_range(llo..lhi) } else { llo };
    let blurred = gaussian_blur(x_i, cfg.blur_sigma_mm)?;
    let (mut image, mut mask) = prompt_with_blurred(x_i, &blurred, &weight, lambda, cfg.threshold_a)?;

    let mut prov = Provenance::new(source_id, seed, TaskKind::Prompt, Branch::Hyper);
    prov.lambda = Some(lambda);
    prov.target_volume_mm3 = Some(region.target);
    prov.polyhedron_volume_mm3 = Some(region.poly_volume);

    let mut dark_weight = None;
    if takes_dark_branch(cfg, seed) {
        let mut rng = rng::stream(rng::derive_labeled(seed, "dark"));
        let dark = dark_with_blurred(&image, &blurred, &mask, &region.m, brain, cfg, &mut rng)?;
        image = dark.image;
        mask = dark.mask;
        prov.branch = Branch::HyperWithDark;
        prov.lambda_dark = Some(dark.lambda_dark);
        dark_weight = Some(dark.weight);
    }
    let sample = LabeledSample { image, mask, provenance: prov };
    Ok((sample, SynthesisTrace { region: region.m, weight, dark_weight }))
}

/// One validation-task sample: `X = lambda * x_i` on `M`, `x_i` elsewhere, `Y = M`.
pub fn synth_validation_sample(
    x_i: &Volume,
    brain: &BinaryMask,
    cfg: &SynthesisConfig,
    source_id: &str,
    seed: u64,
) -> Result<LabeledSample> {
    synth_validation_sample_traced(x_i, brain, cfg, source_id, seed).map(|(s, _)| s)
}

pub fn synth_validation_sample_traced(
    x_i: &Volume,
    brain: &BinaryMask,
    cfg: &SynthesisConfig,
    source_id: &str,
    seed: u64,
) -> Result<(LabeledSample, SynthesisTrace)> {
    check_inputs(x_i, brain, cfg)?;
    let region = sample_region(brain, cfg, seed)?;
    let (llo, lhi) = cfg.validation_lambda_range;
    let lambda = if llo < lhi { rng::stream(rng::derive_labeled(seed, "lambda")).random_range(llo..lhi) } else { llo };
    let data: Vec<f64> =
        x_i.data().iter().zip(region.m.data()).map(|(&v, &inside)| if inside { lambda * v } else { v }).collect();
    let image = Volume::new(*x_i.grid(), data)?;
    let mut prov = Provenance::new(source_id, seed, TaskKind::Validation, Branch::Sharp);
    prov.lambda = Some(lambda);
    prov.target_volume_mm3 = Some(region.target);
    prov.polyhedron_volume_mm3 = Some(region.poly_volume);
    let weight = region.m.to_volume();
    let sample = LabeledSample { image, mask: region.m.clone(), provenance: prov };
    Ok((sample, SynthesisTrace { region: region.m, weight, dark_weight: None }))
}
