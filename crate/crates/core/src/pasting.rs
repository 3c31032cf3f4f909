//! Pseudo-label pasting for the fine-tuning set.
//!
//! Each lesion image `S` with pseudo-label `P` is pasted onto a lesion-free
//! volume `X` as `Xp = S * P + X * (1 - P)`, `Yp = P`. Lesion sources on a
//! different grid are resampled to the target grid first.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;
use crate::synthesis::{Branch, LabeledSample, Provenance, TaskKind};
use crate::volume::{resample_mask, resample_volume, BinaryMask, Volume};

/// Pseudo-labels smaller than this are skipped.
pub const MIN_PSEUDO_LABEL_VOXELS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlusSetSpec {
    pub unlabeled_count: usize,
    pub tumor_free_count: usize,
    pub uses_per_pseudo_label: usize,
    pub uses_per_tumor_free: usize,
    pub seed: u64,
    /// Rescale lesion intensities to the target's mean nonzero intensity.
    pub renormalize_intensity: bool,
}

impl PlusSetSpec {
    /// Default usage: every pseudo-label twice, every lesion-free volume once.
    pub fn new(unlabeled_count: usize, tumor_free_count: usize, seed: u64) -> Self {
        Self {
            unlabeled_count,
            tumor_free_count,
            uses_per_pseudo_label: 2,
            uses_per_tumor_free: 1,
            seed,
            renormalize_intensity: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.unlabeled_count == 0 || self.tumor_free_count == 0 {
            return Err(Error::param("counts", "need at least one image on each side"));
        }
        if self.uses_per_pseudo_label == 0 || self.uses_per_tumor_free == 0 {
            return Err(Error::param("uses", "usage counts must be >= 1"));
        }
        let pseudo_uses = self.uses_per_pseudo_label * self.unlabeled_count;
        let free_uses = self.uses_per_tumor_free * self.tumor_free_count;
        if pseudo_uses != free_uses {
            return Err(Error::PairingCover { pseudo_uses, free_uses });
        }
        Ok(())
    }

    pub fn pair_count(&self) -> usize {
        self.uses_per_pseudo_label * self.unlabeled_count
    }
}

/// One (pseudo-label, lesion-free volume) assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pairing {
    pub pseudo_label: usize,
    pub tumor_free: usize,
    /// `None` when the pasted sample was produced, otherwise why it was skipped.
    pub skipped: Option<String>,
}

/// Random perfect cover: each pseudo-label index appears exactly
/// `uses_per_pseudo_label` times and each lesion-free index exactly
/// `uses_per_tumor_free` times.
pub fn make_pairing(spec: &PlusSetSpec) -> Result<Vec<(usize, usize)>> {
    spec.validate()?;
    let mut rng = rng::stream(rng::derive_labeled(spec.seed, "pairing"));
    let mut pseudo: Vec<usize> =
        (0..spec.unlabeled_count).flat_map(|j| core::iter::repeat_n(j, spec.uses_per_pseudo_label)).collect();
    let mut free: Vec<usize> =
        (0..spec.tumor_free_count).flat_map(|i| core::iter::repeat_n(i, spec.uses_per_tumor_free)).collect();
    pseudo.shuffle(&mut rng);
    free.shuffle(&mut rng);
    Ok(pseudo.into_iter().zip(free).collect())
}

fn mean_nonzero(v: &Volume) -> Option<f64> {
    let (sum, n) = v.data().iter().filter(|&&x| x != 0.0).fold((0.0, 0usize), |(s, n), &x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Pastes `s_j` under `p_j` onto `x_i`.
pub fn paste_sample(s_j: &Volume, p_j: &BinaryMask, x_i: &Volume) -> Result<LabeledSample> {
    paste_with(s_j, p_j, x_i, false, "", "")
}

fn paste_with(
    s_j: &Volume,
    p_j: &BinaryMask,
    x_i: &Volume,
    renormalize: bool,
    lesion_id: &str,
    target_id: &str,
) -> Result<LabeledSample> {
    if s_j.dims() != p_j.dims() {
        return Err(Error::GridMismatch("paste_sample: lesion image and pseudo-label dims differ"));
    }
    let (s, p) = if s_j.dims() == x_i.dims() {
        (s_j.clone(), p_j.clone())
    } else {
        (resample_volume(s_j, x_i.dims())?, resample_mask(p_j, x_i.dims())?)
    };
    let count = p.count();
    if count == 0 {
        return Err(Error::EmptyPseudoLabel);
    }
    let gain = match (renormalize, mean_nonzero(&s), mean_nonzero(x_i)) {
        (true, Some(ms), Some(mx)) => mx / ms,
        _ => 1.0,
    };
    let data = s
        .data()
        .iter()
        .zip(x_i.data())
        .zip(p.data())
        .map(|((&sv, &xv), &inside)| {
            if inside {
                if gain == 1.0 {
                    sv
                } else {
                    sv * gain
                }
            } else {
                xv
            }
        })
        .collect();
    let image = Volume::new(*x_i.grid(), data)?;
    let mask = BinaryMask::new(*x_i.grid(), p.data().to_vec())?;
    let mut prov = Provenance::new(target_id, 0, TaskKind::Pasted, Branch::Paste);
    if !lesion_id.is_empty() {
        prov.lesion_source_id = Some(lesion_id.into());
    }
    Ok(LabeledSample { image, mask, provenance: prov })
}

/// An unlabeled lesion image with its predicted pseudo-label.
#[derive(Debug, Clone)]
pub struct PseudoLabeled {
    pub id: String,
    pub image: Volume,
    pub pseudo_label: BinaryMask,
}

#[derive(Debug, Clone)]
pub struct TumorFree {
    pub id: String,
    pub image: Volume,
}

#[derive(Debug, Clone)]
pub struct PlusSet {
    pub pasted: Vec<LabeledSample>,
    pub pairing: Vec<Pairing>,
    /// The unlabeled images with their pseudo-labels, reused as-is.
    pub originals: Vec<LabeledSample>,
}

impl PlusSet {
    /// Pasted samples followed by the original pseudo-labelled images.
    pub fn fine_tuning_set(&self) -> Vec<LabeledSample> {
        self.pasted.iter().chain(self.originals.iter()).cloned().collect()
    }

    pub fn skipped(&self) -> impl Iterator<Item = &Pairing> {
        self.pairing.iter().filter(|p| p.skipped.is_some())
    }
}

/// Builds the pasted fine-tuning set. Pairs whose pseudo-label has fewer
/// than [`MIN_PSEUDO_LABEL_VOXELS`] voxels (after resizing) are recorded as
/// skipped in the pairing list rather than failing the whole set.
pub fn build_plus_set(unlabeled: &[PseudoLabeled], tumor_free: &[TumorFree], spec: &PlusSetSpec) -> Result<PlusSet> {
    if unlabeled.is_empty() {
        return Err(Error::EmptyInput("no pseudo-labelled images"));
    }
    if tumor_free.is_empty() {
        return Err(Error::EmptyInput("no lesion-free images"));
    }
    if unlabeled.len() != spec.unlabeled_count || tumor_free.len() != spec.tumor_free_count {
        return Err(Error::param("counts", "input lengths differ from the plus-set spec"));
    }
    let pairs = make_pairing(spec)?;
    let mut pasted = Vec::with_capacity(pairs.len());
    let mut pairing = Vec::with_capacity(pairs.len());
    for (k, &(j, i)) in pairs.iter().enumerate() {
        let src = &unlabeled[j];
        let dst = &tumor_free[i];
        let result =
            paste_with(&src.image, &src.pseudo_label, &dst.image, spec.renormalize_intensity, &src.id, &dst.id)
                .and_then(|s| {
                    let n = s.mask.count();
                    if n < MIN_PSEUDO_LABEL_VOXELS {
                        Err(Error::PseudoLabelTooSmall { voxels: n, min: MIN_PSEUDO_LABEL_VOXELS })
                    } else {
                        Ok(s)
                    }
                });
        match result {
            Ok(mut s) => {
                s.provenance.seed = rng::derive_seed(spec.seed, k as u64);
                pasted.push(s);
                pairing.push(Pairing { pseudo_label: j, tumor_free: i, skipped: None });
            }
            Err(e @ (Error::EmptyPseudoLabel | Error::PseudoLabelTooSmall { .. })) => {
                pairing.push(Pairing { pseudo_label: j, tumor_free: i, skipped: Some(format!("{e}")) });
            }
            Err(e) => return Err(e),
        }
    }
    let originals = unlabeled
        .iter()
        .map(|u| {
            let mut prov = Provenance::new(u.id.clone(), 0, TaskKind::Pasted, Branch::Paste);
            prov.lesion_source_id = Some(u.id.clone());
            LabeledSample { image: u.image.clone(), mask: u.pseudo_label.clone(), provenance: prov }
        })
        .collect();
    Ok(PlusSet { pasted, pairing, originals })
}
