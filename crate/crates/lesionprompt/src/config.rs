//! Run configuration.
//!
//! Values are resolved in three layers: built-in defaults (shaped by the
//! synthesis preset), then a TOML file, then command-line flags. The file
//! must carry `schema_version = 1`; unknown keys anywhere are an error.
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//! preset = "desk"
//!
//! [synthesis]
//! blur_sigma_mm = 1.5
//!
//! [sweep]
//! budgets = [20, 10, 5]
//! ```

use std::path::Path;

use lesionprompt_core::geometry::SizeDistribution;
use lesionprompt_core::refseg::TrainConfig;
use lesionprompt_core::selection::DEFAULT_BUDGETS;
use lesionprompt_core::synthesis::SynthesisConfig;
use lesionprompt_core::volume::PhantomSpec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Format;

pub const SCHEMA_VERSION: u32 = 1;

/// Lesion sizes for the desk preset, sized for 64^3 phantoms at 1 mm.
pub const DESK_SIZE_RANGE_MM3: (f64, f64) = (2000.0, 12000.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Glioma-sized lesions with the optional dark core.
    #[default]
    Tumor,
    /// Bimodal small/large lesions, no dark core.
    Stroke,
    /// Tumor settings with lesion sizes that fit small phantoms.
    Desk,
}

impl Preset {
    pub fn synthesis(self) -> SynthesisConfig {
        match self {
            Preset::Tumor => SynthesisConfig::tumor(),
            Preset::Stroke => SynthesisConfig::stroke(),
            Preset::Desk => SynthesisConfig {
                size_dist: SizeDistribution::uniform(DESK_SIZE_RANGE_MM3.0, DESK_SIZE_RANGE_MM3.1)
                    .expect("valid desk size range"),
                ..SynthesisConfig::tumor()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PasteConfig {
    pub uses_per_pseudo_label: usize,
    pub uses_per_tumor_free: usize,
    pub renormalize_intensity: bool,
}

impl Default for PasteConfig {
    fn default() -> Self {
        Self { uses_per_pseudo_label: 2, uses_per_tumor_free: 1, renormalize_intensity: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Candidate epoch budgets, trained independently.
    pub budgets: Vec<u32>,
    /// Moving-average window applied to curves before selection.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothing_window: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { budgets: DEFAULT_BUDGETS.to_vec(), smoothing_window: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    pub threshold: f64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

/// Effective configuration of one run. `train.seed` and `phantom.seed` are
/// replaced by streams derived from the top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub format: Format,
    pub preset: Preset,
    pub synthesis: SynthesisConfig,
    pub phantom: PhantomSpec,
    pub train: TrainConfig,
    pub paste: PasteConfig,
    pub sweep: SweepConfig,
    pub predict: PredictConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::with_preset(Preset::default())
    }
}

impl RunConfig {
    pub fn with_preset(preset: Preset) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            workers: None,
            format: Format::Nifti1,
            preset,
            synthesis: preset.synthesis(),
            phantom: PhantomSpec::default(),
            train: TrainConfig::default(),
            paste: PasteConfig::default(),
            sweep: SweepConfig::default(),
            predict: PredictConfig::default(),
        }
    }

    /// Defaults overlaid with the TOML text. `preset` (flag value) wins over
    /// the file's `preset` key when choosing the base synthesis settings.
    pub fn from_toml(text: &str, path: &Path, preset: Option<Preset>) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let found = match table.get("schema_version") {
            Some(toml::Value::Integer(v)) => u32::try_from(*v).unwrap_or(u32::MAX),
            Some(_) => return Err(Error::Config(format!("{}: schema_version must be an integer", path.display()))),
            None => return Err(Error::Config(format!("{}: missing schema_version", path.display()))),
        };
        if found != SCHEMA_VERSION {
            return Err(Error::SchemaVersion { path: path.into(), expected: SCHEMA_VERSION, found });
        }
        let file_preset = match table.get("preset") {
            Some(v) => Some(
                v.clone()
                    .try_into::<Preset>()
                    .map_err(|e| Error::Config(format!("{}: preset: {e}", path.display())))?,
            ),
            None => None,
        };
        let preset = preset.or(file_preset).unwrap_or_default();
        let base = toml::Table::try_from(Self::with_preset(preset)).map_err(|e| Error::Internal(e.to_string()))?;
        let mut merged = base;
        merge(&mut merged, table);
        merged.insert("preset".into(), toml::Value::try_from(preset).map_err(|e| Error::Internal(e.to_string()))?);
        let cfg: Self = merged.try_into().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, preset: Option<Preset>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path, preset)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, e: lesionprompt_core::Error| Error::Config(format!("{what}: {e}"));
        self.synthesis.validate().map_err(|e| bad("synthesis", e))?;
        self.phantom.validate().map_err(|e| bad("phantom", e))?;
        self.train.validate().map_err(|e| bad("train", e))?;
        if self.paste.uses_per_pseudo_label == 0 || self.paste.uses_per_tumor_free == 0 {
            return Err(Error::Config("paste: usage counts must be >= 1".into()));
        }
        if self.sweep.budgets.is_empty() || self.sweep.budgets.contains(&0) {
            return Err(Error::Config("sweep.budgets must be a non-empty list of positive integers".into()));
        }
        if self.sweep.smoothing_window == Some(0) {
            return Err(Error::Config("sweep.smoothing_window must be >= 1".into()));
        }
        if !(self.predict.threshold > 0.0 && self.predict.threshold < 1.0) {
            return Err(Error::Config("predict.threshold must lie in (0, 1)".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        Ok(())
    }
}

/// Recursive overlay: tables merge key by key, everything else replaces.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
