//! Run manifests (`manifest.json` in every output directory).
//!
//! A manifest lists every file a run wrote, relative to the output
//! directory, plus the effective configuration and invocation needed to
//! regenerate them. Runs of different commands (or of the two synthesis
//! tasks) accumulate in one manifest; re-running the same command replaces
//! its record and deletes files the new run no longer writes.

use std::path::{Path, PathBuf};

use lesionprompt_core::pasting::Pairing;
use lesionprompt_core::synthesis::{Provenance, TaskKind};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const MANIFEST_SCHEMA: u32 = 1;
pub const TOOL_NAME: &str = "lesionprompt";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// What was run, minus the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case", deny_unknown_fields)]
pub enum Invocation {
    Phantom {
        count: usize,
    },
    /// `input: None` means phantom sources.
    Synth {
        task: TaskKind,
        count: usize,
        input: Option<PathBuf>,
    },
    Paste {
        unlabeled: PathBuf,
        pseudo: PathBuf,
        tumor_free: PathBuf,
    },
    Train {
        prompt: PathBuf,
        validation: PathBuf,
    },
    Select {
        train_dir: PathBuf,
    },
    Predict {
        model: PathBuf,
        input: PathBuf,
    },
    Evaluate {
        pred: PathBuf,
        truth: PathBuf,
        baseline: Option<PathBuf>,
    },
    Finetune {
        model: PathBuf,
        data: PathBuf,
    },
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::Phantom { .. } => "phantom",
            Invocation::Synth { .. } => "synth",
            Invocation::Paste { .. } => "paste",
            Invocation::Train { .. } => "train",
            Invocation::Select { .. } => "select",
            Invocation::Predict { .. } => "predict",
            Invocation::Evaluate { .. } => "evaluate",
            Invocation::Finetune { .. } => "finetune",
        }
    }

    /// Runs with the same key replace each other in a manifest.
    fn key(&self) -> (&'static str, Option<TaskKind>) {
        match self {
            Invocation::Synth { task, .. } => ("synth", Some(*task)),
            other => (other.name(), None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub source_id: String,
    pub seed: u64,
    pub files: Vec<String>,
    pub provenance: Option<Provenance>,
    /// `None` on success, otherwise the generation error.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub invocation: Invocation,
    pub master_seed: u64,
    pub config: RunConfig,
    /// Source ids consumed by a synthesis run.
    pub sources: Vec<String>,
    pub samples: Vec<SampleRecord>,
    pub pairing: Option<Vec<Pairing>>,
    /// Every file written, relative to the output directory, sorted.
    pub files: Vec<String>,
}

impl RunRecord {
    pub fn new(invocation: Invocation, config: &RunConfig) -> Self {
        let mut config = config.clone();
        // Worker count never affects outputs, so it is not recorded.
        config.workers = None;
        Self {
            invocation,
            master_seed: config.seed,
            config,
            sources: Vec::new(),
            samples: Vec::new(),
            pairing: None,
            files: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` when set.
    pub created_at: u64,
    pub runs: Vec<RunRecord>,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA,
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            created_at: 0,
            runs: Vec::new(),
        }
    }
}

/// `SOURCE_DATE_EPOCH` if set and valid, else the current time.
pub fn timestamp() -> u64 {
    if let Some(v) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok()) {
        return v;
    }
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::Json { path: path.into(), source: e })?;
        if m.schema_version != MANIFEST_SCHEMA {
            return Err(Error::SchemaVersion { path: path.into(), expected: MANIFEST_SCHEMA, found: m.schema_version });
        }
        Ok(m)
    }

    /// The manifest in `dir`, or an empty one.
    pub fn load_or_default(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        if path.exists() {
            Self::load(&path)
        } else {
            Ok(Self::default())
        }
    }

    pub fn find(&self, command: &str) -> impl Iterator<Item = &RunRecord> {
        let command = command.to_string();
        self.runs.iter().filter(move |r| r.invocation.name() == command)
    }

    /// Inserts or replaces the record and removes stale files of the one it
    /// replaces.
    pub fn upsert(&mut self, dir: &Path, mut record: RunRecord) -> Result<()> {
        record.files.sort();
        record.files.dedup();
        let key = record.invocation.key();
        if let Some(pos) = self.runs.iter().position(|r| r.invocation.key() == key) {
            let old = self.runs.remove(pos);
            for f in old.files.iter().filter(|f| !record.files.contains(f)) {
                let p = dir.join(f);
                if p.exists() {
                    std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
                }
            }
            self.runs.insert(pos, record);
        } else {
            self.runs.push(record);
        }
        Ok(())
    }

    pub fn save(&mut self, dir: &Path) -> Result<()> {
        self.created_at = timestamp();
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Internal(e.to_string()))?;
        text.push('\n');
        crate::io::write_file(&dir.join(MANIFEST_NAME), text.as_bytes())
    }

    pub fn all_files(&self) -> Vec<String> {
        let mut v: Vec<String> = self.runs.iter().flat_map(|r| r.files.iter().cloned()).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Checks that listed files exist and that every file under `dir`
    /// except the manifest itself is listed.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        let listed = self.all_files();
        for f in &listed {
            if !dir.join(f).is_file() {
                return Err(Error::Data(format!("manifest lists missing file {f}")));
            }
        }
        for f in list_tree(dir)? {
            if f != MANIFEST_NAME && listed.binary_search(&f).is_err() {
                return Err(Error::Data(format!("file {f} is not listed in the manifest")));
            }
        }
        Ok(())
    }
}

/// Every regular file under `dir`, as sorted `/`-separated relative paths.
pub fn list_tree(dir: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path.strip_prefix(root).map_err(|e| Error::Internal(e.to_string()))?;
                let parts: Vec<_> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
                out.push(parts.join("/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}
