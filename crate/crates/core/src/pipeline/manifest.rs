//! Append-only JSONL manifest.
//!
//! Line 1 is a header carrying the config hash. Each further line is one
//! `{"stage", "sample_id", "data"}` entry written with a single `write_all`,
//! so an interrupted run leaves at most one torn trailing line, which
//! `--resume` truncates.

use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{PipelineError, Stage};

pub const FORMAT_VERSION: u32 = 1;
pub const DONE_ID: &str = "_done";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    #[serde(rename = "type")]
    pub kind: String,
    pub format: u32,
    pub config_hash: String,
    pub code_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub stage: Stage,
    pub sample_id: String,
    pub data: Value,
}

/// Closes a stage; totals cover every record of the stage, so a resumed
/// run writes the same marker as an uninterrupted one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageMarker {
    pub records: usize,
    pub discarded: usize,
}

pub struct Manifest {
    path: PathBuf,
    file: File,
    header: Header,
    entries: Vec<Entry>,
    index: HashMap<(Stage, String), usize>,
    done: BTreeSet<Stage>,
}

fn manifest_err(line: usize, reason: impl Into<String>) -> PipelineError {
    PipelineError::Manifest {
        line,
        reason: reason.into(),
    }
}

impl Manifest {
    /// Opens or creates the manifest at `path`. A torn trailing line is
    /// repaired only when `resume` is set.
    pub fn open(path: &Path, config_hash: &str, resume: bool) -> Result<Self, PipelineError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let header = Header {
            kind: "header".into(),
            format: FORMAT_VERSION,
            config_hash: config_hash.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        };
        if !path.exists() || fs::metadata(path)?.len() == 0 {
            let mut file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
            file.write_all(format!("{}\n", serde_json::to_string(&header).expect("header serializes")).as_bytes())?;
            file.flush()?;
            return Ok(Self {
                path: path.to_path_buf(),
                file,
                header,
                entries: Vec::new(),
                index: HashMap::new(),
                done: BTreeSet::new(),
            });
        }

        let mut bytes = fs::read(path)?;
        if bytes.last() != Some(&b'\n') {
            if !resume {
                return Err(manifest_err(
                    bytes.iter().filter(|b| **b == b'\n').count() + 1,
                    "trailing line is incomplete; rerun with --resume to repair it",
                ));
            }
            let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |p| p + 1);
            bytes.truncate(keep);
            let file = OpenOptions::new().write(true).open(path)?;
            file.set_len(keep as u64)?;
            file.sync_all()?;
            if keep == 0 {
                return Self::open(path, config_hash, resume);
            }
        }
        let text = String::from_utf8(bytes).map_err(|_| manifest_err(0, "manifest is not UTF-8"))?;
        let mut lines = text.lines();
        let found: Header = serde_json::from_str(lines.next().unwrap_or_default())
            .map_err(|e| manifest_err(1, format!("bad header: {e}")))?;
        if found.config_hash != config_hash {
            return Err(PipelineError::ConfigMismatch {
                expected: config_hash.to_string(),
                found: found.config_hash,
            });
        }
        let mut manifest = Self {
            path: path.to_path_buf(),
            file: OpenOptions::new().append(true).open(path)?,
            header: found,
            entries: Vec::new(),
            index: HashMap::new(),
            done: BTreeSet::new(),
        };
        for (i, line) in lines.enumerate() {
            let entry: Entry = serde_json::from_str(line).map_err(|e| manifest_err(i + 2, e.to_string()))?;
            manifest.remember(entry);
        }
        Ok(manifest)
    }

    fn remember(&mut self, entry: Entry) {
        if entry.sample_id == DONE_ID {
            self.done.insert(entry.stage);
        }
        self.index
            .insert((entry.stage, entry.sample_id.clone()), self.entries.len());
        self.entries.push(entry);
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn append<T: Serialize>(&mut self, stage: Stage, sample_id: &str, data: &T) -> Result<(), PipelineError> {
        let entry = Entry {
            stage,
            sample_id: sample_id.to_string(),
            data: serde_json::to_value(data).map_err(|e| manifest_err(0, e.to_string()))?,
        };
        let mut line = serde_json::to_string(&entry).map_err(|e| manifest_err(0, e.to_string()))?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.remember(entry);
        Ok(())
    }

    pub fn mark_done(&mut self, stage: Stage, marker: StageMarker) -> Result<(), PipelineError> {
        self.append(stage, DONE_ID, &marker)?;
        self.file.sync_data()?;
        Ok(())
    }

    pub fn is_done(&self, stage: Stage) -> bool {
        self.done.contains(&stage)
    }

    pub fn has(&self, stage: Stage, sample_id: &str) -> bool {
        self.index.contains_key(&(stage, sample_id.to_string()))
    }

    pub fn raw(&self, stage: Stage, sample_id: &str) -> Option<&Value> {
        self.index
            .get(&(stage, sample_id.to_string()))
            .map(|i| &self.entries[*i].data)
    }

    pub fn get<T: DeserializeOwned>(&self, stage: Stage, sample_id: &str) -> Result<T, PipelineError> {
        let value = self.raw(stage, sample_id).ok_or_else(|| PipelineError::StageIncomplete {
            stage,
            reason: format!("no record for {sample_id}"),
        })?;
        T::deserialize(value).map_err(|e| manifest_err(0, format!("{stage} record of {sample_id}: {e}")))
    }

    /// Sample ids in prompt order.
    pub fn sample_ids(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| e.stage == Stage::Prompts && !e.sample_id.starts_with('_'))
            .map(|e| e.sample_id.clone())
            .collect()
    }

    /// Records of `stage` in manifest order, excluding markers.
    pub fn records(&self, stage: Stage) -> impl Iterator<Item = &Entry> {
        self.entries
            .iter()
            .filter(move |e| e.stage == stage && !e.sample_id.starts_with('_'))
    }

    /// Whether any record of `stage` exists.
    pub fn touched(&self, stage: Stage) -> bool {
        self.entries.iter().any(|e| e.stage == stage)
    }
}
