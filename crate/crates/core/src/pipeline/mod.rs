//! Resumable stage runner over a JSONL manifest.
//!
//! Every stage appends one record per sample; a `_done` marker closes the
//! stage. Per-sample work runs on a bounded worker pool but records are
//! appended in sample order, and every random draw is keyed by
//! (seed, stage, sample), so manifests are byte-identical across runs,
//! worker counts and interruptions.

mod config;
mod manifest;
mod records;
mod report;
mod stages;
mod validate;

use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use config::{Ablations, AnalysisConfig, BackendConfig, CategoryCounts, GenerationConfig, PipelineConfig, Source};
pub use manifest::{Entry, Header, Manifest, StageMarker};
pub use records::*;
pub use report::{emit_report, kind_table, run_compare, KindCounts, ReportBundle};
pub use stages::{run_stage, run_through, run_with_backend, RunOptions, StageSummary};
pub use validate::{validate_manifest, ValidationReport, Violation};

use crate::analysis::AnalysisError;
use crate::backend::BackendError;
use crate::perturbation::PerturbError;
use crate::prompt_forge::ForgeError;
use crate::simpo_trainer::TrainError;
use crate::vqa_scoring::ScoringError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Prompts,
    Perturb,
    Densify,
    Images,
    Score,
    Select,
    Train,
    Analyze,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Prompts,
        Stage::Perturb,
        Stage::Densify,
        Stage::Images,
        Stage::Score,
        Stage::Select,
        Stage::Train,
        Stage::Analyze,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Prompts => "prompts",
            Stage::Perturb => "perturb",
            Stage::Densify => "densify",
            Stage::Images => "images",
            Stage::Score => "score",
            Stage::Select => "select",
            Stage::Train => "train",
            Stage::Analyze => "analyze",
        }
    }

    pub fn previous(self) -> Option<Stage> {
        let i = Stage::ALL.iter().position(|s| *s == self).expect("listed");
        i.checked_sub(1).map(|j| Stage::ALL[j])
    }

    /// Stages that write one record per sample.
    pub fn is_per_sample(self) -> bool {
        !matches!(self, Stage::Train | Stage::Analyze)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("manifest was written with config {found}, current config is {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error("stage {stage} is not complete: {reason}")]
    StageIncomplete { stage: Stage, reason: String },
    #[error("stage {0} was interrupted; rerun with --resume to continue it")]
    Interrupted(Stage),
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("halted after {0} records")]
    Halted(usize),
    #[error(transparent)]
    Backend(BackendError),
    #[error(transparent)]
    Forge(ForgeError),
    #[error(transparent)]
    Perturb(PerturbError),
    #[error(transparent)]
    Scoring(ScoringError),
    #[error(transparent)]
    Analysis(AnalysisError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl PipelineError {
    /// Whether the failure came from the model backend.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            PipelineError::Backend(_)
                | PipelineError::Forge(ForgeError::BackendUnavailable(_))
                | PipelineError::Perturb(PerturbError::Backend(_))
                | PipelineError::Scoring(ScoringError::Backend(_))
        ) || matches!(self, PipelineError::Analysis(AnalysisError::Scoring(ScoringError::Backend(_))))
    }
}

impl From<BackendError> for PipelineError {
    fn from(e: BackendError) -> Self {
        PipelineError::Backend(e)
    }
}

impl From<ForgeError> for PipelineError {
    fn from(e: ForgeError) -> Self {
        PipelineError::Forge(e)
    }
}

impl From<PerturbError> for PipelineError {
    fn from(e: PerturbError) -> Self {
        PipelineError::Perturb(e)
    }
}

impl From<ScoringError> for PipelineError {
    fn from(e: ScoringError) -> Self {
        PipelineError::Scoring(e)
    }
}

impl From<AnalysisError> for PipelineError {
    fn from(e: AnalysisError) -> Self {
        PipelineError::Analysis(e)
    }
}
