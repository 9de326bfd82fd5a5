//! Payloads of the manifest records, one type per stage.

use serde::{Deserialize, Serialize};

use crate::backend::ImageArtifact;
use crate::pair_selection::{GapRecord, SelectionResult};
use crate::perturbation::{DensePromptPair, PerturbKind};
use crate::prompt_forge::{Category, KeywordPools, StructuredPrompt};
use crate::vqa_scoring::{ImageScore, QuestionSet, ScoreCard};

pub const POOLS_ID: &str = "_pools";
pub const TRAIN_ID: &str = "_train";
pub const ANALYSIS_ID: &str = "_analysis";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolsRecord {
    pub pools: KeywordPools,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub category: Category,
    pub prompt: StructuredPrompt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeCandidate {
    pub kind: PerturbKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative: Option<StructuredPrompt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

/// Empty in the baseline modes, which use no negative prompts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbRecord {
    pub candidates: Vec<NegativeCandidate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedCandidate {
    pub kind: PerturbKind,
    pub reason: String,
}

/// The base prompt as rendered for the baseline modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselinePrompt {
    pub dense: StructuredPrompt,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensifyRecord {
    pub pairs: Vec<DensePromptPair>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedCandidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselinePrompt>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairImages {
    pub kind: PerturbKind,
    pub winning: ImageArtifact,
    pub losing: ImageArtifact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImagesRecord {
    pub pairs: Vec<PairImages>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub baseline: Vec<ImageArtifact>,
}

impl ImagesRecord {
    pub fn find(&self, id: &str) -> Option<&ImageArtifact> {
        self.pairs
            .iter()
            .flat_map(|p| [&p.winning, &p.losing])
            .chain(&self.baseline)
            .find(|a| a.id == id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindCard {
    pub kind: PerturbKind,
    pub card: ScoreCard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub questions: QuestionSet,
    pub cards: Vec<KindCard>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub baseline: Vec<ImageScore>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectMode {
    Ospo,
    Random,
    /// Best and worst of the baseline images by local score.
    Baseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChosenPair {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PerturbKind>,
    pub winning_id: String,
    pub losing_id: String,
    pub delta_local: f64,
    pub delta_global: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectRecord {
    pub mode: SelectMode,
    pub gaps: Vec<GapRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen: Option<ChosenPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discarded: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub records: usize,
    /// Selected pairs that could not become training records, with reasons.
    pub skipped: Vec<(String, String)>,
    pub steps: usize,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub initial_margin: Option<f64>,
    pub final_margin: Option<f64>,
    pub checkpoint: Option<String>,
    pub trace: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeRecord {
    pub pairs: usize,
    pub indistinguishable: usize,
    pub mean_local_gap_below_half: Option<f64>,
    pub gap_density: String,
    pub cases: String,
}
