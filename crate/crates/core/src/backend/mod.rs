//! The model capability contract and its two implementations.
//!
//! A [`Backend`] completes chat messages, turns a dense prompt into an image
//! and answers yes/no questions about an image with a pair of answer
//! probabilities. [`Simulator`] grounds all three in scene graphs so every
//! answer is checkable; [`RemoteBackend`] forwards them over HTTP.

mod remote;
mod scene;
mod simulator;

use serde::{Deserialize, Serialize};

pub use remote::{RemoteBackend, RemoteConfig};
pub use scene::{SceneGraph, SceneObject, SceneRelation, SceneVocab, VocabError};
pub use simulator::Simulator;

use crate::prompt_forge::StructuredPrompt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("remote rejected the request with status {status}: {body}")]
    RemoteRejected { status: u16, body: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("question cannot be grounded: {0}")]
    UnanswerableQuestion(String),
    #[error("malformed response: {0}")]
    Protocol(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub text: String,
}

impl ChatMessage {
    pub fn new(role: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            text: text.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    pub guidance_weight: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            guidance_weight: 5.0,
            temperature: 1.0,
            seed: 0,
        }
    }
}

impl DecodeParams {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.guidance_weight >= 0.0 && self.guidance_weight.is_finite()) {
            return Err(BackendError::InvalidRequest(format!(
                "guidance_weight must be finite and >= 0, got {}",
                self.guidance_weight
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be finite and > 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// How the simulator departs from the intended scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionParams {
    /// Probability that an intended object is missing.
    pub p_omit: f64,
    /// Probability that an eligible pair of bindings is exchanged.
    pub p_misbind: f64,
    /// Probability that an attribute value (or a count) is replaced.
    pub p_wrong_attr: f64,
    /// Answer noise of the simulated judge, in `[0, 0.5)`.
    pub eta: f64,
    /// Share of each corruption decision that is tied to the prompt rather
    /// than to the decoding seed. At 0 every image draws independently; at 1
    /// every seed of a prompt fails the same way. The marginal rate of each
    /// corruption stays at its configured probability either way.
    pub seed_coherence: f64,
}

impl Default for CorruptionParams {
    fn default() -> Self {
        Self {
            p_omit: 0.2,
            p_misbind: 0.2,
            p_wrong_attr: 0.0,
            eta: 0.0,
            seed_coherence: 0.7,
        }
    }
}

impl CorruptionParams {
    /// No corruption and a noiseless judge.
    pub fn none() -> Self {
        Self {
            p_omit: 0.0,
            p_misbind: 0.0,
            p_wrong_attr: 0.0,
            eta: 0.0,
            seed_coherence: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        for (name, p) in [
            ("p_omit", self.p_omit),
            ("p_misbind", self.p_misbind),
            ("p_wrong_attr", self.p_wrong_attr),
            ("seed_coherence", self.seed_coherence),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(BackendError::InvalidRequest(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        if !(0.0..0.5).contains(&self.eta) {
            return Err(BackendError::InvalidRequest(format!(
                "eta must lie in [0, 0.5), got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ImagePayload {
    Scene { graph: SceneGraph },
    Bytes {
        image_b64: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token_ids: Option<Vec<u32>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageArtifact {
    pub id: String,
    pub source_prompt_id: String,
    pub decode: DecodeParams,
    /// Corruption the image was generated under; the simulated judge takes
    /// its answer noise from here.
    pub corruption: CorruptionParams,
    pub payload: ImagePayload,
}

impl ImageArtifact {
    pub fn scene(&self) -> Option<&SceneGraph> {
        match &self.payload {
            ImagePayload::Scene { graph } => Some(graph),
            ImagePayload::Bytes { .. } => None,
        }
    }

    /// Token ids standing in for the image, when the backend provides them.
    pub fn token_sequence(&self) -> Option<&[u32]> {
        match &self.payload {
            ImagePayload::Scene { graph } => Some(&graph.token_sequence),
            ImagePayload::Bytes { token_ids, .. } => token_ids.as_deref(),
        }
    }
}

/// One image to generate. `text` is what a text-to-image model sees;
/// `prompt` carries the structure the text was built from.
#[derive(Clone, Copy, Debug)]
pub struct ImageRequest<'a> {
    pub id: &'a str,
    pub source_prompt_id: &'a str,
    pub prompt: &'a StructuredPrompt,
    pub text: &'a str,
    pub decode: DecodeParams,
    pub corruption: CorruptionParams,
}

pub trait Backend: Send + Sync {
    fn text_complete(&self, messages: &[ChatMessage], seed: u64) -> Result<String, BackendError>;

    fn generate_image(&self, request: &ImageRequest<'_>) -> Result<ImageArtifact, BackendError>;

    /// Probabilities of answering "yes" and "no", as reported (no
    /// renormalization).
    fn vqa_probe(&self, image: &ImageArtifact, question: &str) -> Result<(f64, f64), BackendError>;
}
