use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::backend::{Backend, CorruptionParams, DecodeParams, RemoteBackend, RemoteConfig, Simulator};
use crate::pair_selection::DEFAULT_EPSILON;
use crate::prompt_forge::{Category, KeywordPools};
use crate::simpo_trainer::SimpoConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CategoryCounts {
    pub attribute: usize,
    pub layout: usize,
    pub non_spatial: usize,
    pub complex: usize,
}

impl CategoryCounts {
    pub fn of(&self, category: Category) -> usize {
        match category {
            Category::Attribute => self.attribute,
            Category::Layout => self.layout,
            Category::NonSpatial => self.non_spatial,
            Category::Complex => self.complex,
        }
    }
}

impl Default for CategoryCounts {
    fn default() -> Self {
        Self {
            attribute: 100,
            layout: 100,
            non_spatial: 100,
            complex: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Simulator {
        #[serde(default = "default_vocab")]
        vocab_size: usize,
    },
    Remote(RemoteConfig),
}

fn default_vocab() -> usize {
    512
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Simulator {
            vocab_size: default_vocab(),
        }
    }
}

/// Where a piece of text comes from: deterministic rules or the backend's
/// text completion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[default]
    Rules,
    Backend,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub pools: Source,
    pub prompts: Source,
    pub densify: Source,
    pub questions: Source,
    /// Use rule densification when a backend rewrite loses a binding.
    pub densify_fallback: bool,
    pub max_attempts: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            pools: Source::Rules,
            prompts: Source::Rules,
            densify: Source::Rules,
            questions: Source::Rules,
            densify_fallback: true,
            max_attempts: 8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablations {
    /// Losing images come from the base prompt with another seed.
    pub no_negative_prompts: bool,
    /// Images are generated from the raw base and negative prompts.
    pub no_densification: bool,
    /// The pair is drawn uniformly from the scored candidates.
    pub random_selection: bool,
    /// N images of the base prompt; best and worst by local score.
    pub best_of_n_mode: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Images per prompt for Best-of-N runs.
    pub n: usize,
    /// Attribute prompts used by `compare`.
    pub compare_prompts: usize,
    pub temperatures: Vec<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            n: 10,
            compare_prompts: 200,
            temperatures: vec![0.5, 1.0, 2.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub categories: CategoryCounts,
    pub backend: BackendConfig,
    pub generation: GenerationConfig,
    pub decode: DecodeParams,
    pub corruption: CorruptionParams,
    pub epsilon: f64,
    pub simpo: SimpoConfig,
    pub ablations: Ablations,
    pub analysis: AnalysisConfig,
    /// Manifest, reports and checkpoints go here. Not part of the config
    /// hash, so identical runs in different directories match.
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            categories: CategoryCounts::default(),
            backend: BackendConfig::default(),
            generation: GenerationConfig::default(),
            decode: DecodeParams::default(),
            corruption: CorruptionParams::default(),
            epsilon: DEFAULT_EPSILON,
            simpo: SimpoConfig::toy(),
            ablations: Ablations::default(),
            analysis: AnalysisConfig::default(),
            output_dir: PathBuf::from("ospo-run"),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: Self = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.ablations.best_of_n_mode && self.ablations.no_negative_prompts {
            return bad("best_of_n_mode already omits negative prompts; do not combine it with no_negative_prompts".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.ablations.best_of_n_mode && self.analysis.n < 2 {
            return bad("best_of_n_mode needs analysis.n >= 2".into());
        }
        if self.generation.max_attempts == 0 {
            return bad("generation.max_attempts must be positive".into());
        }
        self.decode.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.corruption.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.simpo.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if let BackendConfig::Simulator { vocab_size } = self.backend {
            if vocab_size > self.simpo.vocab {
                return bad(format!(
                    "simulator vocabulary {vocab_size} exceeds the policy vocabulary {}",
                    self.simpo.vocab
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, excluding `output_dir`.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.output_dir.join("manifest.jsonl")
    }

    /// Images per sample in the baseline modes (0 in the OSPO mode).
    pub fn baseline_images(&self) -> usize {
        if self.ablations.best_of_n_mode {
            self.analysis.n
        } else if self.ablations.no_negative_prompts {
            2
        } else {
            0
        }
    }

    pub fn build_backend(&self) -> Result<Box<dyn Backend>, PipelineError> {
        match &self.backend {
            BackendConfig::Simulator { vocab_size } => Ok(Box::new(
                Simulator::new(KeywordPools::builtin(), *vocab_size).map_err(PipelineError::Backend)?,
            )),
            BackendConfig::Remote(remote) => Ok(Box::new(RemoteBackend::new(remote.clone()).map_err(PipelineError::Backend)?)),
        }
    }
}
