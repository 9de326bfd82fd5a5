//! Object-centric self-improving preference optimization for text-to-image
//! generation.
//!
//! The crate builds (winning, losing) image pairs whose difference is
//! confined to individual objects and attribute bindings, scores them with
//! decompositional yes/no VQA, keeps the pair with the strongest local
//! contrast relative to its global divergence, and trains a policy on the
//! selected pairs with the SimPO objective.
//!
//! The stages map onto modules:
//!
//! - [`prompt_forge`]: keyword pools and category-stratified base prompts.
//! - [`perturbation`]: swap / replace / drop negatives and pairwise densification.
//! - [`backend`]: the model contract, a scene-graph simulator and a remote HTTP client.
//! - [`vqa_scoring`]: question decomposition and local/global scores.
//! - [`pair_selection`]: score gaps and the preference-strength selection rule.
//! - [`simpo_trainer`]: a toy autoregressive policy trained with SimPO.
//! - [`analysis`]: Best-of-N comparison, indistinguishable-case taxonomy, gap density.
//! - [`pipeline`]: resumable JSONL manifest, stage runner and reports.

pub mod analysis;
pub mod backend;
pub mod fewshot;
pub mod pair_selection;
pub mod perturbation;
pub mod pipeline;
pub mod prompt_forge;
pub mod rng;
pub mod simpo_trainer;
pub mod vqa_scoring;

pub use backend::{Backend, BackendError};
pub use prompt_forge::{Category, KeywordPools, StructuredPrompt};
