//! Joint densification of a (base, negative) pair.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use super::{PerturbError, PerturbKind};
use crate::backend::Backend;
use crate::fewshot::{densify_messages, parse_dense_transcript, DenseFamily};
use crate::prompt_forge::{number_word, pluralize, Binding, StructuredPrompt};
use crate::rng;

const SETTINGS: &[&str] = &[
    "in a quiet garden",
    "on a sunlit balcony",
    "in a cozy living room",
    "in a bright kitchen",
    "on a city sidewalk",
    "in a quiet workshop",
    "by a calm lake",
    "in an empty classroom",
    "on a rooftop terrace",
    "in a busy market hall",
];

const LIGHTING: &[&str] = &[
    "in early morning light",
    "in warm afternoon sunlight",
    "in dappled shade",
    "in gentle evening light",
    "with overcast skies",
    "in cool twilight",
    "in bright studio lighting",
    "in hazy golden hour light",
];

const BACKDROPS: &[&str] = &[
    "with a weathered fence in the back",
    "with rolling hills in the distance",
    "framed by a plain pale wall",
    "with large windows in the background",
    "with potted greenery nearby",
    "with a winding path beyond",
    "with a clear sky overhead",
    "with distant mountains on the horizon",
];

/// Scene descriptors shared by both sides of a rule-densified pair: one
/// setting, one lighting condition and one backdrop.
pub fn rule_context(seed: u64) -> Vec<String> {
    let mut rng = rng::substream(seed, &["rule_context"]);
    [SETTINGS, LIGHTING, BACKDROPS]
        .iter()
        .map(|list| list.choose(&mut rng).expect("non-empty list").to_string())
        .collect()
}

/// How the dense texts were produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    /// Surfaces used as they are.
    Raw,
    /// Rule-based context appended to both sides.
    Rule,
    Backend { transcript: String },
    /// The backend transcript lost a binding; rule densification was used.
    Fallback { transcript: String, reason: String },
}

#[derive(Clone, Copy)]
pub enum DensifyMode<'a> {
    Rule,
    Backend {
        backend: &'a dyn Backend,
        /// Use rule densification when the backend output drops a binding.
        fallback: bool,
    },
}

/// A base prompt and its negative, densified with a shared context.
///
/// The structured sides carry the shared descriptors as their context; the
/// `*_text` fields hold the exact strings sent to the image generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensePromptPair {
    pub base_dense: StructuredPrompt,
    pub negative_dense: StructuredPrompt,
    pub kind: PerturbKind,
    pub shared_context: Vec<String>,
    pub base_text: String,
    pub negative_text: String,
    pub provenance: Provenance,
}

impl DensePromptPair {
    /// The pair without any densification.
    pub fn raw(base: &StructuredPrompt, negative: &StructuredPrompt, kind: PerturbKind) -> Self {
        let (b, n) = (base.without_context(), negative.without_context());
        Self {
            base_text: b.surface.clone(),
            negative_text: n.surface.clone(),
            base_dense: b,
            negative_dense: n,
            kind,
            shared_context: Vec::new(),
            provenance: Provenance::Raw,
        }
    }

    fn rule(base: &StructuredPrompt, negative: &StructuredPrompt, kind: PerturbKind, seed: u64) -> Self {
        let context = rule_context(rng::derive_seed(seed, &["densify"]));
        let (b, n) = (base.with_context(context.clone()), negative.with_context(context.clone()));
        Self {
            base_text: b.surface.clone(),
            negative_text: n.surface.clone(),
            base_dense: b,
            negative_dense: n,
            kind,
            shared_context: context,
            provenance: Provenance::Rule,
        }
    }
}

pub fn densify_pair(
    base: &StructuredPrompt,
    negative: &StructuredPrompt,
    kind: PerturbKind,
    mode: DensifyMode<'_>,
    seed: u64,
) -> Result<DensePromptPair, PerturbError> {
    let (backend, fallback) = match mode {
        DensifyMode::Rule => return Ok(DensePromptPair::rule(base, negative, kind, seed)),
        DensifyMode::Backend { backend, fallback } => (backend, fallback),
    };
    let messages = densify_messages(DenseFamily::of(base), &base.core_surface(), &negative.core_surface());
    let transcript = backend.text_complete(&messages, rng::derive_seed(seed, &["densify"]))?;
    let (base_text, negative_text) =
        parse_dense_transcript(&transcript).map_err(PerturbError::TranscriptParse)?;

    let check = check_bindings(base, &base_text)
        .map_err(|m| format!("base: {m}"))
        .and_then(|_| check_bindings(negative, &negative_text).map_err(|m| format!("negative: {m}")));
    if let Err(reason) = check {
        if !fallback {
            return Err(PerturbError::BindingViolation(reason));
        }
        let mut pair = DensePromptPair::rule(base, negative, kind, seed);
        pair.provenance = Provenance::Fallback { transcript, reason };
        return Ok(pair);
    }

    let context = shared_words(base, negative, &base_text, &negative_text);
    Ok(DensePromptPair {
        base_dense: base.with_context(context.clone()),
        negative_dense: negative.with_context(context.clone()),
        kind,
        shared_context: context,
        base_text,
        negative_text,
        provenance: Provenance::Backend { transcript },
    })
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '-' && c != '\'')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn contains_phrase(haystack: &[String], phrase: &str) -> bool {
    let needle = words(phrase);
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle.as_slice())
}

/// Checks that every binding of `prompt` is still spelled out in `text`.
fn check_bindings(prompt: &StructuredPrompt, text: &str) -> Result<(), String> {
    let hay = words(text);
    let has_object = |o: &str| contains_phrase(&hay, o) || contains_phrase(&hay, &pluralize(o));
    for binding in prompt.bindings() {
        let ok = match &binding {
            Binding::Entity { object } => has_object(object),
            Binding::Attribute { value, .. } => contains_phrase(&hay, value),
            Binding::Count { count: 1, .. } => ["one", "single", "a", "an", "1"]
                .iter()
                .any(|w| contains_phrase(&hay, w)),
            Binding::Count { count, .. } => {
                contains_phrase(&hay, &number_word(*count)) || contains_phrase(&hay, &count.to_string())
            }
            Binding::Relation { phrase, .. } => contains_phrase(&hay, phrase),
        };
        if !ok {
            return Err(format!("{binding:?} is missing from `{text}`"));
        }
    }
    Ok(())
}

const STOPWORDS: &[&str] = &[
    "the", "and", "with", "its", "their", "from", "into", "onto", "that", "this", "while", "which",
    "near", "under", "over", "are", "is", "sits", "stands", "rests",
];

/// Content words common to both dense texts that belong to neither prompt.
fn shared_words(
    base: &StructuredPrompt,
    negative: &StructuredPrompt,
    base_text: &str,
    negative_text: &str,
) -> Vec<String> {
    let mut own: BTreeSet<String> = BTreeSet::new();
    for p in [base, negative] {
        for w in words(&p.core_surface()) {
            own.insert(w);
        }
        for e in &p.entities {
            own.extend(words(&pluralize(&e.object)));
        }
    }
    let other: BTreeSet<String> = words(negative_text).into_iter().collect();
    let mut seen = BTreeSet::new();
    words(base_text)
        .into_iter()
        .filter(|w| w.len() > 2 && w.chars().all(|c| c.is_alphabetic() || c == '-'))
        .filter(|w| other.contains(w) && !own.contains(w) && !STOPWORDS.contains(&w.as_str()))
        .filter(|w| seen.insert(w.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, ChatMessage, ImageArtifact, ImageRequest};
    use crate::prompt_forge::{AttrKind, Category, Entity, KeywordPools, Lexicon};

    struct Canned(String);

    impl Backend for Canned {
        fn text_complete(&self, _: &[ChatMessage], _: u64) -> Result<String, BackendError> {
            Ok(self.0.clone())
        }
        fn generate_image(&self, _: &ImageRequest<'_>) -> Result<ImageArtifact, BackendError> {
            Err(BackendError::Unavailable("text only".into()))
        }
        fn vqa_probe(&self, _: &ImageArtifact, _: &str) -> Result<(f64, f64), BackendError> {
            Err(BackendError::Unavailable("text only".into()))
        }
    }

    fn pair() -> (StructuredPrompt, StructuredPrompt) {
        let mk = |c: &str| {
            StructuredPrompt::new(
                Category::Attribute,
                vec![Entity::new("watermelon").with_attr(AttrKind::Color, c)],
                vec![],
            )
            .unwrap()
        };
        (mk("green"), mk("yellow"))
    }

    #[test]
    fn context_words_are_not_pool_terms() {
        let pools = KeywordPools::builtin();
        let lexicon = Lexicon::new(&pools);
        let mut bad = Vec::new();
        for list in [SETTINGS, LIGHTING, BACKDROPS] {
            for phrase in list.iter() {
                for w in phrase.split(' ') {
                    if !(lexicon.lookup(w).is_empty() || w.len() <= 2) {
                        bad.push(w.to_string());
                    }
                }
            }
        }
        assert!(bad.is_empty(), "pool terms in context lists: {bad:?}");
    }

    #[test]
    fn rule_mode_shares_context() {
        let (b, n) = pair();
        let d = densify_pair(&b, &n, PerturbKind::Replace, DensifyMode::Rule, 3).unwrap();
        assert_eq!(d.shared_context.len(), 3);
        assert_eq!(d.base_dense.context, d.negative_dense.context);
        assert!(d.base_text.starts_with("a green watermelon "));
        assert!(d.negative_text.ends_with(&d.shared_context.join(", ")));
    }

    #[test]
    fn backend_mode_keeps_bindings_and_extracts_context() {
        let (b, n) = pair();
        let canned = Canned(
            "Step 1. x\nStep 2. Prompt 1 Dense: A green watermelon rests in a wicker basket on the grass.\n\
             Step 3. y\nStep 4. Prompt 2 Dense: A yellow watermelon sits in a wicker basket on the grass."
                .into(),
        );
        let mode = DensifyMode::Backend { backend: &canned, fallback: false };
        let d = densify_pair(&b, &n, PerturbKind::Replace, mode, 0).unwrap();
        assert_eq!(d.shared_context, vec!["wicker", "basket", "grass"]);
        assert!(matches!(d.provenance, Provenance::Backend { .. }));
    }

    #[test]
    fn lost_binding_falls_back_or_fails() {
        let (b, n) = pair();
        let canned = Canned(
            "Step 2. Prompt 1 Dense: A watermelon in a basket.\nStep 4. Prompt 2 Dense: A yellow watermelon in a basket."
                .into(),
        );
        let strict = DensifyMode::Backend { backend: &canned, fallback: false };
        assert!(matches!(
            densify_pair(&b, &n, PerturbKind::Replace, strict, 0),
            Err(PerturbError::BindingViolation(_))
        ));
        let lenient = DensifyMode::Backend { backend: &canned, fallback: true };
        let d = densify_pair(&b, &n, PerturbKind::Replace, lenient, 0).unwrap();
        assert!(matches!(d.provenance, Provenance::Fallback { .. }));

        let broken = Canned("no steps here".into());
        let mode = DensifyMode::Backend { backend: &broken, fallback: true };
        assert!(matches!(
            densify_pair(&b, &n, PerturbKind::Replace, mode, 0),
            Err(PerturbError::TranscriptParse(_))
        ));
    }
}
