//! Keyword pools and structured base prompts.
//!
//! A [`StructuredPrompt`] is the unit that flows through prompt generation,
//! perturbation, densification and question decomposition. Its `surface` text
//! is always produced by [`render`] from the structured fields, and [`parse`]
//! inverts the rendering given the vocabulary in a [`Lexicon`].

mod generate;
mod lexicon;
mod pools;
mod render;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use generate::{generate_base_prompts, sample_structured, PromptMode};
pub use lexicon::{number_word, pluralize, Lexicon};
pub(crate) use lexicon::{indefinite_article, parse_number, LexEntry};
pub use pools::{
    build_keyword_pools, builtin_agents, KeywordPools, PoolKind, PoolSource, PoolTargets,
    SpatialPhrase,
};
pub use render::{parse, render};

use crate::backend::BackendError;

#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(#[from] BackendError),
    #[error("pool `{pool}` exhausted: {got} of {target} entries after {attempts} attempts")]
    PoolExhausted {
        pool: PoolKind,
        got: usize,
        target: usize,
        attempts: usize,
    },
    #[error("cannot draw {requested} unique {category} prompts from the pools (got {got})")]
    PoolTooSmall {
        category: Category,
        requested: usize,
        got: usize,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid keyword pools: {0}")]
    InvalidPools(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("prompt has no entities")]
    NoEntities,
    #[error("entity index {0} out of range")]
    BadIndex(usize),
    #[error("object `{0}` appears more than once")]
    DuplicateObject(String),
    #[error("relation links entity {0} to itself")]
    SelfRelation(usize),
    #[error("count must be at least 1")]
    ZeroCount,
    #[error("empty word in prompt")]
    EmptyWord,
    #[error("cannot parse `{text}`: {reason}")]
    Parse { text: String, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Attribute,
    Layout,
    NonSpatial,
    Complex,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Attribute,
        Category::Layout,
        Category::NonSpatial,
        Category::Complex,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Attribute => "attribute",
            Category::Layout => "layout",
            Category::NonSpatial => "non_spatial",
            Category::Complex => "complex",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrKind {
    Color,
    Shape,
    Texture,
}

impl AttrKind {
    pub const ALL: [AttrKind; 3] = [AttrKind::Color, AttrKind::Shape, AttrKind::Texture];
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Attribute {
    pub kind: AttrKind,
    pub value: String,
}

impl Attribute {
    pub fn new(kind: AttrKind, value: impl Into<String>) -> Self {
        Self {
            kind,
            value: value.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub object: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attributes: Vec<Attribute>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
}

impl Entity {
    pub fn new(object: impl Into<String>) -> Self {
        Self {
            object: object.into(),
            attributes: Vec::new(),
            count: None,
        }
    }

    pub fn with_attr(mut self, kind: AttrKind, value: impl Into<String>) -> Self {
        self.attributes.push(Attribute::new(kind, value));
        self
    }

    pub fn with_count(mut self, count: u32) -> Self {
        self.count = Some(count);
        self
    }

    pub(crate) fn is_plural(&self) -> bool {
        self.count.is_some_and(|c| c >= 2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Spatial2d,
    Spatial3d,
    Action,
}

impl RelationKind {
    pub fn is_spatial(self) -> bool {
        !matches!(self, RelationKind::Action)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub subject: usize,
    pub kind: RelationKind,
    pub phrase: String,
    pub object: usize,
}

impl Relation {
    pub fn new(subject: usize, kind: RelationKind, phrase: impl Into<String>, object: usize) -> Self {
        Self {
            subject,
            kind,
            phrase: phrase.into(),
            object,
        }
    }
}

/// One atomic fact carried by a prompt. Objects are unique within a prompt,
/// so bindings are keyed by object name rather than entity index.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Binding {
    Entity { object: String },
    Attribute { object: String, kind: AttrKind, value: String },
    Count { object: String, count: u32 },
    Relation { subject: String, phrase: String, object: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredPrompt {
    pub category: Category,
    pub entities: Vec<Entity>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relations: Vec<Relation>,
    /// Scene descriptors shared by both sides of a densified pair.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context: Vec<String>,
    pub surface: String,
}

impl StructuredPrompt {
    /// Validates the structure, reorders entities into first-mention order
    /// and renders the surface text.
    pub fn new(
        category: Category,
        entities: Vec<Entity>,
        relations: Vec<Relation>,
    ) -> Result<Self, PromptError> {
        let mut prompt = Self {
            category,
            entities,
            relations,
            context: Vec::new(),
            surface: String::new(),
        };
        prompt.check_structure()?;
        prompt.canonicalize();
        prompt.surface = render(&prompt);
        Ok(prompt)
    }

    /// The same structure with scene descriptors appended to the surface.
    pub fn with_context(&self, context: Vec<String>) -> Self {
        let mut out = self.clone();
        out.context = context;
        out.surface = render(&out);
        out
    }

    /// The prompt without scene descriptors.
    pub fn without_context(&self) -> Self {
        self.with_context(Vec::new())
    }

    /// The surface rendering without context descriptors.
    pub fn core_surface(&self) -> String {
        render(&self.without_context())
    }

    pub fn bindings(&self) -> BTreeSet<Binding> {
        let mut out = BTreeSet::new();
        for entity in &self.entities {
            out.insert(Binding::Entity {
                object: entity.object.clone(),
            });
            for attr in &entity.attributes {
                out.insert(Binding::Attribute {
                    object: entity.object.clone(),
                    kind: attr.kind,
                    value: attr.value.clone(),
                });
            }
            if let Some(count) = entity.count {
                out.insert(Binding::Count {
                    object: entity.object.clone(),
                    count,
                });
            }
        }
        for rel in &self.relations {
            out.insert(Binding::Relation {
                subject: self.entities[rel.subject].object.clone(),
                phrase: rel.phrase.clone(),
                object: self.entities[rel.object].object.clone(),
            });
        }
        out
    }

    /// Every filler value in the prompt (objects, attribute values, counts and
    /// relation phrases), sorted, with multiplicity.
    pub fn values(&self) -> Vec<String> {
        let mut out = Vec::new();
        for entity in &self.entities {
            out.push(entity.object.clone());
            out.extend(entity.attributes.iter().map(|a| a.value.clone()));
            if let Some(count) = entity.count {
                out.push(count.to_string());
            }
        }
        out.extend(self.relations.iter().map(|r| r.phrase.clone()));
        out.sort();
        out
    }

    pub fn entity_index(&self, object: &str) -> Option<usize> {
        self.entities.iter().position(|e| e.object == object)
    }

    /// Checks structure and that the surface matches the rendering rules.
    pub fn validate(&self) -> Result<(), PromptError> {
        self.check_structure()?;
        if render(self) != self.surface {
            return Err(PromptError::Parse {
                text: self.surface.clone(),
                reason: "surface does not match the structured fields".into(),
            });
        }
        Ok(())
    }

    fn check_structure(&self) -> Result<(), PromptError> {
        if self.entities.is_empty() {
            return Err(PromptError::NoEntities);
        }
        let mut seen = BTreeSet::new();
        for entity in &self.entities {
            if entity.object.trim().is_empty()
                || entity.attributes.iter().any(|a| a.value.trim().is_empty())
            {
                return Err(PromptError::EmptyWord);
            }
            if !seen.insert(entity.object.as_str()) {
                return Err(PromptError::DuplicateObject(entity.object.clone()));
            }
            if entity.count == Some(0) {
                return Err(PromptError::ZeroCount);
            }
        }
        for rel in &self.relations {
            for idx in [rel.subject, rel.object] {
                if idx >= self.entities.len() {
                    return Err(PromptError::BadIndex(idx));
                }
            }
            if rel.subject == rel.object {
                return Err(PromptError::SelfRelation(rel.subject));
            }
            if rel.phrase.trim().is_empty() {
                return Err(PromptError::EmptyWord);
            }
        }
        Ok(())
    }

    /// Reorders entities by first mention in the rendering: relation
    /// endpoints in relation order, then the unrelated entities.
    fn canonicalize(&mut self) {
        let n = self.entities.len();
        let mut order: Vec<usize> = Vec::with_capacity(n);
        for rel in &self.relations {
            for idx in [rel.subject, rel.object] {
                if !order.contains(&idx) {
                    order.push(idx);
                }
            }
        }
        for idx in 0..n {
            if !order.contains(&idx) {
                order.push(idx);
            }
        }
        if order.iter().copied().eq(0..n) {
            return;
        }
        let mut new_index = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let entities = order.iter().map(|&old| self.entities[old].clone()).collect();
        self.entities = entities;
        for rel in &mut self.relations {
            rel.subject = new_index[rel.subject];
            rel.object = new_index[rel.object];
        }
    }
}

impl fmt::Display for StructuredPrompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.surface)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_follows_first_mention() {
        let p = StructuredPrompt::new(
            Category::Layout,
            vec![Entity::new("ramen bowl"), Entity::new("coffee cup")],
            vec![Relation::new(1, RelationKind::Spatial2d, "to the right of", 0)],
        )
        .unwrap();
        assert_eq!(p.entities[0].object, "coffee cup");
        assert_eq!(p.relations[0].subject, 0);
        assert_eq!(p.surface, "a coffee cup to the right of a ramen bowl");
    }

    #[test]
    fn structure_errors() {
        assert_eq!(
            StructuredPrompt::new(Category::Attribute, vec![], vec![]).unwrap_err(),
            PromptError::NoEntities
        );
        let dup = vec![Entity::new("car"), Entity::new("car")];
        assert!(matches!(
            StructuredPrompt::new(Category::Attribute, dup, vec![]),
            Err(PromptError::DuplicateObject(_))
        ));
        let bad = vec![Relation::new(0, RelationKind::Spatial2d, "above", 3)];
        assert_eq!(
            StructuredPrompt::new(Category::Layout, vec![Entity::new("car")], bad).unwrap_err(),
            PromptError::BadIndex(3)
        );
    }

    #[test]
    fn bindings_and_values() {
        let p = StructuredPrompt::new(
            Category::Attribute,
            vec![
                Entity::new("tire").with_attr(AttrKind::Texture, "rubber"),
                Entity::new("desk").with_attr(AttrKind::Texture, "wooden"),
            ],
            vec![],
        )
        .unwrap();
        assert_eq!(p.bindings().len(), 4);
        assert_eq!(p.values(), vec!["desk", "rubber", "tire", "wooden"]);
    }
}
