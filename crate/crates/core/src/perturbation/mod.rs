//! Negative prompts by swap / replace / drop, and pairwise densification.
//!
//! Each operator edits the structured fields of a base prompt and
//! re-renders, so the difference between a base prompt and its negative is
//! always an explicit set of bindings.

mod densify;

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::{IndexedRandom, SliceRandom};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use densify::{densify_pair, rule_context, DensePromptPair, DensifyMode, Provenance};

use crate::backend::BackendError;
use crate::prompt_forge::{
    Category, Entity, KeywordPools, PromptError, Relation, RelationKind, StructuredPrompt,
};
use crate::rng;

/// The three perturbation operators, in tie-breaking order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKind {
    Swap,
    Replace,
    Drop,
}

impl PerturbKind {
    pub const ALL: [PerturbKind; 3] = [PerturbKind::Swap, PerturbKind::Replace, PerturbKind::Drop];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbKind::Swap => "swap",
            PerturbKind::Replace => "replace",
            PerturbKind::Drop => "drop",
        }
    }
}

impl fmt::Display for PerturbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerturbError {
    #[error("{kind} does not apply to this {category} prompt: {reason}")]
    NotPerturbable {
        kind: PerturbKind,
        category: Category,
        reason: String,
    },
    #[error("cannot parse densification transcript: {0}")]
    TranscriptParse(String),
    #[error("dense prompt lost a binding: {0}")]
    BindingViolation(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

fn not_perturbable(kind: PerturbKind, base: &StructuredPrompt, reason: &str) -> PerturbError {
    PerturbError::NotPerturbable {
        kind,
        category: base.category,
        reason: reason.to_string(),
    }
}

/// A pair of bindings that a swap exchanges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwapSite {
    /// Attribute `i` of entity `a` and attribute `j` of entity `b`.
    Attributes { a: usize, i: usize, b: usize, j: usize },
    /// Subject and object of a relation.
    Endpoints { relation: usize },
    /// Counts of two counted entities.
    Counts { a: usize, b: usize },
}

/// Every swap that changes `p`'s bindings, in a fixed order.
pub fn swap_sites(p: &StructuredPrompt) -> Vec<SwapSite> {
    let mut sites = Vec::new();
    match p.category {
        Category::NonSpatial => {}
        Category::Attribute | Category::Complex => {
            for a in 0..p.entities.len() {
                for b in a + 1..p.entities.len() {
                    let (ea, eb) = (&p.entities[a], &p.entities[b]);
                    for (i, va) in ea.attributes.iter().enumerate() {
                        for (j, vb) in eb.attributes.iter().enumerate() {
                            let distinct = va.value != vb.value
                                && !ea.attributes.iter().any(|x| x.value == vb.value)
                                && !eb.attributes.iter().any(|x| x.value == va.value);
                            if distinct {
                                sites.push(SwapSite::Attributes { a, i, b, j });
                            }
                        }
                    }
                }
            }
        }
        Category::Layout => {
            for relation in 0..p.relations.len() {
                sites.push(SwapSite::Endpoints { relation });
            }
            for a in 0..p.entities.len() {
                for b in a + 1..p.entities.len() {
                    if let (Some(ca), Some(cb)) = (p.entities[a].count, p.entities[b].count) {
                        if ca != cb {
                            sites.push(SwapSite::Counts { a, b });
                        }
                    }
                }
            }
        }
    }
    sites
}

/// Applies one swap; applying the same site to the result restores `p`.
pub fn apply_swap(p: &StructuredPrompt, site: SwapSite) -> Result<StructuredPrompt, PerturbError> {
    let mut entities = p.entities.clone();
    let mut relations = p.relations.clone();
    match site {
        SwapSite::Attributes { a, i, b, j } => {
            let va = entities[a].attributes[i].clone();
            entities[a].attributes[i] = std::mem::replace(&mut entities[b].attributes[j], va);
        }
        SwapSite::Endpoints { relation } => {
            let r = &mut relations[relation];
            std::mem::swap(&mut r.subject, &mut r.object);
        }
        SwapSite::Counts { a, b } => {
            let ca = entities[a].count;
            entities[a].count = std::mem::replace(&mut entities[b].count, ca);
        }
    }
    Ok(StructuredPrompt::new(p.category, entities, relations)?)
}

/// An element that a drop removes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropSite {
    Entity(usize),
    Attribute { entity: usize, index: usize },
    Count(usize),
    Relation(usize),
}

/// Every element `p` can lose while keeping at least one entity.
pub fn drop_sites(p: &StructuredPrompt) -> Vec<DropSite> {
    let mut sites = Vec::new();
    let many = p.entities.len() >= 2;
    match p.category {
        Category::Attribute | Category::Complex | Category::NonSpatial => {
            for (e, entity) in p.entities.iter().enumerate() {
                if many {
                    sites.push(DropSite::Entity(e));
                }
                for index in 0..entity.attributes.len() {
                    sites.push(DropSite::Attribute { entity: e, index });
                }
            }
        }
        Category::Layout => {
            for r in 0..p.relations.len() {
                sites.push(DropSite::Relation(r));
            }
            for (e, entity) in p.entities.iter().enumerate() {
                if entity.count.is_some() {
                    sites.push(DropSite::Count(e));
                }
                if many {
                    sites.push(DropSite::Entity(e));
                }
            }
        }
    }
    sites
}

pub fn apply_drop(p: &StructuredPrompt, site: DropSite) -> Result<StructuredPrompt, PerturbError> {
    let mut entities = p.entities.clone();
    let mut relations = p.relations.clone();
    match site {
        DropSite::Entity(e) => {
            entities.remove(e);
            relations.retain(|r| r.subject != e && r.object != e);
            for r in &mut relations {
                if r.subject > e {
                    r.subject -= 1;
                }
                if r.object > e {
                    r.object -= 1;
                }
            }
        }
        DropSite::Attribute { entity, index } => {
            entities[entity].attributes.remove(index);
        }
        DropSite::Count(e) => entities[e].count = None,
        DropSite::Relation(r) => {
            relations.remove(r);
        }
    }
    Ok(StructuredPrompt::new(p.category, entities, relations)?)
}

/// Produces the negative prompt of `kind` for `base`.
///
/// Swap exchanges two bindings (attribute values between entities; relation
/// endpoints or counts in Layout prompts; never in NonSpatial prompts).
/// Replace substitutes pool values absent from `base`: one attribute per
/// attributed entity, every spatial phrase or count in Layout prompts, one
/// action in NonSpatial prompts. Drop removes one element chosen uniformly
/// among the eligible ones. Prompts without an eligible site are reported
/// as `NotPerturbable`.
pub fn perturb(
    base: &StructuredPrompt,
    kind: PerturbKind,
    pools: &KeywordPools,
    seed: u64,
) -> Result<StructuredPrompt, PerturbError> {
    let mut rng = rng::substream(seed, &["perturb", kind.as_str()]);
    match kind {
        PerturbKind::Swap => {
            if base.category == Category::NonSpatial {
                return Err(not_perturbable(kind, base, "non-spatial prompts have no swap form"));
            }
            let site = *swap_sites(base)
                .choose(&mut rng)
                .ok_or_else(|| not_perturbable(kind, base, "no pair of distinct bindings to exchange"))?;
            apply_swap(base, site)
        }
        PerturbKind::Drop => {
            let site = *drop_sites(base)
                .choose(&mut rng)
                .ok_or_else(|| not_perturbable(kind, base, "nothing can be dropped without emptying the prompt"))?;
            apply_drop(base, site)
        }
        PerturbKind::Replace => replace(base, pools, &mut rng),
    }
}

fn fresh<'a>(
    candidates: impl Iterator<Item = &'a String>,
    used: &BTreeSet<String>,
    rng: &mut ChaCha8Rng,
) -> Option<String> {
    let mut options: Vec<&String> = candidates.filter(|c| !used.contains(*c)).collect();
    options.shuffle(rng);
    options.first().map(|s| s.to_string())
}

fn replace(
    base: &StructuredPrompt,
    pools: &KeywordPools,
    rng: &mut ChaCha8Rng,
) -> Result<StructuredPrompt, PerturbError> {
    let kind = PerturbKind::Replace;
    let mut used: BTreeSet<String> = base.values().into_iter().collect();
    let mut entities = base.entities.clone();
    let mut relations = base.relations.clone();
    let exhausted = || not_perturbable(kind, base, "the pools hold no unused value");

    let replace_object = |entities: &mut Vec<Entity>, used: &mut BTreeSet<String>, rng: &mut ChaCha8Rng| {
        let e = rng_index(rng, entities.len());
        let object = fresh(pools.objects.iter(), used, rng).ok_or_else(exhausted)?;
        used.insert(object.clone());
        entities[e].object = object;
        Ok::<(), PerturbError>(())
    };

    match base.category {
        Category::Attribute | Category::Complex => {
            let attributed: Vec<usize> = (0..entities.len())
                .filter(|e| !entities[*e].attributes.is_empty())
                .collect();
            if attributed.is_empty() {
                replace_object(&mut entities, &mut used, rng)?;
            }
            for e in attributed {
                let i = rng_index(rng, entities[e].attributes.len());
                let attr_kind = entities[e].attributes[i].kind;
                let value = fresh(pools.attributes(attr_kind).iter(), &used, rng).ok_or_else(exhausted)?;
                used.insert(value.clone());
                entities[e].attributes[i].value = value;
            }
        }
        Category::Layout => {
            if !relations.is_empty() {
                let phrases: Vec<String> = pools.spatial.iter().map(|s| s.phrase.clone()).collect();
                for r in &mut relations {
                    let phrase = fresh(phrases.iter(), &used, rng).ok_or_else(exhausted)?;
                    used.insert(phrase.clone());
                    r.kind = pools
                        .spatial
                        .iter()
                        .find(|s| s.phrase == phrase)
                        .map_or(RelationKind::Spatial2d, |s| s.kind);
                    r.phrase = phrase;
                }
            } else if entities.iter().any(|e| e.count.is_some()) {
                let counts: Vec<String> = (1..=9u32).map(|c| c.to_string()).collect();
                for e in entities.iter_mut().filter(|e| e.count.is_some()) {
                    let c = fresh(counts.iter(), &used, rng).ok_or_else(exhausted)?;
                    used.insert(c.clone());
                    e.count = Some(c.parse().expect("numeric"));
                }
            } else {
                replace_object(&mut entities, &mut used, rng)?;
            }
        }
        Category::NonSpatial => {
            let actions: Vec<usize> = (0..relations.len())
                .filter(|r| relations[*r].kind == RelationKind::Action)
                .collect();
            let r = *actions
                .choose(rng)
                .ok_or_else(|| not_perturbable(kind, base, "no action to replace"))?;
            let phrase = fresh(pools.actions.iter(), &used, rng).ok_or_else(exhausted)?;
            relations[r] = Relation::new(relations[r].subject, RelationKind::Action, phrase, relations[r].object);
        }
    }
    Ok(StructuredPrompt::new(base.category, entities, relations)?)
}

fn rng_index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    use rand::Rng;
    rng.random_range(0..n)
}
