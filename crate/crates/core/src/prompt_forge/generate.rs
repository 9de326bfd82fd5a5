use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    builtin_agents, AttrKind, Category, Entity, ForgeError, KeywordPools, Lexicon, Relation,
    RelationKind, StructuredPrompt,
};
use crate::backend::Backend;
use crate::{fewshot, rng};

/// How NonSpatial and Complex prompts are produced. Attribute and Layout
/// prompts always come from the templates.
#[derive(Clone, Copy)]
pub enum PromptMode<'a> {
    /// Sample the structure first, then render it.
    Structured,
    /// Ask a backend with the few-shot generation messages and parse the reply.
    Backend {
        backend: &'a dyn Backend,
        max_attempts_per_prompt: usize,
    },
}

/// Generates `count` unique prompts of `category`.
///
/// Attribute prompts are split evenly between the one-entity and two-entity
/// templates (one-entity first); one-entity prompts cycle through color,
/// shape and texture. Layout prompts split 2:1:1 between the spatial,
/// single-count and dual-count templates, with spatial phrases alternating
/// between 2D and 3D. Single-count prompts walk quantities 1..=9 for each
/// object in a seeded object order.
pub fn generate_base_prompts(
    category: Category,
    count: usize,
    pools: &KeywordPools,
    seed: u64,
    mode: PromptMode<'_>,
) -> Result<Vec<StructuredPrompt>, ForgeError> {
    if count == 0 {
        return Err(ForgeError::InvalidRequest("count must be at least 1".into()));
    }
    pools.validate()?;
    let mut rng = rng::substream(seed, &["prompts", category.as_str()]);
    let mut out = Unique::new(category, count);
    match category {
        Category::Attribute => {
            let singles = count.div_ceil(2);
            out.fill(singles, |i| one_attribute(pools, AttrKind::ALL[i % 3], &mut rng))?;
            out.fill(count - singles, |_| two_attributes(pools, &mut rng))?;
        }
        Category::Layout => {
            let spatial = count.div_ceil(2);
            let single = (count - spatial).div_ceil(2);
            let dual = count - spatial - single;
            out.fill(spatial, |i| {
                let kind = if i % 2 == 0 {
                    RelationKind::Spatial2d
                } else {
                    RelationKind::Spatial3d
                };
                spatial_prompt(pools, kind, &mut rng)
            })?;
            let mut order: Vec<&String> = pools.objects.iter().collect();
            order.shuffle(&mut rng);
            let enumerated: Vec<(String, u32)> = order
                .iter()
                .flat_map(|o| (1..=9).map(move |q| (o.to_string(), q)))
                .collect();
            if single > enumerated.len() {
                return Err(ForgeError::PoolTooSmall {
                    category,
                    requested: count,
                    got: out.len() + enumerated.len(),
                });
            }
            for (object, q) in &enumerated[..single] {
                let p = StructuredPrompt::new(
                    Category::Layout,
                    vec![Entity::new(object.clone()).with_count(*q)],
                    vec![],
                )?;
                out.push(p);
            }
            out.fill(dual, |_| dual_count(pools, &mut rng))?;
        }
        Category::NonSpatial | Category::Complex => match mode {
            PromptMode::Structured => {
                out.fill(count, |_| match category {
                    Category::NonSpatial => non_spatial(pools, &mut rng),
                    _ => complex(pools, &mut rng),
                })?;
            }
            PromptMode::Backend {
                backend,
                max_attempts_per_prompt,
            } => {
                let lex = Lexicon::new(pools);
                let messages = fewshot::prompt_generation_messages(category);
                let budget = count * max_attempts_per_prompt.max(1);
                let mut attempt = 0usize;
                while out.len() < count {
                    if attempt == budget {
                        return Err(ForgeError::PoolTooSmall {
                            category,
                            requested: count,
                            got: out.len(),
                        });
                    }
                    let call_seed =
                        rng::derive_seed(seed, &["prompts", category.as_str(), &attempt.to_string()]);
                    attempt += 1;
                    let reply = backend.text_complete(&messages, call_seed)?;
                    if let Ok(p) = super::parse(reply.trim(), category, &lex) {
                        out.push(p);
                    }
                }
            }
        },
    }
    Ok(out.finish())
}

/// One structure-first prompt of `category`, drawn from `rng` with no
/// uniqueness bookkeeping.
pub fn sample_structured(
    category: Category,
    pools: &KeywordPools,
    rng: &mut ChaCha8Rng,
) -> StructuredPrompt {
    match category {
        Category::Attribute => {
            let kind = *AttrKind::ALL.choose(rng).expect("non-empty");
            one_attribute(pools, kind, rng)
        }
        Category::Layout => {
            let kind = if rng.random_bool(0.5) {
                RelationKind::Spatial2d
            } else {
                RelationKind::Spatial3d
            };
            spatial_prompt(pools, kind, rng)
        }
        Category::NonSpatial => non_spatial(pools, rng),
        Category::Complex => complex(pools, rng),
    }
}

struct Unique {
    category: Category,
    requested: usize,
    seen: HashSet<String>,
    prompts: Vec<StructuredPrompt>,
}

impl Unique {
    fn new(category: Category, requested: usize) -> Self {
        Self {
            category,
            requested,
            seen: HashSet::new(),
            prompts: Vec::with_capacity(requested),
        }
    }

    fn len(&self) -> usize {
        self.prompts.len()
    }

    fn push(&mut self, p: StructuredPrompt) -> bool {
        if self.seen.insert(p.surface.clone()) {
            self.prompts.push(p);
            true
        } else {
            false
        }
    }

    /// Adds `n` new unique prompts from `draw(i)`, giving up after a fixed
    /// number of consecutive collisions.
    fn fill(
        &mut self,
        n: usize,
        mut draw: impl FnMut(usize) -> StructuredPrompt,
    ) -> Result<(), ForgeError> {
        const MAX_COLLISIONS: usize = 10_000;
        for i in 0..n {
            let mut collisions = 0;
            while !self.push(draw(i)) {
                collisions += 1;
                if collisions == MAX_COLLISIONS {
                    return Err(ForgeError::PoolTooSmall {
                        category: self.category,
                        requested: self.requested,
                        got: self.prompts.len(),
                    });
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> Vec<StructuredPrompt> {
        self.prompts
    }
}

fn pick<'a>(items: &'a [String], rng: &mut ChaCha8Rng) -> &'a str {
    items.choose(rng).expect("pools are validated non-empty")
}

fn two_objects(pools: &KeywordPools, rng: &mut ChaCha8Rng) -> (String, String) {
    let chosen: Vec<&String> = pools.objects.choose_multiple(rng, 2).collect();
    match chosen.as_slice() {
        [a, b] => (a.to_string(), b.to_string()),
        // A single-object pool cannot form two-entity prompts; the caller's
        // collision budget turns the repeated duplicate into PoolTooSmall.
        _ => (chosen[0].to_string(), chosen[0].to_string()),
    }
}

fn build(category: Category, entities: Vec<Entity>, relations: Vec<Relation>) -> StructuredPrompt {
    StructuredPrompt::new(category, entities.clone(), relations.clone()).unwrap_or_else(|_| {
        // Degenerate draws (same object twice) collapse to the first entity
        // alone, which the uniqueness filter then rejects or accepts.
        StructuredPrompt::new(category, vec![entities[0].clone()], vec![])
            .expect("single entity is valid")
    })
}

fn one_attribute(pools: &KeywordPools, kind: AttrKind, rng: &mut ChaCha8Rng) -> StructuredPrompt {
    let value = pick(pools.attributes(kind), rng).to_string();
    let object = pick(&pools.objects, rng).to_string();
    build(
        Category::Attribute,
        vec![Entity::new(object).with_attr(kind, value)],
        vec![],
    )
}

fn two_attributes(pools: &KeywordPools, rng: &mut ChaCha8Rng) -> StructuredPrompt {
    let kinds: Vec<AttrKind> = AttrKind::ALL.choose_multiple(rng, 2).copied().collect();
    let (a, b) = two_objects(pools, rng);
    let va = pick(pools.attributes(kinds[0]), rng).to_string();
    let vb = pick(pools.attributes(kinds[1]), rng).to_string();
    build(
        Category::Attribute,
        vec![
            Entity::new(a).with_attr(kinds[0], va),
            Entity::new(b).with_attr(kinds[1], vb),
        ],
        vec![],
    )
}

fn spatial_phrase(pools: &KeywordPools, kind: RelationKind, rng: &mut ChaCha8Rng) -> (RelationKind, String) {
    let of_kind = pools.spatial_of(kind);
    match of_kind.choose(rng) {
        Some(p) => (kind, p.to_string()),
        None => {
            let any = pools.spatial.choose(rng).expect("pools are validated non-empty");
            (any.kind, any.phrase.clone())
        }
    }
}

fn spatial_prompt(pools: &KeywordPools, kind: RelationKind, rng: &mut ChaCha8Rng) -> StructuredPrompt {
    let (a, b) = two_objects(pools, rng);
    let (kind, phrase) = spatial_phrase(pools, kind, rng);
    build(
        Category::Layout,
        vec![Entity::new(a), Entity::new(b)],
        vec![Relation::new(0, kind, phrase, 1)],
    )
}

fn dual_count(pools: &KeywordPools, rng: &mut ChaCha8Rng) -> StructuredPrompt {
    let (a, b) = two_objects(pools, rng);
    let qa = rng.random_range(1..=5);
    let qb = rng.random_range(1..=5);
    build(
        Category::Layout,
        vec![Entity::new(a).with_count(qa), Entity::new(b).with_count(qb)],
        vec![],
    )
}

fn non_spatial(pools: &KeywordPools, rng: &mut ChaCha8Rng) -> StructuredPrompt {
    let agents = builtin_agents(pools);
    let subject = pick(&agents, rng).to_string();
    let targets: Vec<&String> = pools.objects.iter().filter(|o| **o != subject).collect();
    let mut entities = vec![Entity::new(subject)];
    let mut relations = Vec::new();
    let n_objects = if rng.random_bool(0.3) { 2 } else { 1 };
    for chosen in targets.choose_multiple(rng, n_objects) {
        entities.push(Entity::new(chosen.as_str()));
        let action = pick(&pools.actions, rng).to_string();
        relations.push(Relation::new(0, RelationKind::Action, action, entities.len() - 1));
    }
    build(Category::NonSpatial, entities, relations)
}

fn complex(pools: &KeywordPools, rng: &mut ChaCha8Rng) -> StructuredPrompt {
    let agents = builtin_agents(pools);
    let n = if rng.random_bool(0.5) { 2 } else { 3 };
    let objects: Vec<&String> = pools.objects.choose_multiple(rng, n).collect();
    let entities: Vec<Entity> = objects
        .iter()
        .map(|o| {
            let n_attrs = if rng.random_bool(0.5) { 1 } else { 2 };
            let mut e = Entity::new(o.as_str());
            for kind in AttrKind::ALL.choose_multiple(rng, n_attrs) {
                let value = pick(pools.attributes(*kind), rng).to_string();
                e = e.with_attr(*kind, value);
            }
            e
        })
        .collect();
    let mut relations = Vec::new();
    for (s, entity) in entities.iter().enumerate().take(entities.len().saturating_sub(1)) {
        let is_agent = agents.contains(&entity.object);
        if is_agent && rng.random_bool(0.3) {
            let action = pick(&pools.actions, rng).to_string();
            relations.push(Relation::new(s, RelationKind::Action, action, s + 1));
        } else {
            let kind = if rng.random_bool(0.5) {
                RelationKind::Spatial2d
            } else {
                RelationKind::Spatial3d
            };
            let (kind, phrase) = spatial_phrase(pools, kind, rng);
            relations.push(Relation::new(s, kind, phrase, s + 1));
        }
    }
    build(Category::Complex, entities, relations)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(category: Category, count: usize, seed: u64) -> Vec<StructuredPrompt> {
        generate_base_prompts(category, count, &KeywordPools::builtin(), seed, PromptMode::Structured)
            .unwrap()
    }

    #[test]
    fn exact_counts_and_uniqueness() {
        for category in Category::ALL {
            let prompts = gen(category, 300, 11);
            assert_eq!(prompts.len(), 300);
            let unique: HashSet<_> = prompts.iter().map(|p| p.surface.clone()).collect();
            assert_eq!(unique.len(), 300, "{category}");
            assert!(prompts.iter().all(|p| p.category == category));
            assert!(prompts.iter().all(|p| p.validate().is_ok()));
        }
    }

    #[test]
    fn attribute_template_split() {
        let prompts = gen(Category::Attribute, 9, 1);
        let singles = prompts.iter().filter(|p| p.entities.len() == 1).count();
        assert_eq!(singles, 5);
        let kinds: Vec<AttrKind> = prompts[..3].iter().map(|p| p.entities[0].attributes[0].kind).collect();
        assert_eq!(kinds, AttrKind::ALL.to_vec());
        for p in &prompts[5..] {
            assert_eq!(p.entities.len(), 2);
            assert_ne!(p.entities[0].attributes[0].kind, p.entities[1].attributes[0].kind);
        }
    }

    #[test]
    fn layout_template_split() {
        let prompts = gen(Category::Layout, 400, 3);
        let spatial = prompts.iter().filter(|p| !p.relations.is_empty()).count();
        let single = prompts.iter().filter(|p| p.entities.len() == 1).count();
        let dual = prompts
            .iter()
            .filter(|p| p.entities.len() == 2 && p.relations.is_empty())
            .count();
        assert_eq!((spatial, single, dual), (200, 100, 100));
        let three_d = prompts
            .iter()
            .filter(|p| p.relations.first().is_some_and(|r| r.kind == RelationKind::Spatial3d))
            .count();
        assert_eq!(three_d, 100);
        let counts: Vec<u32> = prompts[200..209].iter().map(|p| p.entities[0].count.unwrap()).collect();
        assert_eq!(counts, (1..=9).collect::<Vec<_>>());
        for p in &prompts[300..] {
            assert!(p.entities.iter().all(|e| (1..=5).contains(&e.count.unwrap())));
        }
    }

    #[test]
    fn seed_determinism() {
        assert_eq!(gen(Category::Complex, 50, 5), gen(Category::Complex, 50, 5));
        assert_ne!(gen(Category::Complex, 50, 5), gen(Category::Complex, 50, 6));
    }

    #[test]
    fn templated_prompts_round_trip() {
        let pools = KeywordPools::builtin();
        let lex = Lexicon::new(&pools);
        for category in Category::ALL {
            for p in gen(category, 400, 9) {
                assert_eq!(super::super::parse(&p.surface, category, &lex).unwrap(), p);
            }
        }
    }

    #[test]
    fn small_pools_report_pool_too_small() {
        let mut pools = KeywordPools::builtin();
        pools.objects.truncate(2);
        pools.colors.truncate(1);
        pools.shapes.truncate(1);
        pools.textures.truncate(1);
        let err = generate_base_prompts(Category::Attribute, 50, &pools, 0, PromptMode::Structured)
            .unwrap_err();
        assert!(matches!(err, ForgeError::PoolTooSmall { .. }));
    }

    #[test]
    fn zero_count_is_rejected() {
        let err = generate_base_prompts(
            Category::Layout,
            0,
            &KeywordPools::builtin(),
            0,
            PromptMode::Structured,
        )
        .unwrap_err();
        assert!(matches!(err, ForgeError::InvalidRequest(_)));
    }
}
