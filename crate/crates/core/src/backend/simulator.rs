use rand::seq::IndexedRandom;
use rand::Rng;

use super::{
    Backend, BackendError, ChatMessage, ImageArtifact, ImagePayload, ImageRequest, SceneGraph,
    SceneObject, SceneRelation, SceneVocab,
};
use crate::fewshot::{self, DenseFamily, Task};
use crate::prompt_forge::{self, KeywordPools, Lexicon, PoolKind, StructuredPrompt};
use crate::vqa_scoring::{self, Query};
use crate::{perturbation, rng};

/// Deterministic stand-in for a generator and a judge.
///
/// An "image" is the scene graph intended by the prompt after seeded
/// corruption. Questions are parsed back into facts and answered from the
/// graph, so scores are exact up to the configured answer noise.
#[derive(Clone, Debug)]
pub struct Simulator {
    pools: KeywordPools,
    lexicon: Lexicon,
    vocab: SceneVocab,
}

impl Simulator {
    pub fn new(pools: KeywordPools, vocab_size: usize) -> Result<Self, BackendError> {
        pools
            .validate()
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        let vocab = SceneVocab::new(&pools, vocab_size)
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        Ok(Self {
            lexicon: Lexicon::new(&pools),
            pools,
            vocab,
        })
    }

    /// Simulator over the builtin pools with a 512-token scene vocabulary.
    pub fn builtin() -> Self {
        Self::new(KeywordPools::builtin(), 512).expect("builtin pools fit the default vocabulary")
    }

    pub fn pools(&self) -> &KeywordPools {
        &self.pools
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn vocab(&self) -> &SceneVocab {
        &self.vocab
    }

    /// The uncorrupted scene for `prompt`.
    pub fn intended_scene(&self, prompt: &StructuredPrompt) -> Result<SceneGraph, BackendError> {
        let (objects, relations) = intended(prompt);
        self.vocab
            .graph(objects, relations)
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))
    }

    fn fixture(&self, task: Task, seed: u64) -> Result<String, BackendError> {
        let mut rng = rng::substream(seed, &["fixture"]);
        match task {
            Task::Keywords(pool) => {
                let entries: Vec<String> = match pool {
                    PoolKind::Spatial => self.pools.spatial.iter().map(|s| s.phrase.clone()).collect(),
                    PoolKind::Objects => self.pools.objects.clone(),
                    PoolKind::Colors => self.pools.colors.clone(),
                    PoolKind::Shapes => self.pools.shapes.clone(),
                    PoolKind::Textures => self.pools.textures.clone(),
                };
                let mut batch: Vec<String> = entries.choose_multiple(&mut rng, 12).cloned().collect();
                // Models repeat themselves; so does the fixture.
                let repeats: Vec<String> = batch.choose_multiple(&mut rng, 2).cloned().collect();
                batch.extend(repeats);
                Ok(batch.join(", "))
            }
            Task::Prompt(category) => {
                let p = prompt_forge::sample_structured(category, &self.pools, &mut rng);
                Ok(capitalize(&p.surface) + ".")
            }
            Task::Densify {
                family,
                base,
                negative,
            } => {
                let context = perturbation::rule_context(rng.random());
                let line = |text: &str| format!("{} {}.", capitalize(text.trim_end_matches('.')), context.join(", "));
                let bindings = |text: &str| -> String {
                    let category = match family {
                        DenseFamily::Attribute => prompt_forge::Category::Attribute,
                        DenseFamily::Spatial | DenseFamily::Numeracy => prompt_forge::Category::Layout,
                        DenseFamily::NonSpatial => prompt_forge::Category::NonSpatial,
                        DenseFamily::Complex => prompt_forge::Category::Complex,
                    };
                    match prompt_forge::parse(text, category, &self.lexicon) {
                        Ok(p) => binding_summary(&p),
                        Err(_) => text.to_string(),
                    }
                };
                Ok(format!(
                    "Step 1. Prompt 1 Object Bindings: {}\nStep 2. Prompt 1 Dense: {}\nStep 3. Prompt 2 Object Bindings: {}\nStep 4. Prompt 2 Dense: {}",
                    bindings(&base),
                    line(&base),
                    bindings(&negative),
                    line(&negative)
                ))
            }
            Task::Questions { prompt } => {
                let text = prompt.trim().trim_end_matches('.');
                let parsed = prompt_forge::parse(text, prompt_forge::Category::Complex, &self.lexicon)
                    .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
                let questions = vqa_scoring::decompose_questions(&parsed)
                    .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
                let concepts: Vec<String> = questions
                    .local
                    .iter()
                    .map(|q| q.text.trim_end_matches('?').to_lowercase())
                    .collect();
                let asked: Vec<&str> = questions.local.iter().map(|q| q.text.as_str()).collect();
                Ok(format!(
                    "Concepts and relations: {}; Questions: {}",
                    concepts.join(", "),
                    asked.join(" ")
                ))
            }
        }
    }
}

fn capitalize(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

fn binding_summary(p: &StructuredPrompt) -> String {
    p.entities
        .iter()
        .map(|e| {
            let mut tags: Vec<String> = e.attributes.iter().map(|a| format!("'{}'", a.value)).collect();
            if let Some(c) = e.count {
                tags.insert(0, format!("'{}'", prompt_forge::number_word(c)));
            }
            format!("{}-[{}]", e.object, tags.join(", "))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn intended(prompt: &StructuredPrompt) -> (Vec<SceneObject>, Vec<SceneRelation>) {
    let objects = prompt
        .entities
        .iter()
        .map(|e| SceneObject {
            object: e.object.clone(),
            attributes: e.attributes.clone(),
            count: e.count,
        })
        .collect();
    let relations = prompt
        .relations
        .iter()
        .map(|r| SceneRelation {
            subject: r.subject,
            kind: r.kind,
            phrase: r.phrase.clone(),
            object: r.object,
        })
        .collect();
    (objects, relations)
}

/// Uniform draws for corruption decisions. With probability `coherence` a
/// decision reuses a draw shared by every seed of the same prompt text,
/// otherwise it draws per seed; both branches are uniform, so the marginal
/// rate equals the configured probability.
struct Draws<'a> {
    text: &'a str,
    seed: u64,
    coherence: f64,
}

impl Draws<'_> {
    fn uniform(&self, element: &str) -> f64 {
        let shared = rng::unit(self.seed, &["coherence", self.text, element]) < self.coherence;
        if shared {
            rng::unit(0, &["prompt", self.text, element])
        } else {
            rng::unit(self.seed, &["seed", self.text, element])
        }
    }

    fn index(&self, element: &str, n: usize) -> usize {
        ((self.uniform(element) * n as f64) as usize).min(n - 1)
    }
}

impl Backend for Simulator {
    fn text_complete(&self, messages: &[ChatMessage], seed: u64) -> Result<String, BackendError> {
        if messages.is_empty() {
            return Err(BackendError::InvalidRequest("empty message list".into()));
        }
        let task = fewshot::recognize(messages).ok_or_else(|| {
            BackendError::InvalidRequest("the simulator only serves the few-shot task formats".into())
        })?;
        self.fixture(task, seed)
    }

    fn generate_image(&self, request: &ImageRequest<'_>) -> Result<ImageArtifact, BackendError> {
        request.decode.validate()?;
        let c = request.corruption;
        c.validate()?;
        let scale = request.decode.temperature.max(1.0);
        let p_omit = (c.p_omit * scale).min(1.0);
        let p_misbind = (c.p_misbind * scale).min(1.0);
        let p_wrong = (c.p_wrong_attr * scale).min(1.0);
        let draws = Draws {
            text: request.text,
            seed: request.decode.seed,
            coherence: c.seed_coherence,
        };
        let (mut objects, mut relations) = intended(request.prompt);

        // Omission, then re-index the surviving relations.
        let keep: Vec<bool> = objects
            .iter()
            .map(|o| draws.uniform(&format!("omit:{}", o.object)) >= p_omit)
            .collect();
        let mut new_index = vec![usize::MAX; objects.len()];
        let mut next = 0;
        for (i, k) in keep.iter().enumerate() {
            if *k {
                new_index[i] = next;
                next += 1;
            }
        }
        let mut kept = keep.iter();
        objects.retain(|_| *kept.next().expect("same length"));
        relations.retain(|r| keep[r.subject] && keep[r.object]);
        for r in &mut relations {
            r.subject = new_index[r.subject];
            r.object = new_index[r.object];
        }

        // Misbinding: attribute lists exchanged between objects, relation
        // endpoints exchanged.
        for i in 0..objects.len() {
            for j in i + 1..objects.len() {
                let eligible = !objects[i].attributes.is_empty()
                    && !objects[j].attributes.is_empty()
                    && objects[i].attributes != objects[j].attributes;
                if eligible
                    && draws.uniform(&format!("misbind:{}:{}", objects[i].object, objects[j].object))
                        < p_misbind
                {
                    let a = std::mem::take(&mut objects[i].attributes);
                    objects[i].attributes = std::mem::replace(&mut objects[j].attributes, a);
                }
            }
        }
        for r in &mut relations {
            let key = format!("relswap:{}:{}:{}", objects[r.subject].object, r.phrase, objects[r.object].object);
            if draws.uniform(&key) < p_misbind {
                std::mem::swap(&mut r.subject, &mut r.object);
            }
        }

        // Wrong values: attributes replaced within their kind, counts moved.
        for obj in &mut objects {
            let name = obj.object.clone();
            for attr in &mut obj.attributes {
                let key = format!("wrong:{name}:{}", attr.value);
                if draws.uniform(&key) < p_wrong {
                    let others: Vec<&String> = self
                        .pools
                        .attributes(attr.kind)
                        .iter()
                        .filter(|v| **v != attr.value)
                        .collect();
                    if !others.is_empty() {
                        attr.value = others[draws.index(&(key + ":pick"), others.len())].clone();
                    }
                }
            }
            if let Some(count) = obj.count {
                let key = format!("wrong:{name}:count");
                if draws.uniform(&key) < p_wrong {
                    let others: Vec<u32> = (1..=9).filter(|c| *c != count).collect();
                    obj.count = Some(others[draws.index(&(key + ":pick"), others.len())]);
                }
            }
        }

        let graph = self
            .vocab
            .graph(objects, relations)
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        Ok(ImageArtifact {
            id: request.id.to_string(),
            source_prompt_id: request.source_prompt_id.to_string(),
            decode: request.decode,
            corruption: c,
            payload: ImagePayload::Scene { graph },
        })
    }

    fn vqa_probe(&self, image: &ImageArtifact, question: &str) -> Result<(f64, f64), BackendError> {
        let scene = image.scene().ok_or_else(|| {
            BackendError::InvalidRequest("the simulator can only inspect scene-graph images".into())
        })?;
        let query = Query::parse(question, &self.lexicon)
            .map_err(|e| BackendError::UnanswerableQuestion(e.to_string()))?;
        let truth = query.holds_in(scene);
        let eta = image.corruption.eta;
        Ok(if truth { (1.0 - eta, eta) } else { (eta, 1.0 - eta) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{CorruptionParams, DecodeParams};
    use crate::prompt_forge::{AttrKind, Category, Entity};

    fn red_car() -> StructuredPrompt {
        StructuredPrompt::new(
            Category::Attribute,
            vec![Entity::new("car").with_attr(AttrKind::Color, "red")],
            vec![],
        )
        .unwrap()
    }

    fn image(sim: &Simulator, p: &StructuredPrompt, c: CorruptionParams, seed: u64) -> ImageArtifact {
        let text = p.surface.clone();
        sim.generate_image(&ImageRequest {
            id: "img",
            source_prompt_id: "p",
            prompt: p,
            text: &text,
            decode: DecodeParams::default().with_seed(seed),
            corruption: c,
        })
        .unwrap()
    }

    #[test]
    fn zero_corruption_is_identity() {
        let sim = Simulator::builtin();
        let p = red_car().with_context(vec!["in a garden".into()]);
        let img = image(&sim, &p, CorruptionParams::none(), 3);
        assert_eq!(img.scene().unwrap(), &sim.intended_scene(&p).unwrap());
    }

    #[test]
    fn full_omission_empties_scene() {
        let sim = Simulator::builtin();
        let p = StructuredPrompt::new(
            Category::Attribute,
            vec![
                Entity::new("car").with_attr(AttrKind::Color, "red"),
                Entity::new("bird"),
            ],
            vec![],
        )
        .unwrap();
        let c = CorruptionParams {
            p_omit: 1.0,
            ..CorruptionParams::none()
        };
        assert!(image(&sim, &p, c, 0).scene().unwrap().objects.is_empty());
    }

    #[test]
    fn probe_answers_follow_the_scene() {
        let sim = Simulator::builtin();
        let img = image(&sim, &red_car(), CorruptionParams::none(), 0);
        assert_eq!(sim.vqa_probe(&img, "Is the car red?").unwrap(), (1.0, 0.0));
        let noisy = ImageArtifact {
            corruption: CorruptionParams {
                eta: 0.05,
                ..CorruptionParams::none()
            },
            ..img.clone()
        };
        assert_eq!(sim.vqa_probe(&noisy, "Is the car blue?").unwrap(), (0.05, 0.95));
        assert_eq!(sim.vqa_probe(&noisy, "Is there a bird?").unwrap(), (0.05, 0.95));
        assert!(matches!(
            sim.vqa_probe(&img, "What colour is the sky?"),
            Err(BackendError::UnanswerableQuestion(_))
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        let sim = Simulator::builtin();
        let c = CorruptionParams::default();
        for seed in 0..20 {
            assert_eq!(image(&sim, &red_car(), c, seed), image(&sim, &red_car(), c, seed));
        }
    }

    #[test]
    fn temperature_scales_corruption() {
        let sim = Simulator::builtin();
        let p = red_car();
        let c = CorruptionParams {
            p_omit: 0.3,
            ..CorruptionParams::none()
        };
        let omitted = |temperature: f64| {
            (0..2000u64)
                .filter(|s| {
                    let img = sim
                        .generate_image(&ImageRequest {
                            id: "i",
                            source_prompt_id: "p",
                            prompt: &p,
                            text: &p.surface,
                            decode: DecodeParams {
                                temperature,
                                ..DecodeParams::default().with_seed(*s)
                            },
                            corruption: c,
                        })
                        .unwrap();
                    img.scene().unwrap().objects.is_empty()
                })
                .count()
        };
        let (low, high) = (omitted(1.0), omitted(3.0));
        assert!(low < 800 && high > 1600, "{low} {high}");
    }

    #[test]
    fn fixtures_cover_the_fewshot_formats() {
        let sim = Simulator::builtin();
        let dense = sim
            .text_complete(
                &fewshot::densify_messages(DenseFamily::Attribute, "a red car", "a blue car"),
                1,
            )
            .unwrap();
        assert!(dense.contains("Step 4. Prompt 2 Dense:"));
        let (a, b) = fewshot::parse_dense_transcript(&dense).unwrap();
        assert!(a.starts_with("A red car "));
        assert!(b.starts_with("A blue car "));
        let qs = sim
            .text_complete(&fewshot::question_messages(Category::Layout, "two apples and a blouse"), 0)
            .unwrap();
        assert!(qs.contains("Questions: Is there an apple?"), "{qs}");
        assert!(sim.text_complete(&[], 0).is_err());
    }
}
