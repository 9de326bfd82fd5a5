use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::prompt_forge::{AttrKind, Attribute, KeywordPools, RelationKind};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub object: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attributes: Vec<Attribute>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
}

impl SceneObject {
    /// How many instances are depicted; an uncounted object is one instance.
    pub fn instances(&self) -> u32 {
        self.count.unwrap_or(1)
    }

    pub fn has_value(&self, value: &str) -> bool {
        self.attributes.iter().any(|a| a.value == value)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneRelation {
    pub subject: usize,
    pub kind: RelationKind,
    pub phrase: String,
    pub object: usize,
}

/// What a simulated image depicts, with its canonical token serialization.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub objects: Vec<SceneObject>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relations: Vec<SceneRelation>,
    pub token_sequence: Vec<u32>,
}

impl SceneGraph {
    pub fn find(&self, object: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.object == object)
    }

    pub fn has_relation(&self, subject: &str, phrase: &str, object: &str) -> bool {
        self.relations.iter().any(|r| {
            r.phrase == phrase
                && self.objects[r.subject].object == subject
                && self.objects[r.object].object == object
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VocabError {
    #[error("vocabulary needs {needed} tokens but the size limit is {limit}")]
    TooLarge { needed: usize, limit: usize },
    #[error("`{0}` is not in the scene vocabulary")]
    UnknownWord(String),
    #[error("scene has {0} objects; at most {MAX_SLOTS} can be serialized")]
    TooManyObjects(usize),
    #[error("count {0} exceeds the largest count token {MAX_COUNT}")]
    CountTooLarge(u32),
    #[error("malformed token sequence at position {0}")]
    Malformed(usize),
}

const PAD: u32 = 0;
const BOS: u32 = 1;
const EOS: u32 = 2;
const SEP: u32 = 3;
const REL: u32 = 4;
const SLOT_BASE: u32 = 5;
const MAX_SLOTS: usize = 8;
const COUNT_BASE: u32 = SLOT_BASE + MAX_SLOTS as u32;
const MAX_COUNT: u32 = 32;
const WORD_BASE: u32 = COUNT_BASE + MAX_COUNT;

#[derive(Clone, Debug, PartialEq)]
enum Word {
    Object(String),
    Attr(AttrKind, String),
    Phrase(RelationKind, String),
}

/// Fixed token table for scene serialization:
///
/// ```text
/// 0 PAD | 1 BOS | 2 EOS | 3 SEP | 4 REL | 5..13 object slots | 13..45 counts 1..=32
/// then objects, colors, shapes, textures, spatial phrases, actions
/// ```
///
/// A scene serializes as `BOS obj [count] attr* (SEP obj [count] attr*)*
/// (REL slot phrase slot)* EOS`.
#[derive(Clone, Debug)]
pub struct SceneVocab {
    words: Vec<Word>,
    ids: HashMap<(u8, String), u32>,
    size: usize,
}

fn class_of(word: &Word) -> (u8, String) {
    match word {
        Word::Object(o) => (0, o.clone()),
        Word::Attr(_, v) => (1, v.clone()),
        Word::Phrase(_, p) => (2, p.clone()),
    }
}

impl SceneVocab {
    /// Builds the table from `pools`; fails if it does not fit in `limit`.
    pub fn new(pools: &KeywordPools, limit: usize) -> Result<Self, VocabError> {
        let mut words = Vec::new();
        words.extend(pools.objects.iter().map(|o| Word::Object(o.clone())));
        for kind in AttrKind::ALL {
            words.extend(pools.attributes(kind).iter().map(|v| Word::Attr(kind, v.clone())));
        }
        words.extend(pools.spatial.iter().map(|s| Word::Phrase(s.kind, s.phrase.clone())));
        words.extend(pools.actions.iter().map(|a| Word::Phrase(RelationKind::Action, a.clone())));
        let size = WORD_BASE as usize + words.len();
        if size > limit {
            return Err(VocabError::TooLarge {
                needed: size,
                limit,
            });
        }
        let ids = words
            .iter()
            .enumerate()
            .map(|(i, w)| (class_of(w), WORD_BASE + i as u32))
            .collect();
        Ok(Self { words, ids, size })
    }

    /// Number of tokens in use; every id is below this.
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn id(&self, class: u8, word: &str) -> Result<u32, VocabError> {
        self.ids
            .get(&(class, word.to_string()))
            .copied()
            .ok_or_else(|| VocabError::UnknownWord(word.to_string()))
    }

    fn word(&self, token: u32) -> Option<&Word> {
        token
            .checked_sub(WORD_BASE)
            .and_then(|i| self.words.get(i as usize))
    }

    pub fn encode(
        &self,
        objects: &[SceneObject],
        relations: &[SceneRelation],
    ) -> Result<Vec<u32>, VocabError> {
        if objects.len() > MAX_SLOTS {
            return Err(VocabError::TooManyObjects(objects.len()));
        }
        let mut out = vec![BOS];
        for (i, obj) in objects.iter().enumerate() {
            if i > 0 {
                out.push(SEP);
            }
            out.push(self.id(0, &obj.object)?);
            if let Some(c) = obj.count {
                if c == 0 || c > MAX_COUNT {
                    return Err(VocabError::CountTooLarge(c));
                }
                out.push(COUNT_BASE + c - 1);
            }
            for attr in &obj.attributes {
                out.push(self.id(1, &attr.value)?);
            }
        }
        for rel in relations {
            out.push(REL);
            out.push(SLOT_BASE + rel.subject as u32);
            out.push(self.id(2, &rel.phrase)?);
            out.push(SLOT_BASE + rel.object as u32);
        }
        out.push(EOS);
        Ok(out)
    }

    pub fn decode(&self, tokens: &[u32]) -> Result<(Vec<SceneObject>, Vec<SceneRelation>), VocabError> {
        let mut objects: Vec<SceneObject> = Vec::new();
        let mut relations = Vec::new();
        if tokens.first() != Some(&BOS) {
            return Err(VocabError::Malformed(0));
        }
        let mut i = 1;
        let slot = |t: Option<&u32>, pos: usize, n: usize| -> Result<usize, VocabError> {
            match t {
                Some(&t) if (SLOT_BASE..COUNT_BASE).contains(&t) && ((t - SLOT_BASE) as usize) < n => {
                    Ok((t - SLOT_BASE) as usize)
                }
                _ => Err(VocabError::Malformed(pos)),
            }
        };
        loop {
            let Some(&t) = tokens.get(i) else {
                return Err(VocabError::Malformed(i));
            };
            match t {
                EOS => {
                    if i + 1 != tokens.len() {
                        return Err(VocabError::Malformed(i + 1));
                    }
                    return Ok((objects, relations));
                }
                SEP if !objects.is_empty() && relations.is_empty() => {
                    match tokens.get(i + 1).and_then(|t| self.word(*t)) {
                        Some(Word::Object(_)) => {}
                        _ => return Err(VocabError::Malformed(i + 1)),
                    }
                    i += 1;
                }
                REL => {
                    let n = objects.len();
                    let subject = slot(tokens.get(i + 1), i + 1, n)?;
                    let (kind, phrase) = match tokens.get(i + 2).and_then(|t| self.word(*t)) {
                        Some(Word::Phrase(k, p)) => (*k, p.clone()),
                        _ => return Err(VocabError::Malformed(i + 2)),
                    };
                    let object = slot(tokens.get(i + 3), i + 3, n)?;
                    relations.push(SceneRelation {
                        subject,
                        kind,
                        phrase,
                        object,
                    });
                    i += 4;
                }
                t if (COUNT_BASE..WORD_BASE).contains(&t) && relations.is_empty() => {
                    let last = objects.last_mut().ok_or(VocabError::Malformed(i))?;
                    if last.count.is_some() || !last.attributes.is_empty() {
                        return Err(VocabError::Malformed(i));
                    }
                    last.count = Some(t - COUNT_BASE + 1);
                    i += 1;
                }
                t if relations.is_empty() => match self.word(t) {
                    Some(Word::Object(o)) => {
                        let starts_object = i == 1 || tokens[i - 1] == SEP;
                        if !starts_object {
                            return Err(VocabError::Malformed(i));
                        }
                        objects.push(SceneObject {
                            object: o.clone(),
                            attributes: Vec::new(),
                            count: None,
                        });
                        i += 1;
                    }
                    Some(Word::Attr(kind, v)) => {
                        let last = objects.last_mut().ok_or(VocabError::Malformed(i))?;
                        last.attributes.push(Attribute::new(*kind, v.clone()));
                        i += 1;
                    }
                    _ => return Err(VocabError::Malformed(i)),
                },
                _ => return Err(VocabError::Malformed(i)),
            }
            if tokens.get(i) == Some(&PAD) {
                return Err(VocabError::Malformed(i));
            }
        }
    }

    /// A scene graph with its token sequence filled in.
    pub fn graph(
        &self,
        objects: Vec<SceneObject>,
        relations: Vec<SceneRelation>,
    ) -> Result<SceneGraph, VocabError> {
        let token_sequence = self.encode(&objects, &relations)?;
        Ok(SceneGraph {
            objects,
            relations,
            token_sequence,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> SceneVocab {
        SceneVocab::new(&KeywordPools::builtin(), 512).unwrap()
    }

    fn sample() -> (Vec<SceneObject>, Vec<SceneRelation>) {
        let objects = vec![
            SceneObject {
                object: "cat".into(),
                attributes: vec![
                    Attribute::new(AttrKind::Texture, "fluffy"),
                    Attribute::new(AttrKind::Color, "white"),
                ],
                count: None,
            },
            SceneObject {
                object: "apple".into(),
                attributes: vec![],
                count: Some(3),
            },
        ];
        let relations = vec![SceneRelation {
            subject: 1,
            kind: RelationKind::Spatial3d,
            phrase: "behind".into(),
            object: 0,
        }];
        (objects, relations)
    }

    #[test]
    fn builtin_vocab_fits_default_size() {
        let v = vocab();
        assert!(v.len() <= 512);
        assert!(SceneVocab::new(&KeywordPools::builtin(), 100).is_err());
    }

    #[test]
    fn round_trip() {
        let v = vocab();
        let (objects, relations) = sample();
        let tokens = v.encode(&objects, &relations).unwrap();
        assert!(tokens.iter().all(|t| (*t as usize) < v.len()));
        assert_eq!(v.decode(&tokens).unwrap(), (objects, relations));
        let empty = v.encode(&[], &[]).unwrap();
        assert_eq!(empty, vec![BOS, EOS]);
        assert_eq!(v.decode(&empty).unwrap(), (vec![], vec![]));
    }

    #[test]
    fn malformed_sequences_are_rejected() {
        let v = vocab();
        let (objects, relations) = sample();
        let tokens = v.encode(&objects, &relations).unwrap();
        assert!(v.decode(&tokens[..tokens.len() - 1]).is_err());
        assert!(v.decode(&tokens[1..]).is_err());
        let mut bad_slot = tokens.clone();
        let rel = bad_slot.iter().position(|t| *t == REL).unwrap();
        bad_slot[rel + 1] = SLOT_BASE + 7;
        assert!(v.decode(&bad_slot).is_err());
    }

    #[test]
    fn unknown_words_fail_to_encode() {
        let v = vocab();
        let objects = vec![SceneObject {
            object: "microwave".into(),
            attributes: vec![],
            count: None,
        }];
        assert_eq!(
            v.encode(&objects, &[]),
            Err(VocabError::UnknownWord("microwave".into()))
        );
    }
}
