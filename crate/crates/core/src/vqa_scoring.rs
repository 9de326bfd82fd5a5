//! Question decomposition and per-image scores.
//!
//! A base prompt is decomposed into atomic yes/no questions, one per
//! binding, plus a single global faithfulness question. An image's score on
//! a question set is the mean of `p_yes - p_no` over the set.

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError, ImageArtifact, SceneGraph};
use crate::fewshot;
use crate::prompt_forge::{
    self, indefinite_article, number_word, parse_number, pluralize, Binding, Category, LexEntry,
    Lexicon, StructuredPrompt,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoringError {
    #[error("prompt has no entities to ask about")]
    EmptyPrompt,
    #[error("question set is empty")]
    NoQuestions,
    #[error("question generation failed: {0}")]
    Generation(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

const GLOBAL_PREFIX: &str = "This image is generated by a prompt: ";
const GLOBAL_SUFFIX: &str = ". Does this image accurately represent the prompt?";

/// The global faithfulness question for prompt text `prompt`.
pub fn global_question(prompt: &str) -> String {
    format!("{GLOBAL_PREFIX}{prompt}{GLOBAL_SUFFIX}")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalQuestion {
    pub text: String,
    /// The binding of the base prompt the question checks; absent for
    /// model-generated questions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fact: Option<Binding>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub local: Vec<LocalQuestion>,
    pub global: String,
}

fn singular_mention(object: &str) -> String {
    format!("{} {object}", indefinite_article(object))
}

fn subject_mention(object: &str, plural: bool) -> String {
    if plural {
        format!("the {}", pluralize(object))
    } else {
        singular_mention(object)
    }
}

/// Question text checking one binding of `prompt`.
pub fn question_for(prompt: &StructuredPrompt, binding: &Binding) -> String {
    let plural = |object: &str| {
        prompt
            .entities
            .iter()
            .find(|e| e.object == object)
            .is_some_and(|e| e.count.is_some_and(|c| c >= 2))
    };
    match binding {
        Binding::Entity { object } => format!("Is there {}?", singular_mention(object)),
        Binding::Count { object, count: 1 } => format!("Is there exactly one {object}?"),
        Binding::Count { object, count } => {
            format!("Are there {} {}?", number_word(*count), pluralize(object))
        }
        Binding::Attribute { object, value, .. } if plural(object) => {
            format!("Are the {} {value}?", pluralize(object))
        }
        Binding::Attribute { object, value, .. } => format!("Is the {object} {value}?"),
        Binding::Relation {
            subject,
            phrase,
            object,
        } => {
            let verb = if plural(subject) { "Are" } else { "Is" };
            format!(
                "{verb} {} {phrase} {}?",
                subject_mention(subject, plural(subject)),
                subject_mention(object, plural(object))
            )
        }
    }
}

/// Rule-based decomposition: for each entity its existence, count and
/// attribute questions, then one question per relation.
pub fn decompose_questions(base: &StructuredPrompt) -> Result<QuestionSet, ScoringError> {
    if base.entities.is_empty() {
        return Err(ScoringError::EmptyPrompt);
    }
    let mut facts = Vec::new();
    for entity in &base.entities {
        facts.push(Binding::Entity {
            object: entity.object.clone(),
        });
        if let Some(count) = entity.count {
            facts.push(Binding::Count {
                object: entity.object.clone(),
                count,
            });
        }
        for attr in &entity.attributes {
            facts.push(Binding::Attribute {
                object: entity.object.clone(),
                kind: attr.kind,
                value: attr.value.clone(),
            });
        }
    }
    for rel in &base.relations {
        facts.push(Binding::Relation {
            subject: base.entities[rel.subject].object.clone(),
            phrase: rel.phrase.clone(),
            object: base.entities[rel.object].object.clone(),
        });
    }
    let local = facts
        .into_iter()
        .map(|fact| LocalQuestion {
            text: question_for(base, &fact),
            fact: Some(fact),
        })
        .collect();
    Ok(QuestionSet {
        local,
        global: global_question(&base.core_surface()),
    })
}

/// Question decomposition by a backend using the few-shot question messages.
pub fn questions_from_backend(
    base: &StructuredPrompt,
    backend: &dyn Backend,
    seed: u64,
) -> Result<QuestionSet, ScoringError> {
    if base.entities.is_empty() {
        return Err(ScoringError::EmptyPrompt);
    }
    let surface = base.core_surface();
    let reply = backend.text_complete(&fewshot::question_messages(base.category, &surface), seed)?;
    let questions = fewshot::parse_questions(&reply).map_err(ScoringError::Generation)?;
    Ok(QuestionSet {
        local: questions
            .into_iter()
            .map(|text| LocalQuestion { text, fact: None })
            .collect(),
        global: global_question(&surface),
    })
}

/// A question parsed back into the facts it asks about.
#[derive(Clone, Debug, PartialEq)]
pub enum Query {
    /// True when every binding holds.
    Bindings(Vec<Binding>),
    /// Gist judgment: true when every entity of the prompt is depicted.
    Global(StructuredPrompt),
}

#[derive(Debug)]
enum QToken {
    There,
    Exactly,
    Det,
    Number(u32),
    Attr(String),
    Object(String),
    Rel(String),
}

#[derive(Default)]
struct Mention {
    object: String,
    attrs: Vec<String>,
    count: Option<u32>,
}

impl Query {
    pub fn parse(question: &str, lex: &Lexicon) -> Result<Query, String> {
        let q = question.trim();
        if let Some(rest) = q.strip_prefix(GLOBAL_PREFIX) {
            let prompt = rest
                .strip_suffix(GLOBAL_SUFFIX)
                .ok_or("global question does not end with the template suffix")?;
            let parsed = prompt_forge::parse(prompt, Category::Complex, lex).map_err(|e| e.to_string())?;
            return Ok(Query::Global(parsed));
        }
        let body = q
            .strip_suffix('?')
            .ok_or("not a question")?
            .to_lowercase()
            .replace(',', " ");
        let words: Vec<&str> = body.split_whitespace().collect();
        match words.first() {
            Some(&"is") | Some(&"are") => {}
            _ => return Err("expected a yes/no question starting with is/are".into()),
        }
        let tokens = q_tokenize(&words[1..], lex)?;
        let mut pos = 0;
        let mut bindings = Vec::new();
        if matches!(tokens.first(), Some(QToken::There)) {
            pos += 1;
            let m = read_mention(&tokens, &mut pos)?;
            if pos != tokens.len() {
                return Err("trailing words after the object".into());
            }
            match m.count {
                Some(count) => bindings.push(Binding::Count {
                    object: m.object.clone(),
                    count,
                }),
                None => bindings.push(Binding::Entity {
                    object: m.object.clone(),
                }),
            }
            push_attrs(&mut bindings, &m, lex);
            return Ok(Query::Bindings(bindings));
        }
        let subject = read_mention(&tokens, &mut pos)?;
        push_attrs(&mut bindings, &subject, lex);
        match tokens.get(pos) {
            Some(QToken::Rel(phrase)) => {
                let phrase = phrase.clone();
                pos += 1;
                let object = read_mention(&tokens, &mut pos)?;
                if pos != tokens.len() {
                    return Err("trailing words after the relation".into());
                }
                push_attrs(&mut bindings, &object, lex);
                bindings.push(Binding::Relation {
                    subject: subject.object,
                    phrase,
                    object: object.object,
                });
            }
            Some(QToken::Attr(_)) => {
                let mut predicate = Mention {
                    object: subject.object.clone(),
                    ..Mention::default()
                };
                while let Some(QToken::Attr(v)) = tokens.get(pos) {
                    predicate.attrs.push(v.clone());
                    pos += 1;
                }
                if pos != tokens.len() {
                    return Err("trailing words after the attributes".into());
                }
                push_attrs(&mut bindings, &predicate, lex);
            }
            _ => return Err("expected a relation or an attribute after the subject".into()),
        }
        Ok(Query::Bindings(bindings))
    }

    pub fn holds_in(&self, scene: &SceneGraph) -> bool {
        match self {
            Query::Bindings(bindings) => bindings.iter().all(|b| binding_holds(b, scene)),
            Query::Global(prompt) => prompt.entities.iter().all(|e| scene.find(&e.object).is_some()),
        }
    }
}

fn push_attrs(out: &mut Vec<Binding>, m: &Mention, lex: &Lexicon) {
    for value in &m.attrs {
        let kind = lex.attribute_kind(value).expect("tokenized as an attribute");
        out.push(Binding::Attribute {
            object: m.object.clone(),
            kind,
            value: value.clone(),
        });
    }
}

fn read_mention(tokens: &[QToken], pos: &mut usize) -> Result<Mention, String> {
    let mut m = Mention::default();
    match tokens.get(*pos) {
        Some(QToken::Det) => *pos += 1,
        Some(QToken::Exactly) => {
            *pos += 1;
            match tokens.get(*pos) {
                Some(QToken::Number(n)) => {
                    m.count = Some(*n);
                    *pos += 1;
                }
                _ => return Err("`exactly` must be followed by a number".into()),
            }
        }
        Some(QToken::Number(n)) => {
            m.count = Some(*n);
            *pos += 1;
        }
        _ => {}
    }
    while let Some(QToken::Attr(v)) = tokens.get(*pos) {
        m.attrs.push(v.clone());
        *pos += 1;
    }
    match tokens.get(*pos) {
        Some(QToken::Object(o)) => {
            m.object = o.clone();
            *pos += 1;
            Ok(m)
        }
        other => Err(format!("expected an object, found {other:?}")),
    }
}

fn q_tokenize(words: &[&str], lex: &Lexicon) -> Result<Vec<QToken>, String> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let w = words[i];
        if let Some((phrase, len)) = lex.longest_match(words, i, |e| match e {
            LexEntry::Spatial { phrase, .. } | LexEntry::Action { phrase } => Some(phrase.clone()),
            _ => None,
        }) {
            out.push(QToken::Rel(phrase));
            i += len;
            continue;
        }
        match w {
            "there" => out.push(QToken::There),
            "exactly" => out.push(QToken::Exactly),
            "a" | "an" | "the" => out.push(QToken::Det),
            _ => {
                if let Some(n) = parse_number(w) {
                    out.push(QToken::Number(n));
                } else if let Some((canonical, len)) = lex.longest_match(words, i, |e| match e {
                    LexEntry::Object { canonical, .. } => Some(canonical.clone()),
                    _ => None,
                }) {
                    out.push(QToken::Object(canonical));
                    i += len;
                    continue;
                } else if lex.attribute_kind(w).is_some() {
                    out.push(QToken::Attr(w.to_string()));
                } else {
                    return Err(format!("unknown word `{w}`"));
                }
            }
        }
        i += 1;
    }
    Ok(out)
}

/// Whether a single binding holds in a scene.
pub fn binding_holds(binding: &Binding, scene: &SceneGraph) -> bool {
    match binding {
        Binding::Entity { object } => scene.find(object).is_some(),
        Binding::Attribute { object, value, .. } => {
            scene.find(object).is_some_and(|o| o.has_value(value))
        }
        Binding::Count { object, count } => {
            scene.find(object).is_some_and(|o| o.instances() == *count)
        }
        Binding::Relation {
            subject,
            phrase,
            object,
        } => scene.has_relation(subject, phrase, object),
    }
}

/// One probed question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub question: String,
    pub p_yes: f64,
    pub p_no: f64,
}

impl Answer {
    pub fn margin(&self) -> f64 {
        self.p_yes - self.p_no
    }

    /// Binary reading of the answer; ties read as "no".
    pub fn is_yes(&self) -> bool {
        self.p_yes > self.p_no
    }
}

/// Mean of `p_yes - p_no` over `answers`.
pub fn mean_margin(answers: &[Answer]) -> Result<f64, ScoringError> {
    if answers.is_empty() {
        return Err(ScoringError::NoQuestions);
    }
    Ok(answers.iter().map(Answer::margin).sum::<f64>() / answers.len() as f64)
}

/// Scores and transcript of one image against a question set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub s_local: f64,
    pub s_global: f64,
    pub local: Vec<Answer>,
    pub global: Answer,
}

fn probe(backend: &dyn Backend, image: &ImageArtifact, question: &str) -> Result<Answer, ScoringError> {
    let (p_yes, p_no) = backend.vqa_probe(image, question)?;
    Ok(Answer {
        question: question.to_string(),
        p_yes,
        p_no,
    })
}

pub fn score_image(
    image: &ImageArtifact,
    questions: &QuestionSet,
    backend: &dyn Backend,
) -> Result<ImageScore, ScoringError> {
    if questions.local.is_empty() {
        return Err(ScoringError::NoQuestions);
    }
    let local = questions
        .local
        .iter()
        .map(|q| probe(backend, image, &q.text))
        .collect::<Result<Vec<_>, _>>()?;
    let global = probe(backend, image, &questions.global)?;
    Ok(ImageScore {
        s_local: mean_margin(&local)?,
        s_global: global.margin(),
        local,
        global,
    })
}

/// Scores of a (winning, losing) image pair against the same question set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub s_local_w: f64,
    pub s_global_w: f64,
    pub s_local_l: f64,
    pub s_global_l: f64,
    pub winning: ImageScore,
    pub losing: ImageScore,
}

impl ScoreCard {
    pub fn from_scores(winning: ImageScore, losing: ImageScore) -> Self {
        Self {
            s_local_w: winning.s_local,
            s_global_w: winning.s_global,
            s_local_l: losing.s_local,
            s_global_l: losing.s_global,
            winning,
            losing,
        }
    }

    pub fn delta_local(&self) -> f64 {
        self.s_local_w - self.s_local_l
    }

    pub fn delta_global(&self) -> f64 {
        self.s_global_w - self.s_global_l
    }
}

pub fn score_pair(
    winning: &ImageArtifact,
    losing: &ImageArtifact,
    questions: &QuestionSet,
    backend: &dyn Backend,
) -> Result<ScoreCard, ScoringError> {
    Ok(ScoreCard::from_scores(
        score_image(winning, questions, backend)?,
        score_image(losing, questions, backend)?,
    ))
}
