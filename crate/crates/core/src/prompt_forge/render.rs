//! Surface rendering and its inverse.
//!
//! Grammar of a rendered prompt:
//!
//! ```text
//! prompt  := clauses [" " context ("," " " context)*]
//! clauses := clause | clause " and " clause | clause ("," " " clause)* " and " clause
//! clause  := mention [relation mention]
//! mention := ("a" | "an" | NUMBER) ATTR* OBJECT | "the" OBJECT
//! relation:= SPATIAL | ("is" | "are") ACTION
//! ```
//!
//! The first mention of an entity is indefinite (or numbered); later
//! mentions use "the".

use super::lexicon::{indefinite_article, parse_number, LexEntry};
use super::{
    number_word, pluralize, AttrKind, Category, Entity, Lexicon, PromptError, Relation,
    RelationKind, StructuredPrompt,
};

fn first_mention(entity: &Entity) -> String {
    let noun = if entity.is_plural() {
        pluralize(&entity.object)
    } else {
        entity.object.clone()
    };
    let mut words: Vec<String> = entity.attributes.iter().map(|a| a.value.clone()).collect();
    words.push(noun);
    let body = words.join(" ");
    let det = match entity.count {
        Some(n) => number_word(n),
        None => indefinite_article(&body).to_string(),
    };
    format!("{det} {body}")
}

fn later_mention(entity: &Entity) -> String {
    if entity.is_plural() {
        format!("the {}", pluralize(&entity.object))
    } else {
        format!("the {}", entity.object)
    }
}

/// Renders the surface text of `prompt` from its structured fields.
pub fn render(prompt: &StructuredPrompt) -> String {
    let mut mentioned = vec![false; prompt.entities.len()];
    let mention = |mentioned: &mut Vec<bool>, idx: usize| -> String {
        let entity = &prompt.entities[idx];
        if std::mem::replace(&mut mentioned[idx], true) {
            later_mention(entity)
        } else {
            first_mention(entity)
        }
    };
    let mut clauses = Vec::new();
    for rel in &prompt.relations {
        let subject = mention(&mut mentioned, rel.subject);
        let verb = match rel.kind {
            RelationKind::Action if prompt.entities[rel.subject].is_plural() => {
                format!("are {}", rel.phrase)
            }
            RelationKind::Action => format!("is {}", rel.phrase),
            _ => rel.phrase.clone(),
        };
        let object = mention(&mut mentioned, rel.object);
        clauses.push(format!("{subject} {verb} {object}"));
    }
    for idx in 0..prompt.entities.len() {
        if !mentioned[idx] {
            clauses.push(mention(&mut mentioned, idx));
        }
    }
    let mut text = join_clauses(&clauses);
    if !prompt.context.is_empty() {
        text.push(' ');
        text.push_str(&prompt.context.join(", "));
    }
    text
}

fn join_clauses(clauses: &[String]) -> String {
    match clauses {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

#[derive(Debug)]
enum Token {
    Sep,
    Indefinite,
    Definite,
    Number(u32),
    Attr(AttrKind, String),
    Object(String),
    Rel(RelationKind, String),
}

fn tokenize(text: &str, lex: &Lexicon) -> Result<Vec<Token>, String> {
    let lowered = text.trim().trim_end_matches('.').to_lowercase().replace(',', " , ");
    let words: Vec<&str> = lowered.split_whitespace().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let word = words[i];
        if word == "," || word == "and" {
            out.push(Token::Sep);
            i += 1;
            continue;
        }
        if word == "is" || word == "are" {
            let found = lex.longest_match(&words, i + 1, |e| match e {
                LexEntry::Action { phrase } => Some(phrase.clone()),
                _ => None,
            });
            if let Some((phrase, len)) = found {
                out.push(Token::Rel(RelationKind::Action, phrase));
                i += 1 + len;
                continue;
            }
            return Err(format!("`{word}` is not followed by a known action"));
        }
        if let Some(((kind, phrase), len)) = lex.longest_match(&words, i, |e| match e {
            LexEntry::Spatial { kind, phrase } => Some((*kind, phrase.clone())),
            _ => None,
        }) {
            out.push(Token::Rel(kind, phrase));
            i += len;
            continue;
        }
        match word {
            "a" | "an" => {
                out.push(Token::Indefinite);
                i += 1;
                continue;
            }
            "the" => {
                out.push(Token::Definite);
                i += 1;
                continue;
            }
            _ => {}
        }
        if let Some(n) = parse_number(word) {
            out.push(Token::Number(n));
            i += 1;
            continue;
        }
        if let Some((canonical, len)) = lex.longest_match(&words, i, |e| match e {
            LexEntry::Object { canonical, .. } => Some(canonical.clone()),
            _ => None,
        }) {
            out.push(Token::Object(canonical));
            i += len;
            continue;
        }
        if let Some(kind) = lex.attribute_kind(word) {
            out.push(Token::Attr(kind, word.to_string()));
            i += 1;
            continue;
        }
        return Err(format!("unknown word `{word}`"));
    }
    Ok(out)
}

enum Determiner {
    Indefinite,
    Definite,
    Number(u32),
}

/// Parses rendered text back into a structured prompt using `lex` for the
/// vocabulary. Context descriptors are not recoverable and must be absent.
pub fn parse(text: &str, category: Category, lex: &Lexicon) -> Result<StructuredPrompt, PromptError> {
    let fail = |reason: String| PromptError::Parse {
        text: text.to_string(),
        reason,
    };
    let tokens = tokenize(text, lex).map_err(fail)?;
    let mut entities: Vec<Entity> = Vec::new();
    let mut relations: Vec<Relation> = Vec::new();
    let mut pos = 0;

    let read_mention = |pos: &mut usize, entities: &mut Vec<Entity>| -> Result<usize, String> {
        let det = match tokens.get(*pos) {
            Some(Token::Indefinite) => Determiner::Indefinite,
            Some(Token::Definite) => Determiner::Definite,
            Some(Token::Number(n)) => Determiner::Number(*n),
            other => return Err(format!("expected a determiner, found {other:?}")),
        };
        *pos += 1;
        let mut attrs = Vec::new();
        while let Some(Token::Attr(kind, value)) = tokens.get(*pos) {
            attrs.push(super::Attribute::new(*kind, value.clone()));
            *pos += 1;
        }
        let object = match tokens.get(*pos) {
            Some(Token::Object(o)) => o.clone(),
            other => return Err(format!("expected an object, found {other:?}")),
        };
        *pos += 1;
        let existing = entities.iter().position(|e| e.object == object);
        match det {
            Determiner::Definite => {
                if !attrs.is_empty() {
                    return Err(format!("definite mention of `{object}` carries attributes"));
                }
                existing.ok_or_else(|| format!("`the {object}` refers to nothing"))
            }
            Determiner::Indefinite | Determiner::Number(_) => {
                if existing.is_some() {
                    return Err(format!("`{object}` introduced twice"));
                }
                let count = match det {
                    Determiner::Number(n) => Some(n),
                    _ => None,
                };
                entities.push(Entity {
                    object,
                    attributes: attrs,
                    count,
                });
                Ok(entities.len() - 1)
            }
        }
    };

    loop {
        let subject = read_mention(&mut pos, &mut entities).map_err(fail)?;
        if let Some(Token::Rel(kind, phrase)) = tokens.get(pos) {
            let (kind, phrase) = (*kind, phrase.clone());
            pos += 1;
            let object = read_mention(&mut pos, &mut entities).map_err(fail)?;
            relations.push(Relation::new(subject, kind, phrase, object));
        }
        match tokens.get(pos) {
            None => break,
            Some(Token::Sep) => {
                while matches!(tokens.get(pos), Some(Token::Sep)) {
                    pos += 1;
                }
            }
            Some(other) => return Err(fail(format!("unexpected {other:?}"))),
        }
    }
    StructuredPrompt::new(category, entities, relations)
}
