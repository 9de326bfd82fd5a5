use std::collections::HashMap;

use super::{AttrKind, KeywordPools, RelationKind};

const NUMBER_WORDS: [&str; 9] = [
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
];

/// Counts 1 through 9 as English words, larger counts as digits.
pub fn number_word(n: u32) -> String {
    match n {
        1..=9 => NUMBER_WORDS[(n - 1) as usize].to_string(),
        _ => n.to_string(),
    }
}

pub(crate) fn parse_number(word: &str) -> Option<u32> {
    if let Some(pos) = NUMBER_WORDS.iter().position(|w| *w == word) {
        return Some(pos as u32 + 1);
    }
    word.parse::<u32>().ok().filter(|n| *n >= 1)
}

const IRREGULAR_PLURALS: &[(&str, &str)] = &[
    ("man", "men"),
    ("woman", "women"),
    ("child", "children"),
    ("person", "people"),
    ("mouse", "mice"),
    ("goose", "geese"),
    ("tooth", "teeth"),
    ("foot", "feet"),
    ("sheep", "sheep"),
    ("fish", "fish"),
    ("deer", "deer"),
    ("leaf", "leaves"),
    ("knife", "knives"),
    ("scarf", "scarves"),
    ("wolf", "wolves"),
    ("bookshelf", "bookshelves"),
    ("shelf", "shelves"),
    ("cactus", "cacti"),
    ("tomato", "tomatoes"),
    ("potato", "potatoes"),
    ("mango", "mangoes"),
];

/// Plural of an object name; only the head (last) word is inflected.
pub fn pluralize(noun: &str) -> String {
    let (head_start, head) = match noun.rfind(' ') {
        Some(pos) => (pos + 1, &noun[pos + 1..]),
        None => (0, noun),
    };
    let prefix = &noun[..head_start];
    if let Some((_, plural)) = IRREGULAR_PLURALS.iter().find(|(s, _)| *s == head) {
        return format!("{prefix}{plural}");
    }
    let plural = if head.ends_with('s')
        || head.ends_with('x')
        || head.ends_with('z')
        || head.ends_with("ch")
        || head.ends_with("sh")
    {
        format!("{head}es")
    } else if head.ends_with('y')
        && !head
            .chars()
            .rev()
            .nth(1)
            .is_some_and(|c| "aeiou".contains(c))
    {
        format!("{}ies", &head[..head.len() - 1])
    } else {
        format!("{head}s")
    };
    format!("{prefix}{plural}")
}

pub(crate) fn indefinite_article(next_word: &str) -> &'static str {
    match next_word.chars().next() {
        Some(c) if "aeiou".contains(c) => "an",
        _ => "a",
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum LexEntry {
    Object { canonical: String, plural: bool },
    Attribute { kind: AttrKind, value: String },
    Spatial { kind: RelationKind, phrase: String },
    Action { phrase: String },
}

/// Word and phrase lookup tables built from a set of keyword pools.
#[derive(Clone, Debug)]
pub struct Lexicon {
    entries: HashMap<String, Vec<LexEntry>>,
    max_words: usize,
}

impl Lexicon {
    pub fn new(pools: &KeywordPools) -> Self {
        let mut lex = Self {
            entries: HashMap::new(),
            max_words: 1,
        };
        for obj in &pools.objects {
            lex.insert(
                obj,
                LexEntry::Object {
                    canonical: obj.clone(),
                    plural: false,
                },
            );
            let plural = pluralize(obj);
            if plural != *obj {
                lex.insert(
                    &plural,
                    LexEntry::Object {
                        canonical: obj.clone(),
                        plural: true,
                    },
                );
            }
        }
        for kind in AttrKind::ALL {
            for value in pools.attributes(kind) {
                lex.insert(
                    value,
                    LexEntry::Attribute {
                        kind,
                        value: value.clone(),
                    },
                );
            }
        }
        for sp in &pools.spatial {
            lex.insert(
                &sp.phrase,
                LexEntry::Spatial {
                    kind: sp.kind,
                    phrase: sp.phrase.clone(),
                },
            );
        }
        for action in &pools.actions {
            lex.insert(
                action,
                LexEntry::Action {
                    phrase: action.clone(),
                },
            );
        }
        lex
    }

    fn insert(&mut self, phrase: &str, entry: LexEntry) {
        self.max_words = self.max_words.max(phrase.split(' ').count());
        self.entries.entry(phrase.to_string()).or_default().push(entry);
    }

    pub(crate) fn lookup(&self, phrase: &str) -> &[LexEntry] {
        self.entries.get(phrase).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Longest phrase starting at `tokens[start]` with an entry accepted by
    /// `pick`. Returns the entry and the number of tokens consumed.
    pub(crate) fn longest_match<T>(
        &self,
        tokens: &[&str],
        start: usize,
        pick: impl Fn(&LexEntry) -> Option<T>,
    ) -> Option<(T, usize)> {
        let available = tokens.len().saturating_sub(start);
        for len in (1..=self.max_words.min(available)).rev() {
            let phrase = tokens[start..start + len].join(" ");
            if let Some(found) = self.lookup(&phrase).iter().find_map(&pick) {
                return Some((found, len));
            }
        }
        None
    }

    pub fn attribute_kind(&self, word: &str) -> Option<AttrKind> {
        self.lookup(word).iter().find_map(|e| match e {
            LexEntry::Attribute { kind, .. } => Some(*kind),
            _ => None,
        })
    }

    pub fn is_object(&self, phrase: &str) -> bool {
        self.lookup(phrase)
            .iter()
            .any(|e| matches!(e, LexEntry::Object { plural: false, .. }))
    }

    /// Canonical singular for a singular or plural object phrase.
    pub fn singular_object(&self, phrase: &str) -> Option<&str> {
        self.lookup(phrase).iter().find_map(|e| match e {
            LexEntry::Object { canonical, .. } => Some(canonical.as_str()),
            _ => None,
        })
    }

    pub fn relation_kind(&self, phrase: &str) -> Option<RelationKind> {
        self.lookup(phrase).iter().find_map(|e| match e {
            LexEntry::Spatial { kind, .. } => Some(*kind),
            LexEntry::Action { .. } => Some(RelationKind::Action),
            _ => None,
        })
    }
}
