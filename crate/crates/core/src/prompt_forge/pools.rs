use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{pluralize, AttrKind, ForgeError, RelationKind};
use crate::backend::Backend;
use crate::fewshot;
use crate::rng;

const BUILTIN_OBJECTS: &[&str] = &[
    // animals
    "dog", "cat", "horse", "cow", "sheep", "rabbit", "bird", "owl", "duck", "elephant",
    "giraffe", "zebra", "lion", "tiger", "bear", "monkey", "fox", "deer", "turtle", "frog",
    "fish", "butterfly", "penguin", "squirrel",
    // people
    "man", "woman", "child", "girl", "boy", "chef", "teacher", "farmer",
    // plants
    "rose", "tulip", "sunflower", "cactus", "tree", "fern", "daisy", "mushroom",
    // fruit and vegetables
    "apple", "banana", "pear", "peach", "lemon", "strawberry", "watermelon", "pineapple",
    "cherry", "mango", "tomato", "carrot", "pumpkin", "sweet potato", "onion",
    // household
    "chair", "sofa", "table", "desk", "lamp", "bed", "mirror", "clock", "vase", "bowl",
    "cup", "mug", "plate", "bottle", "candle", "pillow", "rug", "bench", "bookshelf",
    "teapot", "coffee cup", "spoon", "knife", "fork", "basket", "bucket", "umbrella", "key",
    "light bulb", "toothbrush",
    // clothing
    "shirt", "jacket", "hat", "scarf", "shoe", "boot", "sock", "dress", "glove", "backpack",
    "blouse", "sweater",
    // vehicles
    "car", "bicycle", "bus", "truck", "train", "boat", "airplane", "motorcycle", "scooter",
    "tractor",
    // food
    "pizza", "sushi", "cake", "sandwich", "donut", "pancake", "cookie", "burger",
    // instruments and electronics
    "guitar", "piano", "violin", "laptop", "cell phone",
];

const BUILTIN_COLORS: &[&str] = &[
    "red", "blue", "green", "yellow", "black", "white", "orange", "pink", "purple", "brown",
    "gray", "cyan", "magenta", "lime", "indigo", "teal", "navy", "beige", "maroon", "olive",
    "gold", "silver", "turquoise", "violet", "lavender", "crimson", "scarlet", "amber",
    "ivory", "khaki", "coral", "salmon", "plum", "mint", "cream", "tan", "charcoal",
    "burgundy", "mustard", "aqua", "azure", "bronze", "emerald", "jade", "ruby", "sapphire",
    "ochre", "mauve", "lilac", "fuchsia", "rust", "sienna", "taupe", "periwinkle",
    "chartreuse", "cerulean", "cobalt", "vermilion", "sepia", "ebony", "pearl", "sand",
    "slate", "tangerine", "auburn", "cinnamon", "honey", "wine", "apricot", "blush",
];

const BUILTIN_SHAPES: &[&str] = &[
    "diamond", "square", "pyramidal", "triangular", "rectangular", "oval", "short",
    "teardrop", "cubic", "oblong", "circular", "small", "spherical", "conical",
    "cylindrical", "heart-shaped", "big", "spiral", "tall", "round", "flat", "long", "wide",
    "narrow", "thin", "thick", "curved", "straight", "hexagonal", "octagonal", "pentagonal",
    "star-shaped", "crescent", "elliptical", "domed", "arched", "angular", "pointed",
    "tapered", "boxy", "bulky", "slender", "squat", "stubby", "chunky", "petite", "tiny",
    "huge", "giant", "massive", "compact", "elongated", "rounded", "jagged", "wavy",
    "zigzag", "twisted", "crooked", "lopsided", "symmetrical", "asymmetrical", "hollow",
    "bulbous", "concave", "convex", "tubular", "wedge-shaped", "semicircular", "trapezoidal",
    "ring-shaped",
];

const BUILTIN_TEXTURES: &[&str] = &[
    "rubber", "metallic", "leather", "fabric", "wooden", "rough", "smooth", "soft", "fluffy",
    "glass", "gritty", "silky", "woolly", "grainy", "velvety", "bumpy", "slick", "crinkled",
    "coarse", "porous", "plastic", "ceramic", "marble", "stone", "furry", "fuzzy", "glossy",
    "matte", "shiny", "sparkly", "sticky", "slimy", "spiky", "prickly", "scaly", "feathery",
    "knitted", "woven", "wrinkled", "polished", "rusty", "cracked", "dusty", "muddy", "wet",
    "dry", "frosted", "icy", "waxy", "powdery", "sandy", "crumbly", "crispy", "crunchy",
    "spongy", "rubbery", "satin", "suede", "denim", "linen", "cotton", "wicker", "bamboo",
    "brick", "concrete", "paper", "cardboard", "mossy", "hairy", "quilted",
];

const BUILTIN_SPATIAL_2D: &[&str] = &[
    "on the left of", "on the right of", "to the left of", "to the right of", "above",
    "below", "next to", "beside", "near", "on top of", "under", "beneath", "over",
    "on the side of", "close to", "far from", "adjacent to", "alongside", "opposite to",
    "across from", "around", "against", "at the bottom of", "underneath",
];

const BUILTIN_SPATIAL_3D: &[&str] = &[
    "in front of", "behind", "inside", "hidden by", "in the middle of", "surrounded by",
    "in the back of", "enclosed by", "leaning against", "stacked on", "in the shadow of",
    "obscured by", "nestled in", "tucked behind", "in the foreground of",
    "in the background of",
];

const BUILTIN_ACTIONS: &[&str] = &[
    "holding", "watching", "wearing", "riding", "feeding", "carrying", "chasing", "pushing",
    "pulling", "looking at", "talking to", "playing with", "walking with", "standing on",
    "sitting on", "eating", "hugging", "kicking", "painting", "touching", "washing",
    "throwing", "catching", "smelling",
];

const BUILTIN_AGENTS: &[&str] = &[
    "man", "woman", "child", "girl", "boy", "chef", "teacher", "farmer", "dog", "cat",
    "monkey", "bear",
];

/// Subjects able to carry an action relation, restricted to `pools`.
pub fn builtin_agents(pools: &KeywordPools) -> Vec<String> {
    let agents: Vec<String> = BUILTIN_AGENTS
        .iter()
        .filter(|a| pools.objects.iter().any(|o| o == *a))
        .map(|a| a.to_string())
        .collect();
    if agents.is_empty() {
        pools.objects.clone()
    } else {
        agents
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Objects,
    Colors,
    Shapes,
    Textures,
    Spatial,
}

impl PoolKind {
    pub const ALL: [PoolKind; 5] = [
        PoolKind::Objects,
        PoolKind::Colors,
        PoolKind::Shapes,
        PoolKind::Textures,
        PoolKind::Spatial,
    ];
}

impl fmt::Display for PoolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PoolKind::Objects => "objects",
            PoolKind::Colors => "colors",
            PoolKind::Shapes => "shapes",
            PoolKind::Textures => "textures",
            PoolKind::Spatial => "spatial",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialPhrase {
    pub phrase: String,
    pub kind: RelationKind,
}

/// Vocabularies for template filling. Entries are lowercase and unique;
/// attribute pools are disjoint from each other and from object names so
/// that rendered prompts parse unambiguously.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordPools {
    pub objects: Vec<String>,
    pub colors: Vec<String>,
    pub shapes: Vec<String>,
    pub textures: Vec<String>,
    pub spatial: Vec<SpatialPhrase>,
    /// Verb phrases for action relations.
    pub actions: Vec<String>,
}

fn owned(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

impl KeywordPools {
    pub fn builtin() -> Self {
        let spatial = BUILTIN_SPATIAL_2D
            .iter()
            .map(|p| SpatialPhrase {
                phrase: p.to_string(),
                kind: RelationKind::Spatial2d,
            })
            .chain(BUILTIN_SPATIAL_3D.iter().map(|p| SpatialPhrase {
                phrase: p.to_string(),
                kind: RelationKind::Spatial3d,
            }))
            .collect();
        Self {
            objects: owned(BUILTIN_OBJECTS),
            colors: owned(BUILTIN_COLORS),
            shapes: owned(BUILTIN_SHAPES),
            textures: owned(BUILTIN_TEXTURES),
            spatial,
            actions: owned(BUILTIN_ACTIONS),
        }
    }

    pub fn attributes(&self, kind: AttrKind) -> &[String] {
        match kind {
            AttrKind::Color => &self.colors,
            AttrKind::Shape => &self.shapes,
            AttrKind::Texture => &self.textures,
        }
    }

    pub fn len_of(&self, pool: PoolKind) -> usize {
        match pool {
            PoolKind::Objects => self.objects.len(),
            PoolKind::Colors => self.colors.len(),
            PoolKind::Shapes => self.shapes.len(),
            PoolKind::Textures => self.textures.len(),
            PoolKind::Spatial => self.spatial.len(),
        }
    }

    pub fn spatial_of(&self, kind: RelationKind) -> Vec<&str> {
        self.spatial
            .iter()
            .filter(|s| s.kind == kind)
            .map(|s| s.phrase.as_str())
            .collect()
    }

    pub fn validate(&self) -> Result<(), ForgeError> {
        let bad = |msg: String| Err(ForgeError::InvalidPools(msg));
        let spatial: Vec<String> = self.spatial.iter().map(|s| s.phrase.clone()).collect();
        let named: [(&str, &Vec<String>); 6] = [
            ("objects", &self.objects),
            ("colors", &self.colors),
            ("shapes", &self.shapes),
            ("textures", &self.textures),
            ("spatial", &spatial),
            ("actions", &self.actions),
        ];
        let mut all_words = BTreeSet::new();
        for (name, pool) in named {
            if pool.is_empty() {
                return bad(format!("{name} pool is empty"));
            }
            let mut seen = BTreeSet::new();
            for entry in pool {
                if !is_clean(entry) {
                    return bad(format!("{name} entry `{entry}` is not a clean lowercase term"));
                }
                if !seen.insert(entry.as_str()) {
                    return bad(format!("{name} entry `{entry}` is duplicated"));
                }
                if !all_words.insert(entry.as_str()) {
                    return bad(format!("`{entry}` appears in more than one pool"));
                }
            }
        }
        for kind in AttrKind::ALL {
            if let Some(w) = self.attributes(kind).iter().find(|w| w.contains(' ')) {
                return bad(format!("attribute `{w}` must be a single word"));
            }
        }
        let attribute_words: BTreeSet<&str> = AttrKind::ALL
            .iter()
            .flat_map(|k| self.attributes(*k).iter().map(String::as_str))
            .collect();
        let mut inflected = BTreeSet::new();
        for obj in &self.objects {
            if let Some(first) = obj.split(' ').next() {
                if obj.contains(' ') && attribute_words.contains(first) {
                    return bad(format!("object `{obj}` starts with an attribute word"));
                }
            }
            let plural = pluralize(obj);
            if plural != *obj && self.objects.contains(&plural) {
                return bad(format!("plural of `{obj}` collides with another object"));
            }
            if !inflected.insert(plural) {
                return bad(format!("plural of `{obj}` is not unique"));
            }
        }
        for phrase in spatial.iter().chain(&self.actions) {
            let padded = format!(" {phrase} ");
            if let Some(obj) = self
                .objects
                .iter()
                .find(|o| padded.contains(&format!(" {o} ")) || padded.contains(&format!(" {} ", pluralize(o))))
            {
                return bad(format!("phrase `{phrase}` contains the object noun `{obj}`"));
            }
        }
        Ok(())
    }
}

fn is_clean(entry: &str) -> bool {
    !entry.is_empty()
        && entry.trim() == entry
        && !entry.contains("  ")
        && entry
            .chars()
            .all(|c| c.is_ascii_lowercase() || c == ' ' || c == '-')
}

/// Per-pool minimum sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolTargets {
    pub objects: usize,
    pub colors: usize,
    pub shapes: usize,
    pub textures: usize,
    pub spatial: usize,
}

impl Default for PoolTargets {
    fn default() -> Self {
        Self {
            objects: 120,
            colors: 70,
            shapes: 70,
            textures: 70,
            spatial: 40,
        }
    }
}

impl PoolTargets {
    pub fn get(&self, pool: PoolKind) -> usize {
        match pool {
            PoolKind::Objects => self.objects,
            PoolKind::Colors => self.colors,
            PoolKind::Shapes => self.shapes,
            PoolKind::Textures => self.textures,
            PoolKind::Spatial => self.spatial,
        }
    }
}

pub enum PoolSource<'a> {
    Builtin,
    /// Few-shot keyword generation; `max_attempts` bounds the requests per pool.
    Backend {
        backend: &'a dyn Backend,
        max_attempts: usize,
    },
}

/// Builds keyword pools from the builtin vocabulary or from a backend.
///
/// The builtin source ignores `seed` and returns the full static pools.
/// The backend source requests comma-separated keyword lists, deduplicates
/// them and keeps asking until every pool reaches its target.
pub fn build_keyword_pools(
    source: PoolSource<'_>,
    seed: u64,
    targets: PoolTargets,
) -> Result<KeywordPools, ForgeError> {
    for pool in PoolKind::ALL {
        if targets.get(pool) == 0 {
            return Err(ForgeError::InvalidRequest(format!(
                "target for {pool} must be at least 1"
            )));
        }
    }
    match source {
        PoolSource::Builtin => {
            let pools = KeywordPools::builtin();
            for pool in PoolKind::ALL {
                let got = pools.len_of(pool);
                if got < targets.get(pool) {
                    return Err(ForgeError::PoolExhausted {
                        pool,
                        got,
                        target: targets.get(pool),
                        attempts: 1,
                    });
                }
            }
            Ok(pools)
        }
        PoolSource::Backend {
            backend,
            max_attempts,
        } => build_from_backend(backend, max_attempts, seed, targets),
    }
}

fn build_from_backend(
    backend: &dyn Backend,
    max_attempts: usize,
    seed: u64,
    targets: PoolTargets,
) -> Result<KeywordPools, ForgeError> {
    let builtin_3d: BTreeSet<&str> = BUILTIN_SPATIAL_3D.iter().copied().collect();
    let mut taken: BTreeSet<String> = BUILTIN_ACTIONS.iter().map(|s| s.to_string()).collect();
    let mut collected: Vec<Vec<String>> = Vec::new();
    for pool in PoolKind::ALL {
        let target = targets.get(pool);
        let messages = fewshot::keyword_messages(pool);
        let mut entries: Vec<String> = Vec::new();
        let mut attempts = 0;
        while entries.len() < target {
            if attempts == max_attempts {
                return Err(ForgeError::PoolExhausted {
                    pool,
                    got: entries.len(),
                    target,
                    attempts,
                });
            }
            let attempt_seed = rng::derive_seed(seed, &["pools", &pool.to_string(), &attempts.to_string()]);
            attempts += 1;
            let reply = backend.text_complete(&messages, attempt_seed)?;
            for raw in reply.split([',', '\n']) {
                let word = raw
                    .trim()
                    .trim_end_matches('.')
                    .to_lowercase()
                    .split_whitespace()
                    .collect::<Vec<_>>()
                    .join(" ");
                if !is_clean(&word) || taken.contains(&word) {
                    continue;
                }
                let is_attribute = matches!(pool, PoolKind::Colors | PoolKind::Shapes | PoolKind::Textures);
                if is_attribute && word.contains(' ') {
                    continue;
                }
                if pool == PoolKind::Spatial && mentions_object(&word, &collected[0]) {
                    continue;
                }
                taken.insert(word.clone());
                entries.push(word);
            }
        }
        collected.push(entries);
    }
    let spatial = collected
        .pop()
        .unwrap_or_default()
        .into_iter()
        .map(|phrase| SpatialPhrase {
            kind: if builtin_3d.contains(phrase.as_str()) {
                RelationKind::Spatial3d
            } else {
                RelationKind::Spatial2d
            },
            phrase,
        })
        .collect();
    let textures = collected.pop().unwrap_or_default();
    let shapes = collected.pop().unwrap_or_default();
    let colors = collected.pop().unwrap_or_default();
    let objects = collected.pop().unwrap_or_default();
    Ok(KeywordPools {
        objects,
        colors,
        shapes,
        textures,
        spatial,
        actions: owned(BUILTIN_ACTIONS),
    })
}

fn mentions_object(phrase: &str, objects: &[String]) -> bool {
    let padded = format!(" {phrase} ");
    objects
        .iter()
        .any(|o| padded.contains(&format!(" {o} ")) || padded.contains(&format!(" {} ", pluralize(o))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_sizes() {
        let pools = KeywordPools::builtin();
        assert_eq!(pools.objects.len(), 120);
        assert_eq!(pools.colors.len(), 70);
        assert_eq!(pools.shapes.len(), 70);
        assert_eq!(pools.textures.len(), 70);
        assert_eq!(pools.spatial.len(), 40);
    }

    #[test]
    fn builtin_pools_are_valid() {
        KeywordPools::builtin().validate().unwrap();
    }

    #[test]
    fn builtin_is_deterministic_and_meets_defaults() {
        let a = build_keyword_pools(PoolSource::Builtin, 1, PoolTargets::default()).unwrap();
        let b = build_keyword_pools(PoolSource::Builtin, 99, PoolTargets::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn builtin_cannot_exceed_its_size() {
        let targets = PoolTargets {
            objects: 500,
            ..PoolTargets::default()
        };
        assert!(matches!(
            build_keyword_pools(PoolSource::Builtin, 0, targets),
            Err(ForgeError::PoolExhausted {
                pool: PoolKind::Objects,
                ..
            })
        ));
    }

    #[test]
    fn zero_target_is_rejected() {
        let targets = PoolTargets {
            spatial: 0,
            ..PoolTargets::default()
        };
        assert!(matches!(
            build_keyword_pools(PoolSource::Builtin, 0, targets),
            Err(ForgeError::InvalidRequest(_))
        ));
    }

    #[test]
    fn validation_rejects_object_in_spatial_phrase() {
        let mut pools = KeywordPools::builtin();
        pools.spatial.push(SpatialPhrase {
            phrase: "on the table".into(),
            kind: RelationKind::Spatial2d,
        });
        assert!(pools.validate().is_err());
    }
}
