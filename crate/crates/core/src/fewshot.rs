//! Few-shot chat messages for backend-driven generation, and parsers for the
//! replies.
//!
//! The message texts are a wire protocol: a remote model sees exactly these
//! system prompts and exemplars, and the simulator recognizes them to serve
//! matching fixture transcripts.

use crate::backend::ChatMessage;
use crate::prompt_forge::{Category, PoolKind, StructuredPrompt};

const OBJECTS_SYSTEM: &str = "You are a helpful assistant that generates common object spanning various categories, including animals, plants, fruits, household items, clothing, vehicles, food, musical instruments, and electronic devices.";
const COLORS_SYSTEM: &str = "You are a helpful assistant that generates common colors spanning various categories, including animals, plants, fruits, household items, clothing, vehicles, food, musical instruments, and electronic devices.";
const SHAPES_SYSTEM: &str = "You are a helpful assistant that generates common shape spanning various categories, including animals, plants, fruits, household items, clothing, vehicles, food, musical instruments, and electronic devices.\nAvoid containing objects names in the output.";
const TEXTURES_SYSTEM: &str = "You are a helpful assistant that generates common texture spanning various categories, including animals, plants, fruits, household items, clothing, vehicles, food, musical instruments, and electronic devices.";
const SPATIAL_SYSTEM: &str = "You are a helpful assistant that generates common spatial relative word or phrase spanning various categories, including animals, plants, fruits, household items, clothing, vehicles, food, musical instruments, and electronic devices.\nContain only one spatial relative phrase.\nAvoid compound spatial relative word such as farther up for the right of, closer down for the left of, etc.\nAvoid containing objects names such as image, window, screen, etc. in the output.";

const NON_SPATIAL_SYSTEM: &str = "You are an assistant dedicated to generating natural prompts that contain subjects and objects by using nonspatial relationship words such as wear, watch, speak, hold, have, run, look at, talk to, jump, play, walk with, stand on, and sit on.";
const NON_SPATIAL_USER: &str = "Generate a prompt that contains subjects and objects by using non-spatial relationship words.";
const COMPLEX_SYSTEM: &str = "You are an assistant dedicated to generating natural compositional phrases or prompts, containing multiple objects (number >= 2) with one or several adjectives from color, shape, and texture descriptions and spatial (left/right/top/bottom/next to/near/on side of) or nonspatial relationships.";
const COMPLEX_USER: &str = "Please generate a compositional phrase or sentence containing multiple objects with one or several adjectives and relationships.";

const DENSE_PREAMBLE: &str = "You are an expert prompt engineer for text-to-image models. Your job is to take short and vague prompts and expand them into detailed, descriptive, and unambiguous prompts suitable for high-quality image generation.";
const DENSE_STEPS: &str = "Avoid abstract or subjective words and instead use concrete and visual language.\nDo not invent unrelated concepts; Only expand and clarify the given prompt.\nFollow these steps:\nStep 1. Extract all objects and their visual attributes from Prompt 1.\nStep 2. For Prompt 1, write a long, rich description that includes all identified objects and attributes from Step 1.\nStep 3. Extract all objects and their visual attributes from Prompt 2.\nStep 4. For Prompt 2, write a long, rich description that includes all identified objects and attributes from Step 3.\nEnsure both outputs share a similar global context or scene.";

const QUESTION_SYSTEM: &str = "You are an assistant dedicated to transforming a sentence into several questions. You should first divide it into simple concepts and relations, and then provide the corresponding questions. Avoid using pronouns, such as he, she, it, and they.";

fn system(text: impl Into<String>) -> ChatMessage {
    ChatMessage::new("system", text)
}

fn user(text: impl Into<String>) -> ChatMessage {
    ChatMessage::new("user", text)
}

fn assistant(text: impl Into<String>) -> ChatMessage {
    ChatMessage::new("assistant", text)
}

/// Messages asking for one comma-separated batch of keywords.
pub fn keyword_messages(pool: PoolKind) -> Vec<ChatMessage> {
    let (sys, ask, shots): (&str, &str, [&str; 2]) = match pool {
        PoolKind::Objects => (
            OBJECTS_SYSTEM,
            "Generate common objects spanning various categories.",
            [
                "dog, rose, apple, chair, shirt, car, pizza, guitar, cell phone",
                "cat, cactus, banana, sofa, jacket, bicycle, sushi, piano, laptop",
            ],
        ),
        PoolKind::Colors => (
            COLORS_SYSTEM,
            "Generate common colors spanning various categories.\nOutput only simple color names (e.g., red, blue, gray). Avoid compound colors (e.g., dark gray, light blue).",
            [
                "red, blue, green, yellow, black, white, orange, pink, purple, brown",
                "cyan, magenta, lime, indigo, teal, navy, beige, maroon, olive, gold",
            ],
        ),
        PoolKind::Shapes => (
            SHAPES_SYSTEM,
            "Generate common shape spanning various categories.\nAvoid compound shape.\nAvoid object names like car, house...",
            [
                "diamond, square, pyramidal, triangular, rectangular, oval, short, teardrop, cubic, oblong",
                "circular, small, spherical, conical, cylindrical, heart, big, spiral, tall",
            ],
        ),
        PoolKind::Textures => (
            TEXTURES_SYSTEM,
            "Generate common texture spanning various categories.\nAvoid compound texture.",
            [
                "rubber, metallic, leather, fabric, wooden, rough, smooth, soft, fluffy, glass",
                "gritty, silky, woolly, grainy, velvety, bumpy, slick, crinkled, coarse, porous",
            ],
        ),
        PoolKind::Spatial => (
            SPATIAL_SYSTEM,
            "Generate common spatial relative word or phrase spanning various categories.\nAvoid compound spatial relative word.",
            [
                "in the left of, among, above, below, beside, opposite to, next to, above of, below of, beside of",
                "in the right of, in the middle of, in front of, hidden by, top of, next to",
            ],
        ),
    };
    vec![
        system(sys),
        user(ask),
        assistant(shots[0]),
        user(ask),
        assistant(shots[1]),
        user(ask),
    ]
}

/// Messages asking for one NonSpatial or Complex base prompt.
///
/// # Panics
/// For template categories (Attribute, Layout), which never use a backend.
pub fn prompt_generation_messages(category: Category) -> Vec<ChatMessage> {
    match category {
        Category::NonSpatial => vec![
            system(NON_SPATIAL_SYSTEM),
            user(NON_SPATIAL_USER),
            assistant("Two friends are watching a movie together on a large TV screen."),
            user(NON_SPATIAL_USER),
            assistant("Two athletes are running along the beach as the sun sets behind them."),
            user(NON_SPATIAL_USER),
        ],
        Category::Complex => vec![
            system(COMPLEX_SYSTEM),
            user(COMPLEX_USER),
            assistant("The fluffy white cat sat next to the black leather couch."),
            user(COMPLEX_USER),
            assistant("The sleek black phone rested beside the textured brown leather wallet."),
            user(COMPLEX_USER),
            assistant("The red spherical balloon floated above the striped rectangular kite and the green triangular flag."),
            user(COMPLEX_USER),
        ],
        Category::Attribute | Category::Layout => {
            panic!("{category} prompts are template-generated")
        }
    }
}

/// Which densification exemplar family a pair belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DenseFamily {
    Attribute,
    Spatial,
    Numeracy,
    NonSpatial,
    Complex,
}

impl DenseFamily {
    pub fn of(prompt: &StructuredPrompt) -> Self {
        match prompt.category {
            Category::Attribute => DenseFamily::Attribute,
            Category::Layout if !prompt.relations.is_empty() => DenseFamily::Spatial,
            Category::Layout => DenseFamily::Numeracy,
            Category::NonSpatial => DenseFamily::NonSpatial,
            Category::Complex => DenseFamily::Complex,
        }
    }

    fn focus(self) -> &'static str {
        match self {
            DenseFamily::Attribute | DenseFamily::Complex => {
                "Focus on using full sentences and include visual attributes such as objects, colors, texture, shape."
            }
            DenseFamily::Spatial => {
                "Focus on using full sentences and include visual attributes such as objects and 2d, 3d spatial relations."
            }
            DenseFamily::Numeracy => {
                "Focus on using full sentences and include visual attributes such as objects and numeracy."
            }
            DenseFamily::NonSpatial => {
                "Focus on using full sentences and include visual attributes such as actions."
            }
        }
    }

    fn request(self) -> &'static str {
        match self {
            DenseFamily::NonSpatial => "Generate dense, detailed prompts. Ensure both outputs share a similar global context or scene but have different action-related (non-spatial) bindings. Let's think step by step.",
            _ => "Generate dense, detailed prompts. Ensure both outputs share a similar global context or scene but have different object-attribute bindings. Let's think step by step.",
        }
    }

    fn exemplar(self) -> (&'static str, &'static str, &'static str) {
        match self {
            DenseFamily::Attribute => (
                "A large watermelon",
                "A small watermelon",
                "Step 1. Prompt 1 Object Bindings: watermelon-['large']\nStep 2. Prompt 1 Dense: A large, ripe watermelon with deep green rinds and faint striping rests heavily in a handwoven wicker basket placed on the grass under dappled sunlight beside a weathered garden shed.\nStep 3. Prompt 2 Object Bindings: watermelon-['small']\nStep 4. Prompt 2 Dense: A small, round watermelon with bright green skin and subtle mottling sits neatly in a handwoven wicker basket placed on the grass under dappled sunlight beside a weathered garden shed.",
            ),
            DenseFamily::Spatial => (
                "A tall cactus behind a metal chair",
                "A short cactus in front of a metal chair",
                "Step 1. Prompt 1 Object Bindings: ['tall cactus', 'behind', 'metal chair']\nStep 2. Prompt 1 Dense: A tall green cactus in a terracotta pot stands behind a minimalist metal chair on a sunlit balcony, its spines casting elongated shadows across the concrete floor.\nStep 3. Prompt 2 Object Bindings: ['short cactus', 'in front of', 'metal chair']\nStep 4. Prompt 2 Dense: A short, stubby cactus in a terracotta pot sits in front of a minimalist metal chair on a sunlit balcony, its compact form creating a rounded shadow on the concrete floor.",
            ),
            DenseFamily::Numeracy => (
                "Two chairs and three lamps",
                "Four chairs and one lamp",
                "Step 1. Prompt 1 Object Bindings: ['two', 'chairs']; ['three', 'lamps']\nStep 2. Prompt 1 Dense: Two mid-century wooden chairs with curved backs are arranged near a coffee table, while three brass floor lamps cast warm pools of light around the cozy room.\nStep 3. Prompt 2 Object Bindings: ['four chairs', 'one lamp']\nStep 4. Prompt 2 Dense: Four sleek wooden chairs are evenly spaced around a coffee table, with a single tall brass floor lamp casting a gentle glow from the corner of the room.",
            ),
            DenseFamily::NonSpatial => (
                "A child is crouched in the garden, digging into the soil with a small trowel.",
                "A child is crouched in the garden, observing ants crawling across a rock with great fascination.",
                "Step 1. Prompt 1 Object Bindings: child-['crouched', 'digging soil']; tool-['small trowel']; garden\nStep 2. Prompt 1 Dense: A child crouches low in a sunny backyard garden, using a small blue trowel to dig carefully into the soft soil, their sleeves rolled up and cheeks dusted with earth.\nStep 3. Prompt 2 Object Bindings: child-['crouched', 'observing ants']; rock; garden\nStep 4. Prompt 2 Dense: A child crouches in the same garden, completely absorbed in watching a trail of ants move across a mossy rock, their eyes wide with curiosity as they follow each tiny movement.",
            ),
            DenseFamily::Complex => (
                "the vibrant orange flowers sprouted on the tall, bare green stalks next to the lush, leafy branches of the big ancient oak tree.",
                "the short, leafy green stalks sprouted vibrant yellow flowers next to the small, ancient leafless oak tree.",
                "Step 1. Prompt 1 Object Bindings: flowers-['vibrant', 'orange'], stalks-['tall', 'bare', 'green'], oak tree-['big', 'ancient', 'lush', 'leafy']\nStep 2. Prompt 1 Dense: The vibrant orange flowers sprouted atop tall, bare green stalks, standing proudly next to the lush, leafy branches of a big, ancient oak tree.\nStep 3. Prompt 2 Object Bindings: flowers-['vibrant', 'yellow'], stalks-['short', 'leafy', 'green'], oak tree-['small', 'ancient', 'leafless']\nStep 4. Prompt 2 Dense: The vibrant yellow flowers sprouted from short, leafy green stalks, positioned beside the small, ancient, leafless oak tree.",
            ),
        }
    }
}

fn dense_user(family: DenseFamily, base: &str, negative: &str) -> String {
    format!("Prompt 1: {base}\nPrompt 2: {negative}\n{}", family.request())
}

/// Messages asking for a jointly densified (base, negative) pair.
pub fn densify_messages(family: DenseFamily, base: &str, negative: &str) -> Vec<ChatMessage> {
    let (ex_base, ex_negative, ex_reply) = family.exemplar();
    vec![
        system(format!("{DENSE_PREAMBLE}\n{}\n{DENSE_STEPS}", family.focus())),
        user(dense_user(family, ex_base, ex_negative)),
        assistant(ex_reply),
        user(dense_user(family, base, negative)),
    ]
}

/// Messages asking for the local questions of `prompt`.
pub fn question_messages(category: Category, prompt: &str) -> Vec<ChatMessage> {
    let shots: &[(&str, &str)] = match category {
        Category::Attribute => &[
            ("A white harp and a rust soup.", "Concepts and relations: a white harp, a rust soup; Questions: Is there a white harp? Is there a rust soup?"),
            ("Shiny mop and metal key holder.", "Concepts and relations: a shiny mop, a metal key holder; Questions: Is there a shiny mop? Is there a metal key holder?"),
        ],
        Category::Layout => &[
            ("A pancake on the left of a pasta.", "Concepts and relations: a pancake, a pasta, a pancake is on the left of a pasta; Questions: Is there a pancake? Is there a pasta? Is a pancake on the left of a pasta?"),
            ("Three light bulbs and eight pumpkins.", "Concepts and relations: three light bulbs, eight pumpkins; Questions: Are there three light bulbs? Are there eight pumpkins?"),
        ],
        Category::NonSpatial | Category::Complex => &[
            ("A chef is holding a knife and preparing a dish on the stove.", "Concepts and relations: a chef, a knife, a dish, the stove, a chef is holding a knife, a chef is preparing a dish; Questions: Is there a chef? Is there a knife? Is there a dish? Is there a stove? Is a chef holding a knife? Is a chef preparing a dish?"),
            ("The green teapot is located near the round oak table.", "Concepts and relations: a green teapot, a round oak table, the green teapot is near the round oak table, the round oak table is near the green teapot; Questions: Is there a green teapot? Is there a round oak table? Is the green teapot near the round oak table? Is the round oak table near the green teapot?"),
        ],
    };
    let mut out = vec![system(QUESTION_SYSTEM)];
    for (q, a) in shots {
        out.push(user(*q));
        out.push(assistant(*a));
    }
    out.push(user(prompt));
    out
}

/// The task a message list asks for, recognized from its system prompt and
/// final user turn.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Task {
    Keywords(PoolKind),
    Prompt(Category),
    Densify {
        family: DenseFamily,
        base: String,
        negative: String,
    },
    Questions { prompt: String },
}

pub fn recognize(messages: &[ChatMessage]) -> Option<Task> {
    let sys = messages.iter().find(|m| m.role == "system")?.text.as_str();
    let last = messages.iter().rev().find(|m| m.role == "user")?.text.as_str();
    let keyword = [
        (OBJECTS_SYSTEM, PoolKind::Objects),
        (COLORS_SYSTEM, PoolKind::Colors),
        (SHAPES_SYSTEM, PoolKind::Shapes),
        (TEXTURES_SYSTEM, PoolKind::Textures),
        (SPATIAL_SYSTEM, PoolKind::Spatial),
    ];
    if let Some((_, pool)) = keyword.iter().find(|(s, _)| *s == sys) {
        return Some(Task::Keywords(*pool));
    }
    if sys == NON_SPATIAL_SYSTEM {
        return Some(Task::Prompt(Category::NonSpatial));
    }
    if sys == COMPLEX_SYSTEM {
        return Some(Task::Prompt(Category::Complex));
    }
    if sys == QUESTION_SYSTEM {
        return Some(Task::Questions {
            prompt: last.to_string(),
        });
    }
    if sys.starts_with(DENSE_PREAMBLE) {
        let family = [
            DenseFamily::Attribute,
            DenseFamily::Spatial,
            DenseFamily::Numeracy,
            DenseFamily::NonSpatial,
        ]
        .into_iter()
        .find(|f| sys.contains(f.focus()))?;
        let base = last.lines().find_map(|l| l.strip_prefix("Prompt 1: "))?;
        let negative = last.lines().find_map(|l| l.strip_prefix("Prompt 2: "))?;
        // Attribute and Complex share a focus line; the exemplar tells them apart.
        let family = if family == DenseFamily::Attribute
            && messages
                .iter()
                .any(|m| m.text.contains(DenseFamily::Complex.exemplar().0))
        {
            DenseFamily::Complex
        } else {
            family
        };
        return Some(Task::Densify {
            family,
            base: base.to_string(),
            negative: negative.to_string(),
        });
    }
    None
}

/// The two dense prompts from a Step 1..Step 4 transcript, or a description
/// of what is missing.
pub fn parse_dense_transcript(text: &str) -> Result<(String, String), String> {
    let step = |prefix: &str| -> Result<String, String> {
        text.lines()
            .find_map(|l| l.trim().strip_prefix(prefix))
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| format!("missing `{prefix}` line"))
    };
    Ok((step("Step 2. Prompt 1 Dense:")?, step("Step 4. Prompt 2 Dense:")?))
}

/// The questions of a "Concepts and relations: ...; Questions: ..." reply.
pub fn parse_questions(text: &str) -> Result<Vec<String>, String> {
    let (_, tail) = text
        .split_once("Questions:")
        .ok_or_else(|| "missing `Questions:` segment".to_string())?;
    let questions: Vec<String> = tail
        .split_inclusive('?')
        .map(str::trim)
        .filter(|q| q.ends_with('?') && q.len() > 1)
        .map(str::to_string)
        .collect();
    if questions.is_empty() {
        return Err("no questions after `Questions:`".into());
    }
    Ok(questions)
}
