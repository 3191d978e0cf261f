//! Deterministic English-like text for tests, demos and desk-scale runs.
//!
//! Documents carry a title, a topic and a cast of named characters that
//! recur across paragraphs, giving both short-range (word spelling, phrase
//! templates) and long-range (document topic, names) regularities.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::rng::{self, Stream};

struct Topic {
    name: &'static str,
    nouns: &'static [&'static str],
    places: &'static [&'static str],
    verbs: &'static [&'static str],
}

const TOPICS: &[Topic] = &[
    Topic {
        name: "the harbor",
        nouns: &[
            "boat",
            "net",
            "sail",
            "rope",
            "anchor",
            "gull",
            "tide",
            "lantern",
            "crate",
            "fisherman",
        ],
        places: &["dock", "pier", "shore", "market", "lighthouse", "bay"],
        verbs: &["mended", "carried", "watched", "loaded", "tied", "counted"],
    },
    Topic {
        name: "the orchard",
        nouns: &[
            "apple", "ladder", "basket", "branch", "blossom", "bee", "pear", "cart", "seed",
            "gardener",
        ],
        places: &["hill", "barn", "row", "gate", "well", "meadow"],
        verbs: &[
            "picked", "pruned", "planted", "gathered", "watered", "sorted",
        ],
    },
    Topic {
        name: "the library",
        nouns: &[
            "book", "letter", "map", "candle", "scroll", "clerk", "ledger", "shelf", "pen",
            "reader",
        ],
        places: &[
            "hall",
            "archive",
            "reading room",
            "tower",
            "cellar",
            "study",
        ],
        verbs: &[
            "copied",
            "read",
            "filed",
            "repaired",
            "borrowed",
            "translated",
        ],
    },
    Topic {
        name: "the mountain road",
        nouns: &[
            "mule", "pass", "stone", "bridge", "snow", "traveler", "wagon", "pine", "storm",
            "guide",
        ],
        places: &["ridge", "valley", "inn", "river", "summit", "camp"],
        verbs: &[
            "climbed", "crossed", "followed", "cleared", "guarded", "measured",
        ],
    },
    Topic {
        name: "the workshop",
        nouns: &[
            "hammer",
            "clock",
            "gear",
            "spring",
            "lamp",
            "bench",
            "chisel",
            "wheel",
            "drawing",
            "apprentice",
        ],
        places: &["forge", "yard", "attic", "street", "window", "corner"],
        verbs: &["built", "polished", "tested", "fixed", "weighed", "painted"],
    },
    Topic {
        name: "the kitchen",
        nouns: &[
            "bread", "pot", "onion", "knife", "soup", "oven", "spoon", "kettle", "pie", "cook",
        ],
        places: &["table", "pantry", "hearth", "garden", "larder", "courtyard"],
        verbs: &["baked", "stirred", "chopped", "tasted", "served", "boiled"],
    },
];

const NAMES: &[&str] = &[
    "Ada", "Bram", "Clara", "Dorian", "Edith", "Felix", "Greta", "Hugo", "Iris", "Jonas", "Katya",
    "Leo", "Mira", "Nils", "Olga", "Pavel", "Quinn", "Rosa", "Silas", "Tilda", "Ulric", "Vera",
    "Wren", "Yusuf",
];

const ADJECTIVES: &[&str] = &[
    "old", "small", "heavy", "bright", "quiet", "broken", "new", "wooden", "narrow", "warm",
    "cold", "green", "careful", "tired", "patient", "early",
];

const TIMES: &[&str] = &[
    "in the morning",
    "before noon",
    "at dusk",
    "after the rain",
    "on the third day",
    "late at night",
    "in early spring",
    "when the bell rang",
];

struct Doc<'a> {
    topic: &'a Topic,
    cast: Vec<&'static str>,
}

fn pick<'a>(r: &mut ChaCha8Rng, xs: &'a [&'static str]) -> &'a str {
    xs.choose(r).expect("non-empty list")
}

fn sentence(r: &mut ChaCha8Rng, d: &Doc) -> String {
    let t = d.topic;
    let who = pick(r, &d.cast);
    let other = pick(r, &d.cast);
    let s = match r.random_range(0..8) {
        0 => format!(
            "{who} {} the {} {} near the {}.",
            pick(r, t.verbs),
            pick(r, ADJECTIVES),
            pick(r, t.nouns),
            pick(r, t.places)
        ),
        1 => format!(
            "{} {who} {} the {}.",
            capital(pick(r, TIMES)),
            pick(r, t.verbs),
            pick(r, t.nouns)
        ),
        2 => format!(
            "The {} {} was {} by {other}.",
            pick(r, ADJECTIVES),
            pick(r, t.nouns),
            pick(r, t.verbs)
        ),
        3 => format!(
            "{who} told {other} that the {} at the {} was {}.",
            pick(r, t.nouns),
            pick(r, t.places),
            pick(r, ADJECTIVES)
        ),
        4 => format!(
            "Everyone at {} knew the {} {}.",
            t.name,
            pick(r, ADJECTIVES),
            pick(r, t.nouns)
        ),
        5 => format!(
            "{who} and {other} {} {} {}s {}.",
            pick(r, t.verbs),
            r.random_range(2..10),
            pick(r, t.nouns),
            pick(r, TIMES)
        ),
        6 => format!("\"Where is the {}?\" asked {who}.", pick(r, t.nouns)),
        _ => format!(
            "The {} by the {} was {} again.",
            pick(r, t.nouns),
            pick(r, t.places),
            pick(r, t.verbs)
        ),
    };
    s
}

fn capital(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn document(r: &mut ChaCha8Rng, out: &mut String) {
    let topic = TOPICS.choose(r).expect("topics");
    let cast: Vec<&'static str> = NAMES.choose_multiple(r, 3).copied().collect();
    let d = Doc { topic, cast };
    out.push_str(&format!(
        "= {} and {} =\n\n",
        d.cast[0],
        capital(topic.name)
    ));
    for _ in 0..r.random_range(2..6) {
        let n = r.random_range(3..7);
        let para: Vec<String> = (0..n).map(|_| sentence(r, &d)).collect();
        out.push_str(&para.join(" "));
        out.push_str("\n\n");
    }
}

/// At least `min_bytes` of text (whole documents) drawn from `seed`.
pub fn synthetic_text(min_bytes: usize, seed: u64) -> String {
    let mut r = rng::stream(seed, Stream::Sample(0x7e47));
    let mut out = String::with_capacity(min_bytes + 4096);
    while out.len() < min_bytes {
        document(&mut r, &mut out);
    }
    out
}
