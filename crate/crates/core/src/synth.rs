//! Seeded synthetic corpus: product families with disjoint core vocabularies,
//! intra-family co-compare pairs, purchase sessions and sparse attributes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::delimited::CsvText;
use crate::baselines::{attributes_to_text, AttributeKind, AttributeSchema, AttributeSpec, AttributeTable};
use crate::catalog::{write_catalog, Product};
use crate::evalkit::{sessions_to_text, Session};
use crate::{Error, Result};

const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "nu", "pe", "ra", "si", "to", "vu", "ze", "bo", "da", "fi", "gu", "ha", "je", "wo", "xi", "yu",
    "co",
];
const SHARED_WORDS: [&str; 24] = [
    "the", "with", "and", "for", "of", "in", "a", "to", "is", "new", "pro", "compact", "heavy", "duty", "premium",
    "durable", "black", "steel", "model", "series", "includes", "use", "home", "quality",
];
const COLORS: [&str; 5] = ["black", "red", "blue", "yellow", "green"];
const POWER: [&str; 3] = ["corded", "cordless", "gas"];
const FINISH: [&str; 4] = ["matte", "gloss", "brushed", "painted"];
const NOUNS_PER_FAMILY: usize = 24;
pub const FIRST_ID: u64 = 12_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub families: usize,
    pub per_family: usize,
    pub seed: u64,
    /// Fraction of products that carry no attributes at all.
    pub missing_attr_fraction: f64,
    /// Fraction of products that never appear in a co-compare pair.
    pub uncompared_fraction: f64,
    pub sessions: usize,
    /// Probability that a purchase falls in the anchor's family.
    pub in_family_purchase: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            families: 4,
            per_family: 250,
            seed: 7,
            missing_attr_fraction: 0.4,
            uncompared_fraction: 0.3,
            sessions: 500,
            in_family_purchase: 0.9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub products: Vec<Product>,
    /// `(id1, id2, flag)` rows, with repeats.
    pub pairs: Vec<(String, String, i8)>,
    pub sessions: Vec<Session>,
    pub attributes: AttributeTable,
    pub schema: AttributeSchema,
    pub family_of: BTreeMap<String, usize>,
}

fn family_word(family: usize, j: usize) -> String {
    let s = SYLLABLES.len();
    [family / s, family % s, j / s, j % s]
        .iter()
        .map(|&i| SYLLABLES[i])
        .collect()
}

fn pick<'a, R: Rng>(rng: &mut R, words: &'a [String]) -> &'a str {
    &words[rng.gen_range(0..words.len())]
}

fn make_text<R: Rng>(rng: &mut R, nouns: &[String]) -> (String, String) {
    let mut title: Vec<&str> = Vec::new();
    for _ in 0..rng.gen_range(1..=2) {
        title.push(SHARED_WORDS[rng.gen_range(9..SHARED_WORDS.len())]);
    }
    for _ in 0..rng.gen_range(2..=3) {
        title.push(pick(rng, nouns));
    }
    title.shuffle(rng);
    let mut desc: Vec<&str> = Vec::new();
    for _ in 0..rng.gen_range(10..=18) {
        if rng.gen_bool(0.5) {
            desc.push(pick(rng, nouns));
        } else {
            desc.push(SHARED_WORDS[rng.gen_range(0..SHARED_WORDS.len())]);
        }
    }
    (title.join(" "), desc.join(" "))
}

/// Splits `total` into `parts` near-equal shares, larger shares first.
fn shares(total: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| total / parts + usize::from(i < total % parts)).collect()
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.families < 2 {
        return Err(Error::InvalidArgument("synth needs at least 2 families".into()));
    }
    if cfg.per_family < 3 {
        return Err(Error::InvalidArgument("synth needs at least 3 products per family".into()));
    }
    if cfg.families > SYLLABLES.len() * SYLLABLES.len() {
        return Err(Error::InvalidArgument("too many families".into()));
    }
    for (name, f) in [
        ("missing-attr-fraction", cfg.missing_attr_fraction),
        ("uncompared-fraction", cfg.uncompared_fraction),
        ("in-family-purchase", cfg.in_family_purchase),
    ] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::InvalidArgument(format!("{name} must be in [0, 1]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = cfg.families * cfg.per_family;

    // Shuffled slots so ids carry no family information.
    let mut slot_family: Vec<usize> = (0..total).map(|i| i / cfg.per_family).collect();
    slot_family.shuffle(&mut rng);
    let ids: Vec<String> = (0..total).map(|i| format!("{:08}", FIRST_ID + i as u64)).collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); cfg.families];
    for (slot, &f) in slot_family.iter().enumerate() {
        members[f].push(slot);
    }

    let nouns: Vec<Vec<String>> = (0..cfg.families)
        .map(|f| (0..NOUNS_PER_FAMILY).map(|j| family_word(f, j)).collect())
        .collect();
    let products: Vec<Product> = (0..total)
        .map(|slot| {
            let (title, desc) = make_text(&mut rng, &nouns[slot_family[slot]]);
            Product::new(ids[slot].clone(), title, desc)
        })
        .collect();

    // Co-compare pairs: per family, a random spanning tree over the compared
    // members plus extra intra-family links, each emitted 1-4 times.
    let uncompared_total = (cfg.uncompared_fraction * total as f64).round() as usize;
    let mut pairs = Vec::new();
    for (f, uncompared) in shares(uncompared_total, cfg.families).into_iter().enumerate() {
        let mut group = members[f].clone();
        group.shuffle(&mut rng);
        let compared = cfg.per_family.saturating_sub(uncompared).max(2);
        let group = &group[..compared];
        let mut edges = BTreeSet::new();
        for i in 1..group.len() {
            let j = rng.gen_range(0..i);
            edges.insert((group[i].min(group[j]), group[i].max(group[j])));
        }
        for _ in 0..group.len() / 2 {
            let a = group[rng.gen_range(0..group.len())];
            let b = group[rng.gen_range(0..group.len())];
            if a != b {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        for (a, b) in edges {
            for _ in 0..rng.gen_range(1..=4) {
                let (x, y) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
                pairs.push((ids[x].clone(), ids[y].clone(), 1));
            }
            if rng.gen_bool(0.1) {
                pairs.push((ids[a].clone(), ids[b].clone(), 0));
            }
        }
    }
    pairs.shuffle(&mut rng);

    // Attributes: a random subset of products carries none.
    let without = (cfg.missing_attr_fraction * total as f64).round() as usize;
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    let mut attributes = AttributeTable::new();
    let mut cap_range = (f64::INFINITY, f64::NEG_INFINITY);
    for &slot in &order[without..] {
        let f = slot_family[slot];
        let mut attrs = BTreeMap::new();
        attrs.insert("color".to_string(), COLORS[rng.gen_range(0..COLORS.len())].to_string());
        if rng.gen_bool(0.7) {
            let power = if rng.gen_bool(0.6) { f % POWER.len() } else { rng.gen_range(0..POWER.len()) };
            attrs.insert("power_source".to_string(), POWER[power].to_string());
        }
        if rng.gen_bool(0.5) {
            attrs.insert("finish".to_string(), FINISH[rng.gen_range(0..FINISH.len())].to_string());
        }
        if rng.gen_bool(0.7) {
            let capacity = ((10.0 + 5.0 * f as f64 + rng.gen_range(0.0..8.0)) * 10.0).round() / 10.0;
            cap_range = (cap_range.0.min(capacity), cap_range.1.max(capacity));
            attrs.insert("capacity".to_string(), format!("{capacity}"));
        }
        attributes.insert(ids[slot].clone(), attrs);
    }
    let categorical = |name: &str, values: &[&str]| AttributeSpec {
        name: name.to_string(),
        kind: AttributeKind::Categorical {
            values: values.iter().map(|v| v.to_string()).collect(),
        },
    };
    let mut schema = AttributeSchema {
        attributes: vec![
            categorical("color", &COLORS),
            categorical("power_source", &POWER),
            categorical("finish", &FINISH),
        ],
    };
    if cap_range.0 <= cap_range.1 {
        schema.attributes.push(AttributeSpec {
            name: "capacity".into(),
            kind: AttributeKind::Numerical {
                min: cap_range.0,
                max: cap_range.1,
            },
        });
    }

    // Sessions: view one product, buy 1-3 others, mostly from its family.
    let mut sessions = Vec::with_capacity(cfg.sessions);
    for s in 0..cfg.sessions {
        let anchor = rng.gen_range(0..total);
        let f = slot_family[anchor];
        let mut bought = BTreeSet::new();
        for _ in 0..rng.gen_range(1..=3) {
            let family = if rng.gen_bool(cfg.in_family_purchase) {
                f
            } else {
                (f + rng.gen_range(1..cfg.families)) % cfg.families
            };
            let candidate = *members[family].choose(&mut rng).unwrap();
            if candidate != anchor {
                bought.insert(ids[candidate].clone());
            }
        }
        if let Some(session) = Session::new(format!("s{s:06}"), ids[anchor].clone(), bought) {
            sessions.push(session);
        }
    }

    let family_of = (0..total).map(|slot| (ids[slot].clone(), slot_family[slot])).collect();
    Ok(SynthCorpus {
        products,
        pairs,
        sessions,
        attributes,
        schema,
        family_of,
    })
}

pub const CATALOG_FILE: &str = "catalog.jsonl";
pub const PAIRS_FILE: &str = "pairs.csv";
pub const SESSIONS_FILE: &str = "sessions.csv";
pub const ATTRIBUTES_FILE: &str = "attributes.csv";
pub const SCHEMA_FILE: &str = "schema.csv";
pub const FAMILIES_FILE: &str = "families.csv";

impl SynthCorpus {
    pub fn pairs_to_text(&self) -> String {
        let mut w = CsvText::new(&["product_id_1", "product_id_2", "flag"]);
        for (a, b, flag) in &self.pairs {
            w.row([a.as_str(), b, &flag.to_string()]);
        }
        w.finish()
    }

    pub fn families_to_text(&self) -> String {
        let mut w = CsvText::new(&["product_id", "family"]);
        for (id, f) in &self.family_of {
            w.row([id.as_str(), &f.to_string()]);
        }
        w.finish()
    }

    /// Writes the six corpus files into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_catalog(&dir.join(CATALOG_FILE), &self.products)?;
        for (name, text) in [
            (PAIRS_FILE, self.pairs_to_text()),
            (SESSIONS_FILE, sessions_to_text(&self.sessions)),
            (ATTRIBUTES_FILE, attributes_to_text(&self.attributes)),
            (SCHEMA_FILE, self.schema.to_text()),
            (FAMILIES_FILE, self.families_to_text()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
