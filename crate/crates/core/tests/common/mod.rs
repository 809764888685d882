#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use ssdau_core::corpus::{align_record, Instance, RawMention, RawRecord, RawTriple};
use ssdau_core::seed;

pub enum Part<'a> {
    T(&'a str),
    M(&'a str, &'a str, &'a str),
}

pub fn record(id: &str, parts: &[Part], triples: &[(&str, &str, &str)]) -> Instance {
    let mut text = String::new();
    let mut spans = Vec::new();
    for p in parts {
        match p {
            Part::T(t) => text.push_str(t),
            Part::M(key, surface, tag) => {
                spans.push((*key, text.chars().count(), *surface, *tag));
                text.push_str(surface);
            }
        }
    }
    let mention = |key: &str| {
        let (_, start, surface, tag) = spans.iter().find(|s| s.0 == key).unwrap();
        RawMention {
            surface: surface.to_string(),
            char_start: Some(*start),
            tag: tag.to_string(),
        }
    };
    let raw = RawRecord {
        id: Some(id.into()),
        text: text.clone(),
        triples: triples
            .iter()
            .map(|(h, r, t)| RawTriple {
                head: mention(h),
                relation: r.to_string(),
                tail: mention(t),
            })
            .collect(),
    };
    align_record(0, &raw).unwrap().instance
}

const PEOPLE: &[&str] = &["Amy Grant", "John Smith", "Maria Lopez", "Kenji Sato", "Lee", "Peter van Dyke", "Nina Rossi"];
const CITIES: &[&str] = &["Nashville", "Austin", "New York", "Lima", "Oslo", "San Antonio", "Kyoto"];
const REGIONS: &[&str] = &["Texas", "Peru", "Norway", "South Africa", "Japan"];
const ORGS: &[&str] = &["Acme Corp", "Globex", "Blue Harbor Media", "Initech"];

/// Small seeded corpus with one to three triples per sentence.
pub fn toy_corpus(n: usize, seed: u64) -> Vec<Instance> {
    use Part::*;
    let mut rng = seed::rng(seed);
    let mut out = Vec::new();
    let mut texts = std::collections::BTreeSet::new();
    while out.len() < n {
        let id = format!("t{:03}", out.len());
        let p = *PEOPLE.choose(&mut rng).unwrap();
        let c = *CITIES.choose(&mut rng).unwrap();
        let r = *REGIONS.choose(&mut rng).unwrap();
        let o = *ORGS.choose(&mut rng).unwrap();
        let verb = ["lives in", "lived in", "resides in", "settled in"][rng.gen_range(0..4)];
        let office = ["opened an office in", "has a branch in", "moved its headquarters to"][rng.gen_range(0..3)];
        let inst = match rng.gen_range(0..4) {
            0 => record(&id, &[M("p", p, "people"), T(" "), T(verb), T(" "), M("c", c, "place"), T(" .")], &[("p", "place_lived", "c")]),
            1 => record(
                &id,
                &[M("c", c, "place"), T(" is a city in "), M("r", r, "place"), T(" .")],
                &[("r", "contains", "c")],
            ),
            2 => record(
                &id,
                &[M("p", p, "people"), T(" , who works for "), M("o", o, "organization"), T(" , "), T(verb), T(" "), M("c", c, "place"), T(" .")],
                &[("p", "company", "o"), ("p", "place_lived", "c")],
            ),
            _ => record(
                &id,
                &[M("o", o, "organization"), T(" "), T(office), T(" "), M("c", c, "place"), T(" , "), M("r", r, "place"), T(" , near "), M("p", p, "people"), T(" 's home .")],
                &[("o", "location", "c"), ("r", "contains", "c"), ("p", "place_lived", "c")],
            ),
        };
        if texts.insert(inst.sentence.text.clone()) {
            out.push(inst);
        }
    }
    out
}

pub fn mustain() -> Instance {
    use Part::*;
    record(
        "mustain",
        &[
            T("At "),
            M("a", "Arkansas", "place"),
            T(" , the freshman "),
            M("m", "Mitch Mustain", "people"),
            T(" led the "),
            M("r", "Razorbacks", "group"),
            T(" in a 24-23 double-overtime upset of Alabama."),
        ],
        &[("m", "place_lived", "a"), ("r", "contain", "m")],
    )
}
