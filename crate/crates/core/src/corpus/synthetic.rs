//! Seeded templated corpus whose entity types can only be told apart by the
//! surrounding characters.
//!
//! Every entity is drawn from one shared character pool. Its type is fixed by
//! a two-character trigger word right before it and a one-character marker
//! right after it, so any character of an entity of length ≤ 3 sees a
//! type-specific character within two positions.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tags::{bmes_from_words, Prefix, Tag};
use super::Sentence;

const FILLER: &[char] = &['的', '了', '是', '有', '一', '个', '也', '就', '都', '和', '人', '说', '过', '很', '在', '我'];
const POOL: &[char] = &['甲', '乙', '丙', '丁', '戊', '己', '庚', '辛', '壬', '癸', '子', '丑', '寅', '卯', '辰', '巳'];

struct EntityType {
    kind: &'static str,
    triggers: &'static [&'static str],
    marker: &'static str,
}

const TYPES: &[EntityType] = &[
    EntityType { kind: "PER", triggers: &["叫做", "拜访"], marker: "君" },
    EntityType { kind: "LOC", triggers: &["前往", "位于"], marker: "地" },
    EntityType { kind: "ORG", triggers: &["加入", "任职"], marker: "社" },
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    /// Template slots per sentence.
    pub slots: usize,
    /// Probability that a slot holds an entity.
    pub entity_rate: f64,
    pub max_entity_len: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { slots: 3, entity_rate: 0.5, max_entity_len: 3 }
    }
}

pub fn gen_synthetic(seed: u64, n: usize) -> Vec<Sentence> {
    gen_synthetic_with(seed, n, &SyntheticConfig::default())
}

pub fn gen_synthetic_with(seed: u64, n: usize, cfg: &SyntheticConfig) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sentence(&mut rng, cfg)).collect()
}

fn filler_word(rng: &mut impl Rng) -> String {
    let len = rng.random_range(1..=2);
    (0..len).map(|_| *FILLER.choose(rng).unwrap()).collect()
}

fn sentence(rng: &mut impl Rng, cfg: &SyntheticConfig) -> Sentence {
    let mut words: Vec<String> = Vec::new();
    let mut tags: Vec<Tag> = Vec::new();
    let push_outside = |words: &mut Vec<String>, tags: &mut Vec<Tag>, w: String| {
        tags.extend(std::iter::repeat_n(Tag::Outside, w.chars().count()));
        words.push(w);
    };

    push_outside(&mut words, &mut tags, filler_word(rng));
    for _ in 0..cfg.slots {
        if rng.random_bool(cfg.entity_rate) {
            let ty = TYPES.choose(rng).unwrap();
            push_outside(&mut words, &mut tags, ty.triggers.choose(rng).unwrap().to_string());
            let len = rng.random_range(1..=cfg.max_entity_len.max(1));
            let entity: String = (0..len).map(|_| *POOL.choose(rng).unwrap()).collect();
            if len == 1 {
                tags.push(Tag::new(Prefix::S, ty.kind));
            } else {
                tags.push(Tag::new(Prefix::B, ty.kind));
                tags.extend(std::iter::repeat_n(Tag::new(Prefix::I, ty.kind), len - 2));
                tags.push(Tag::new(Prefix::E, ty.kind));
            }
            words.push(entity);
            push_outside(&mut words, &mut tags, ty.marker.to_string());
        } else {
            push_outside(&mut words, &mut tags, filler_word(rng));
        }
        push_outside(&mut words, &mut tags, filler_word(rng));
    }

    let chars: Vec<char> = words.iter().flat_map(|w| w.chars()).collect();
    let seg = bmes_from_words(&words, None).expect("generated words are non-empty");
    Sentence::new(chars, seg, Some(tags)).expect("generated sentence is consistent")
}
