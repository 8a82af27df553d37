//! Synthetic labeled corpora with a planted role order.
//!
//! Each role owns a private vocabulary and leaks some of it to the next role
//! in the order, so adjacent roles are confusable. Documents visit roles in
//! the planted order; a fraction of segments is moved to a random position,
//! and optionally a share of documents is fully shuffled.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{split_corpus, Corpus, Document, RoleInventory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_docs: usize,
    pub num_roles: usize,
    /// Probability that a segment is moved to a random position.
    pub order_noise: f64,
    /// Share of documents whose segment order is fully shuffled.
    pub shuffled_fraction: f64,
    pub min_segment: usize,
    pub max_segment: usize,
    /// Probability that a role is skipped in a document.
    pub skip_role: f64,
    pub min_words: usize,
    pub max_words: usize,
    pub role_vocab: usize,
    pub shared_vocab: usize,
    /// Probability that a word comes from a role vocabulary at all.
    pub role_word_rate: f64,
    /// Given a role word, probability that it is borrowed from the next role.
    pub neighbor_rate: f64,
    pub split: (f64, f64, f64),
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_docs: 200,
            num_roles: 7,
            order_noise: 0.2,
            shuffled_fraction: 0.0,
            min_segment: 1,
            max_segment: 4,
            skip_role: 0.15,
            min_words: 8,
            max_words: 14,
            role_vocab: 40,
            shared_vocab: 300,
            role_word_rate: 0.4,
            neighbor_rate: 0.15,
            split: (0.7, 0.15, 0.15),
            seed: 0,
        }
    }
}

pub fn role_names(num_roles: usize) -> Vec<String> {
    (0..num_roles).map(|k| format!("role{}", k + 1)).collect()
}

fn sentence<R: Rng>(cfg: &SyntheticConfig, role: usize, rng: &mut R) -> String {
    let len = rng.gen_range(cfg.min_words..=cfg.max_words);
    let words: Vec<String> = (0..len)
        .map(|_| {
            if rng.gen_bool(cfg.role_word_rate) {
                let owner = if rng.gen_bool(cfg.neighbor_rate) {
                    (role + 1) % cfg.num_roles
                } else {
                    role
                };
                format!("r{owner}w{}", rng.gen_range(0..cfg.role_vocab))
            } else {
                format!("w{}", rng.gen_range(0..cfg.shared_vocab))
            }
        })
        .collect();
    words.join(" ")
}

fn document<R: Rng>(cfg: &SyntheticConfig, id: String, shuffled: bool, rng: &mut R) -> Document {
    let mut roles: Vec<usize> = (0..cfg.num_roles).filter(|_| !rng.gen_bool(cfg.skip_role)).collect();
    while roles.len() < 2 {
        roles = (0..cfg.num_roles).collect();
        roles.retain(|_| rng.gen_bool(0.5));
    }
    if shuffled {
        roles.shuffle(rng);
    } else {
        for i in 0..roles.len() {
            if rng.gen_bool(cfg.order_noise) {
                let r = roles.remove(i);
                let to = rng.gen_range(0..roles.len() + 1);
                roles.insert(to, r);
            }
        }
    }
    let mut sentences = Vec::new();
    let mut labels = Vec::new();
    for role in roles {
        for _ in 0..rng.gen_range(cfg.min_segment..=cfg.max_segment) {
            sentences.push(sentence(cfg, role, rng));
            labels.push(role);
        }
    }
    Document { id, sentences, labels }
}

/// Generates a corpus split into train/val/test.
pub fn generate(cfg: &SyntheticConfig) -> Result<Corpus> {
    if cfg.num_roles < 2 || cfg.num_docs == 0 {
        return Err(Error::InvalidArgument("need at least 2 roles and 1 document".into()));
    }
    if cfg.min_segment == 0 || cfg.min_segment > cfg.max_segment || cfg.min_words == 0 || cfg.min_words > cfg.max_words {
        return Err(Error::InvalidArgument("invalid segment or sentence length range".into()));
    }
    if cfg.role_vocab == 0 || cfg.shared_vocab == 0 {
        return Err(Error::InvalidArgument("vocabularies must be non-empty".into()));
    }
    for (name, p) in [
        ("order_noise", cfg.order_noise),
        ("shuffled_fraction", cfg.shuffled_fraction),
        ("skip_role", cfg.skip_role),
        ("role_word_rate", cfg.role_word_rate),
        ("neighbor_rate", cfg.neighbor_rate),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("{name} must be in [0, 1], got {p}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shuffled_docs = (cfg.num_docs as f64 * cfg.shuffled_fraction).round() as usize;
    let mut kinds: Vec<bool> = (0..cfg.num_docs).map(|i| i < shuffled_docs).collect();
    kinds.shuffle(&mut rng);
    let docs = kinds
        .into_iter()
        .enumerate()
        .map(|(i, shuffled)| document(cfg, format!("doc{i:04}"), shuffled, &mut rng))
        .collect();
    let corpus = Corpus::new(RoleInventory::new(role_names(cfg.num_roles))?, docs)?;
    split_corpus(corpus, cfg.split, cfg.seed)
}

/// Role vectors that mirror how vocabularies are shared: own weight plus the
/// borrowed share from the previous role.
pub fn role_embeddings(cfg: &SyntheticConfig) -> Vec<Vec<f64>> {
    let n = cfg.num_roles;
    (0..n)
        .map(|r| {
            let mut v = vec![0.0; n];
            v[r] += 1.0 - cfg.neighbor_rate;
            v[(r + 1) % n] += cfg.neighbor_rate;
            v
        })
        .collect()
}
