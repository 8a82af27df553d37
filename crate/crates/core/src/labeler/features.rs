//! Hashed bag-of-n-gram sentence features with a context window.
//!
//! One sentence block is laid out as
//!
//! ```text
//! [ hashed unigrams+bigrams (D) | bias | i/m | ln(1+len) | external embedding (E) ]
//! ```
//!
//! and the vector for sentence `i` concatenates the blocks of sentences
//! `i-w ..= i+w`; blocks outside the document stay zero.

use std::collections::HashMap;
use std::hash::Hasher;

use fnv::{FnvHashMap, FnvHasher};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Document};
use crate::error::{Error, Result};

/// Sorted `(index, value)` pairs.
pub type SparseVector = Vec<(u32, f64)>;

const DENSE_EXTRAS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    /// Hashed feature space is `2^hash_bits` wide.
    pub hash_bits: u32,
    /// Hash adjacent token pairs as well as single tokens.
    pub bigrams: bool,
    pub window: usize,
    /// Width of externally supplied sentence embeddings, 0 when unused.
    pub embedding_dim: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            hash_bits: 16,
            bigrams: false,
            window: 0,
            embedding_dim: 0,
        }
    }
}

impl FeatureConfig {
    pub fn hash_dim(&self) -> usize {
        1 << self.hash_bits
    }

    pub fn block_dim(&self) -> usize {
        self.hash_dim() + DENSE_EXTRAS + self.embedding_dim
    }

    pub fn num_blocks(&self) -> usize {
        2 * self.window + 1
    }

    pub fn dim(&self) -> usize {
        self.num_blocks() * self.block_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=24).contains(&self.hash_bits) {
            return Err(Error::InvalidArgument(format!(
                "hash_bits must be in 1..=24, got {}",
                self.hash_bits
            )));
        }
        if self.dim() > u32::MAX as usize {
            return Err(Error::InvalidArgument("feature space too large".into()));
        }
        Ok(())
    }

    /// Whether a concatenated-space index belongs to a hashed n-gram slot.
    pub fn is_hashed(&self, index: u32) -> bool {
        (index as usize % self.block_dim()) < self.hash_dim()
    }
}

fn hash_feature(kind: u8, tokens: &[&str], dim: usize) -> u32 {
    let mut h = FnvHasher::default();
    h.write_u8(kind);
    for t in tokens {
        h.write(t.as_bytes());
        h.write_u8(0x1f);
    }
    (h.finish() % dim as u64) as u32
}

fn hashed_counts(sentence: &str, dim: usize, bigrams: bool) -> FnvHashMap<u32, f64> {
    let tokens = tokenize(sentence);
    let toks: Vec<&str> = tokens.iter().map(String::as_str).collect();
    let mut counts = FnvHashMap::default();
    for t in &toks {
        *counts.entry(hash_feature(b'u', &[t], dim)).or_insert(0.0) += 1.0;
    }
    for pair in toks.windows(2).filter(|_| bigrams) {
        *counts.entry(hash_feature(b'b', pair, dim)).or_insert(0.0) += 1.0;
    }
    counts
}

/// Sentence-level external embeddings keyed by document id.
pub type SentenceEmbeddings = HashMap<String, Vec<Vec<f64>>>;

/// Parses `doc_id<TAB>sentence_index<TAB>f1 ... fd` lines. Every document's
/// sentence indices must be contiguous from 0.
pub fn parse_sentence_embeddings(text: &str) -> Result<(SentenceEmbeddings, usize)> {
    let mut raw: HashMap<String, Vec<(usize, Vec<f64>)>> = HashMap::new();
    let mut dim = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::MalformedRecord {
            line: lineno + 1,
            message,
        };
        let mut parts = line.splitn(3, '\t');
        let (Some(id), Some(idx), Some(values)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(malformed("expected `doc_id<TAB>index<TAB>values`".into()));
        };
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|e| malformed(format!("sentence index: {e}")))?;
        let values = values
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| malformed(format!("`{t}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::DimensionMismatch {
                    context: "sentence embedding",
                    expected: d,
                    actual: values.len(),
                })
            }
            _ => {}
        }
        raw.entry(id.to_owned()).or_default().push((idx, values));
    }
    let mut out = HashMap::with_capacity(raw.len());
    for (id, mut rows) in raw {
        rows.sort_by_key(|(i, _)| *i);
        if rows.iter().enumerate().any(|(k, (i, _))| k != *i) {
            return Err(Error::InvalidArgument(format!(
                "sentence embeddings for `{id}` are not indexed 0..n"
            )));
        }
        out.insert(id, rows.into_iter().map(|(_, v)| v).collect());
    }
    Ok((out, dim.unwrap_or(0)))
}

/// Fitted encoder: the feature layout plus inverse sentence frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceEncoder {
    pub config: FeatureConfig,
    num_sentences: u64,
    /// Sentence frequency per hashed slot, sorted by slot.
    doc_freq: Vec<(u32, u32)>,
    #[serde(skip)]
    idf_lookup: FnvHashMap<u32, f64>,
}

impl SentenceEncoder {
    pub fn fit(config: FeatureConfig, docs: &[&Document]) -> Result<Self> {
        config.validate()?;
        let dim = config.hash_dim();
        let mut df: FnvHashMap<u32, u32> = FnvHashMap::default();
        let mut n = 0u64;
        for doc in docs {
            for sentence in &doc.sentences {
                n += 1;
                for slot in hashed_counts(sentence, dim, config.bigrams).into_keys() {
                    *df.entry(slot).or_insert(0) += 1;
                }
            }
        }
        let mut doc_freq: Vec<(u32, u32)> = df.into_iter().collect();
        doc_freq.sort_unstable();
        let mut enc = Self {
            config,
            num_sentences: n,
            doc_freq,
            idf_lookup: FnvHashMap::default(),
        };
        enc.rebuild_lookup();
        Ok(enc)
    }

    /// Restores the lookup table after deserialization.
    pub fn rebuild_lookup(&mut self) {
        let n = self.num_sentences as f64;
        self.idf_lookup = self
            .doc_freq
            .iter()
            .map(|&(slot, df)| (slot, ((1.0 + n) / (1.0 + df as f64)).ln() + 1.0))
            .collect();
    }

    fn idf(&self, slot: u32) -> f64 {
        self.idf_lookup
            .get(&slot)
            .copied()
            .unwrap_or_else(|| (1.0 + self.num_sentences as f64).ln() + 1.0)
    }

    /// Features of one sentence in block-local coordinates.
    fn sentence_block(
        &self,
        sentence: &str,
        position: usize,
        doc_len: usize,
        embedding: Option<&[f64]>,
    ) -> SparseVector {
        let d = self.config.hash_dim();
        let mut hashed: SparseVector = hashed_counts(sentence, d, self.config.bigrams)
            .into_iter()
            .map(|(slot, tf)| (slot, tf * self.idf(slot)))
            .collect();
        let norm = hashed.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            hashed.iter_mut().for_each(|(_, v)| *v /= norm);
        }
        hashed.sort_unstable_by_key(|(i, _)| *i);

        let base = d as u32;
        let len = tokenize(sentence).len();
        hashed.push((base, 1.0));
        hashed.push((base + 1, position as f64 / doc_len as f64));
        hashed.push((base + 2, (1.0 + len as f64).ln()));
        if let Some(e) = embedding {
            let start = base + DENSE_EXTRAS as u32;
            hashed.extend(
                e.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(k, &v)| (start + k as u32, v)),
            );
        }
        hashed
    }

    /// One concatenated feature vector per sentence.
    pub fn encode_document(
        &self,
        doc: &Document,
        embeddings: Option<&[Vec<f64>]>,
    ) -> Result<Vec<SparseVector>> {
        let m = doc.len();
        if self.config.embedding_dim > 0 {
            let e = embeddings.ok_or_else(|| {
                Error::InvalidArgument(format!("no sentence embeddings for document `{}`", doc.id))
            })?;
            if e.len() != m {
                return Err(Error::DimensionMismatch {
                    context: "sentence embeddings per document",
                    expected: m,
                    actual: e.len(),
                });
            }
            if let Some(bad) = e.iter().find(|v| v.len() != self.config.embedding_dim) {
                return Err(Error::DimensionMismatch {
                    context: "sentence embedding",
                    expected: self.config.embedding_dim,
                    actual: bad.len(),
                });
            }
        }
        let blocks: Vec<SparseVector> = (0..m)
            .map(|i| {
                let emb = if self.config.embedding_dim > 0 {
                    embeddings.map(|e| e[i].as_slice())
                } else {
                    None
                };
                self.sentence_block(&doc.sentences[i], i, m, emb)
            })
            .collect();

        let w = self.config.window as isize;
        let block_dim = self.config.block_dim() as u32;
        Ok((0..m as isize)
            .map(|i| {
                let mut v = SparseVector::new();
                for (b, offset) in (-w..=w).enumerate() {
                    let j = i + offset;
                    if j < 0 || j >= m as isize {
                        continue;
                    }
                    let shift = b as u32 * block_dim;
                    v.extend(blocks[j as usize].iter().map(|&(k, x)| (k + shift, x)));
                }
                v
            })
            .collect())
    }
}

/// Inverted dropout on the hashed n-gram entries; dense extras are kept.
pub fn feature_dropout<R: Rng>(
    v: &SparseVector,
    rate: f64,
    config: &FeatureConfig,
    rng: &mut R,
) -> SparseVector {
    if rate <= 0.0 {
        return v.clone();
    }
    let keep = 1.0 - rate;
    v.iter()
        .filter_map(|&(k, x)| {
            if !config.is_hashed(k) {
                Some((k, x))
            } else if rng.gen::<f64>() < keep {
                Some((k, x / keep))
            } else {
                None
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(sentences: &[&str]) -> Document {
        Document {
            id: "d".into(),
            sentences: sentences.iter().map(|s| s.to_string()).collect(),
            labels: vec![0; sentences.len()],
        }
    }

    fn small(window: usize) -> FeatureConfig {
        FeatureConfig {
            hash_bits: 8,
            bigrams: true,
            window,
            embedding_dim: 0,
        }
    }

    fn blocks_used(v: &SparseVector, cfg: &FeatureConfig) -> Vec<usize> {
        let mut b: Vec<usize> = v.iter().map(|(k, _)| *k as usize / cfg.block_dim()).collect();
        b.dedup();
        b
    }

    #[test]
    fn bigrams_add_slots() {
        let uni = hashed_counts("the court held that", 1 << 16, false);
        let bi = hashed_counts("the court held that", 1 << 16, true);
        assert_eq!(uni.len(), 4);
        assert_eq!(bi.len(), 7);
        assert!(uni.keys().all(|k| bi.contains_key(k)));
    }

    #[test]
    fn window_zero_is_own_block_only() {
        let d = doc(&["the court held", "appeal dismissed"]);
        let enc = SentenceEncoder::fit(small(0), &[&d]).unwrap();
        let f = enc.encode_document(&d, None).unwrap();
        assert_eq!(f.len(), 2);
        for v in &f {
            assert!(v.iter().all(|(k, _)| (*k as usize) < enc.config.block_dim()));
        }
    }

    #[test]
    fn boundary_blocks_are_zero() {
        let d = doc(&["only sentence"]);
        let cfg = small(1);
        let enc = SentenceEncoder::fit(cfg.clone(), &[&d]).unwrap();
        let f = enc.encode_document(&d, None).unwrap();
        assert_eq!(blocks_used(&f[0], &cfg), vec![1]);
    }

    #[test]
    fn middle_sentence_sees_three_blocks() {
        let d = doc(&["facts of the case", "the argument made", "appeal dismissed"]);
        let cfg = small(1);
        let enc = SentenceEncoder::fit(cfg.clone(), &[&d]).unwrap();
        let f = enc.encode_document(&d, None).unwrap();
        assert_eq!(blocks_used(&f[1], &cfg), vec![0, 1, 2]);
        assert_eq!(blocks_used(&f[0], &cfg), vec![1, 2]);
        assert_eq!(blocks_used(&f[2], &cfg), vec![0, 1]);
        assert_eq!(f.iter().flatten().filter(|(k, _)| *k as usize >= cfg.dim()).count(), 0);
    }

    #[test]
    fn hashed_part_is_unit_norm_and_finite() {
        let d = doc(&["a a b c", "", "x"]);
        let enc = SentenceEncoder::fit(small(0), &[&d]).unwrap();
        let f = enc.encode_document(&d, None).unwrap();
        let hashed_norm = |v: &SparseVector| {
            v.iter()
                .filter(|(k, _)| enc.config.is_hashed(*k))
                .map(|(_, x)| x * x)
                .sum::<f64>()
        };
        assert!((hashed_norm(&f[0]) - 1.0).abs() < 1e-12);
        assert_eq!(hashed_norm(&f[1]), 0.0);
        assert!(f.iter().flatten().all(|(_, x)| x.is_finite()));
        // sorted and unique
        for v in &f {
            assert!(v.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }

    #[test]
    fn rarer_tokens_weigh_more() {
        let a = doc(&["common rare", "common", "common"]);
        let enc = SentenceEncoder::fit(small(0), &[&a]).unwrap();
        let f = enc.encode_document(&doc(&["common rare"]), None).unwrap();
        let d = enc.config.hash_dim();
        let weight = |t: &str| {
            let slot = hash_feature(b'u', &[t], d);
            f[0].iter().find(|(k, _)| *k == slot).unwrap().1
        };
        assert!(weight("rare") > weight("common"));
    }

    #[test]
    fn external_embeddings_are_appended() {
        let cfg = FeatureConfig {
            hash_bits: 4,
            bigrams: true,
            window: 0,
            embedding_dim: 2,
        };
        let d = doc(&["a", "b"]);
        let enc = SentenceEncoder::fit(cfg.clone(), &[&d]).unwrap();
        assert!(enc.encode_document(&d, None).is_err());
        let e = vec![vec![0.5, -1.0], vec![0.0, 2.0]];
        let f = enc.encode_document(&d, Some(&e)).unwrap();
        let start = (cfg.hash_dim() + DENSE_EXTRAS) as u32;
        assert!(f[0].contains(&(start, 0.5)) && f[0].contains(&(start + 1, -1.0)));
        assert!(f[1].contains(&(start + 1, 2.0)));
    }

    #[test]
    fn sentence_embedding_sidecar() {
        let (e, dim) = parse_sentence_embeddings("d\t1\t0 1\nd\t0\t1 0\n").unwrap();
        assert_eq!(dim, 2);
        assert_eq!(e["d"], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(parse_sentence_embeddings("d\t1\t0 1\n").is_err());
        assert!(parse_sentence_embeddings("d\t0\t0 1\nd\t1\t0\n").is_err());
    }

    #[test]
    fn dropout_keeps_dense_extras() {
        use rand::SeedableRng;
        let d = doc(&["one two three four five six seven"]);
        let cfg = small(0);
        let enc = SentenceEncoder::fit(cfg.clone(), &[&d]).unwrap();
        let f = enc.encode_document(&d, None).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let dropped = feature_dropout(&f[0], 0.999, &cfg, &mut rng);
        assert_eq!(dropped.iter().filter(|(k, _)| !cfg.is_hashed(*k)).count(), DENSE_EXTRAS);
        assert_eq!(feature_dropout(&f[0], 0.0, &cfg, &mut rng), f[0]);
    }
}
