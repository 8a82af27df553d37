use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{serialize_corpus, serialize_splits, Corpus};
use crate::error::Result;

use super::config::{Mode, StrategyConfig};
use super::plan::render;
use super::train::TrainOutcome;

/// Git-style content address: sha256 over `blob <len>\0<bytes>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Hash of the canonical serialization of documents and split tags.
pub fn corpus_hash(corpus: &Corpus) -> Result<String> {
    let mut text = serialize_corpus(corpus)?;
    text.push_str(&serialize_splits(corpus)?);
    Ok(content_hash(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub name: String,
    pub path: String,
    pub bytes: u64,
    pub hash: String,
}

impl InputFile {
    pub fn new(name: &str, path: &str, content: &[u8]) -> Self {
        Self {
            name: name.to_owned(),
            path: path.to_owned(),
            bytes: content.len() as u64,
            hash: content_hash(content),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: StrategyConfig,
    pub corpus_hash: String,
    pub inventory: Vec<String>,
    pub inventory_fingerprint: String,
    pub inputs: Vec<InputFile>,
    pub stage_sizes: Option<Vec<usize>>,
    pub rc_steps: usize,
    /// One token per planned epoch, see [`render`].
    pub plan: Vec<String>,
    pub best_epoch: usize,
    pub notes: Vec<String>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(corpus: &Corpus, cfg: &StrategyConfig, outcome: &TrainOutcome, inputs: Vec<InputFile>) -> Result<Self> {
        let mut notes = vec![
            "target matrix counts as identity once every off-diagonal entry is below 1e-4".to_owned(),
            "difficulty scores and buckets are computed on training documents only".to_owned(),
        ];
        if cfg.mode == Mode::ReverseHierarchical {
            notes.push("target matrix is re-initialized at the start of every document stage".into());
        }
        if cfg.mode == Mode::Hierarchical {
            notes.push(
                "each annealing step spans one full baby-step sweep, extended on the full set to at least rc_interval epochs"
                    .into(),
            );
        }
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config: cfg.clone(),
            corpus_hash: corpus_hash(corpus)?,
            inventory: corpus.inventory().roles().to_vec(),
            inventory_fingerprint: corpus.inventory().fingerprint(),
            inputs,
            stage_sizes: outcome.schedule.as_ref().map(|s| s.stage_sizes()),
            rc_steps: outcome.rc_steps,
            plan: render(&outcome.plan),
            best_epoch: outcome.best_epoch,
            notes,
            warnings: outcome.warnings.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_git_blob_framing() {
        // sha256 of "blob 0\0"
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
        assert_ne!(content_hash(b"a"), content_hash(b"b"));
    }
}
