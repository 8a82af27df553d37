//! Role-annotated documents, the role inventory, and line-delimited corpus I/O.
//!
//! A corpus file holds one JSON record per line:
//!
//! ```text
//! {"id": "doc-1", "sentences": ["...", "..."], "labels": ["PREAMBLE", "FAC"]}
//! ```
//!
//! Split tags live in a sidecar file with one `{"id": ..., "split": "train"|"val"|"test"}`
//! record per line.

mod build;
mod split;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use build::convert_build;
pub use split::split_corpus;

/// Ordered set of role names; a role's id is its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleInventory {
    roles: Vec<String>,
    index: HashMap<String, usize>,
}

impl RoleInventory {
    /// Builds an inventory that keeps the given order.
    pub fn new(roles: Vec<String>) -> Result<Self> {
        if roles.is_empty() {
            return Err(Error::InvalidInventory("no roles".into()));
        }
        let mut index = HashMap::with_capacity(roles.len());
        for (id, role) in roles.iter().enumerate() {
            if role.trim().is_empty() {
                return Err(Error::InvalidInventory("empty role name".into()));
            }
            if index.insert(role.clone(), id).is_some() {
                return Err(Error::InvalidInventory(format!("duplicate role `{role}`")));
            }
        }
        Ok(Self { roles, index })
    }

    /// Builds an inventory from observed names, sorted lexicographically.
    pub fn from_observed<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        Self::new(set.into_iter().collect())
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn id(&self, role: &str) -> Option<usize> {
        self.index.get(role).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.roles[id]
    }

    pub fn roles(&self) -> &[String] {
        &self.roles
    }

    /// SHA-256 over the ordered role names, used to pair checkpoints with corpora.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for role in &self.roles {
            hasher.update(role.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<String>,
    pub labels: Vec<usize>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "dev" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

/// Documents sharing one inventory, each tagged with a split.
///
/// Freshly parsed corpora tag every document as `train`.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    inventory: RoleInventory,
    documents: Vec<Document>,
    splits: Vec<Split>,
}

impl Corpus {
    pub fn new(inventory: RoleInventory, documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if doc.is_empty() {
                return Err(Error::EmptyDocument(doc.id.clone()));
            }
            if doc.sentences.len() != doc.labels.len() {
                return Err(Error::LengthMismatch {
                    doc_id: doc.id.clone(),
                    sentences: doc.sentences.len(),
                    labels: doc.labels.len(),
                });
            }
            if let Some(&bad) = doc.labels.iter().find(|&&l| l >= inventory.len()) {
                return Err(Error::UnknownRole(format!("id {bad}")));
            }
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::DuplicateDocument(doc.id.clone()));
            }
        }
        let splits = vec![Split::Train; documents.len()];
        Ok(Self {
            inventory,
            documents,
            splits,
        })
    }

    pub fn inventory(&self) -> &RoleInventory {
        &self.inventory
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn split_of(&self, index: usize) -> Split {
        self.splits[index]
    }

    pub fn docs_in(&self, split: Split) -> Vec<&Document> {
        self.documents
            .iter()
            .zip(&self.splits)
            .filter(|(_, &s)| s == split)
            .map(|(d, _)| d)
            .collect()
    }

    pub fn train_docs(&self) -> Vec<&Document> {
        self.docs_in(Split::Train)
    }

    pub fn num_sentences(&self) -> usize {
        self.documents.iter().map(Document::len).sum()
    }

    /// Replaces the split tags. Every document must be tagged exactly once.
    pub fn with_splits(mut self, tags: &[(String, Split)]) -> Result<Self> {
        let mut by_id: HashMap<&str, Split> = HashMap::with_capacity(tags.len());
        for (id, split) in tags {
            if by_id.insert(id.as_str(), *split).is_some() {
                return Err(Error::InvalidArgument(format!("document `{id}` tagged twice")));
            }
        }
        if let Some((id, _)) = tags
            .iter()
            .find(|(id, _)| !self.documents.iter().any(|d| &d.id == id))
        {
            return Err(Error::InvalidArgument(format!(
                "split tag for unknown document `{id}`"
            )));
        }
        for (doc, slot) in self.documents.iter().zip(self.splits.iter_mut()) {
            *slot = *by_id.get(doc.id.as_str()).ok_or_else(|| {
                Error::InvalidArgument(format!("document `{}` has no split tag", doc.id))
            })?;
        }
        Ok(self)
    }

    pub(crate) fn set_splits(&mut self, splits: Vec<Split>) {
        debug_assert_eq!(splits.len(), self.documents.len());
        self.splits = splits;
    }

    /// Per-role sentence counts over the given documents.
    pub fn role_frequencies<'a>(
        docs: impl IntoIterator<Item = &'a Document>,
        num_roles: usize,
    ) -> Vec<u64> {
        let mut freq = vec![0u64; num_roles];
        for doc in docs {
            for &l in &doc.labels {
                freq[l] += 1;
            }
        }
        freq
    }

    pub fn stats(&self) -> CorpusStats {
        let mut per_split = Vec::new();
        for split in [Split::Train, Split::Val, Split::Test] {
            let docs = self.docs_in(split);
            if docs.is_empty() {
                continue;
            }
            per_split.push(SplitStats {
                split,
                documents: docs.len(),
                sentences: docs.iter().map(|d| d.len()).sum(),
            });
        }
        CorpusStats {
            documents: self.documents.len(),
            sentences: self.num_sentences(),
            roles: self.inventory.len(),
            role_names: self.inventory.roles().to_vec(),
            splits: per_split,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitStats {
    pub split: Split,
    pub documents: usize,
    pub sentences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub sentences: usize,
    pub roles: usize,
    pub role_names: Vec<String>,
    pub splits: Vec<SplitStats>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct DocumentRecord {
    pub id: String,
    pub sentences: Vec<String>,
    pub labels: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitRecord {
    id: String,
    split: Split,
}

fn read_records(input: &str) -> Result<Vec<DocumentRecord>> {
    let mut records = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: DocumentRecord =
            serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                line: lineno + 1,
                message: e.to_string(),
            })?;
        if record.sentences.len() != record.labels.len() {
            return Err(Error::LengthMismatch {
                doc_id: record.id,
                sentences: record.sentences.len(),
                labels: record.labels.len(),
            });
        }
        if record.sentences.is_empty() {
            return Err(Error::EmptyDocument(record.id));
        }
        records.push(record);
    }
    Ok(records)
}

fn records_to_corpus(records: Vec<DocumentRecord>, inventory: RoleInventory) -> Result<Corpus> {
    let documents = records
        .into_iter()
        .map(|r| {
            let labels = r
                .labels
                .iter()
                .map(|l| inventory.id(l).ok_or_else(|| Error::UnknownRole(l.clone())))
                .collect::<Result<Vec<_>>>()?;
            Ok(Document {
                id: r.id,
                sentences: r.sentences,
                labels,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(inventory, documents)
}

/// Parses line-delimited records; the inventory is the sorted set of observed labels.
pub fn parse_corpus(input: &str) -> Result<Corpus> {
    let records = read_records(input)?;
    let inventory = RoleInventory::from_observed(
        records
            .iter()
            .flat_map(|r| r.labels.iter().map(String::as_str)),
    )?;
    records_to_corpus(records, inventory)
}

/// Parses records against a fixed inventory; labels outside it are errors.
pub fn parse_corpus_with_inventory(input: &str, inventory: RoleInventory) -> Result<Corpus> {
    records_to_corpus(read_records(input)?, inventory)
}

pub fn serialize_corpus(corpus: &Corpus) -> Result<String> {
    let mut out = String::new();
    for doc in &corpus.documents {
        let record = DocumentRecord {
            id: doc.id.clone(),
            sentences: doc.sentences.clone(),
            labels: doc
                .labels
                .iter()
                .map(|&l| corpus.inventory.name(l).to_owned())
                .collect(),
        };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_splits(input: &str) -> Result<Vec<(String, Split)>> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(lineno, line)| {
            let rec: SplitRecord = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            Ok((rec.id, rec.split))
        })
        .collect()
}

pub fn serialize_splits(corpus: &Corpus) -> Result<String> {
    let mut out = String::new();
    for (doc, &split) in corpus.documents.iter().zip(&corpus.splits) {
        out.push_str(&serde_json::to_string(&SplitRecord {
            id: doc.id.clone(),
            split,
        })?);
        out.push('\n');
    }
    Ok(out)
}

/// Lowercased alphanumeric tokens; whitespace and punctuation separate tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}
