//! Role-transition statistics and canonical discourse orders.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, RoleInventory};
use crate::error::{Error, Result};

/// First-order transition probabilities between roles, with a synthetic START
/// state as row 0. Row `a + 1` holds transitions out of role `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    alpha: f64,
    counts: Vec<Vec<u64>>,
    probs: Vec<Vec<f64>>,
    role_frequency: Vec<u64>,
    uniform_rows: Vec<usize>,
}

impl TransitionMatrix {
    /// Additive-smoothed maximum-likelihood estimate from the label sequences.
    ///
    /// With `alpha == 0` a role never seen as a transition source has no defined
    /// row; such rows are set to uniform and listed in [`Self::uniform_rows`].
    pub fn estimate(docs: &[&Document], num_roles: usize, alpha: f64) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::InvalidArgument(
                "transition estimation needs at least one document".into(),
            ));
        }
        if num_roles == 0 {
            return Err(Error::InvalidArgument("no roles".into()));
        }
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "smoothing constant must be finite and >= 0, got {alpha}"
            )));
        }

        let mut counts = vec![vec![0u64; num_roles]; num_roles + 1];
        for doc in docs {
            let Some(&first) = doc.labels.first() else {
                continue;
            };
            counts[0][first] += 1;
            for pair in doc.labels.windows(2) {
                counts[pair[0] + 1][pair[1]] += 1;
            }
        }
        let role_frequency = Corpus::role_frequencies(docs.iter().copied(), num_roles);

        let mut uniform_rows = Vec::new();
        let probs = counts
            .iter()
            .enumerate()
            .map(|(row, c)| {
                let total: u64 = c.iter().sum();
                let denom = total as f64 + alpha * num_roles as f64;
                if denom == 0.0 {
                    uniform_rows.push(row);
                    vec![1.0 / num_roles as f64; num_roles]
                } else {
                    c.iter().map(|&n| (n as f64 + alpha) / denom).collect()
                }
            })
            .collect();
        for &row in &uniform_rows {
            log::warn!("transition row {row} has no observations and no smoothing; using uniform");
        }

        Ok(Self {
            alpha,
            counts,
            probs,
            role_frequency,
            uniform_rows,
        })
    }

    pub fn num_roles(&self) -> usize {
        self.role_frequency.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `P(next = to | current = from)`; `from == None` is the START state.
    pub fn prob(&self, from: Option<usize>, to: usize) -> f64 {
        self.probs[from.map_or(0, |a| a + 1)][to]
    }

    pub fn start_row(&self) -> &[f64] {
        &self.probs[0]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.probs[from + 1]
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// Sentence counts per role in the estimation documents.
    pub fn role_frequency(&self) -> &[u64] {
        &self.role_frequency
    }

    /// Rows that fell back to uniform (0 = START, `a + 1` = role `a`).
    pub fn uniform_rows(&self) -> &[usize] {
        &self.uniform_rows
    }

    /// Divides every row by its sum.
    pub fn renormalized(&self) -> Self {
        let mut out = self.clone();
        for row in &mut out.probs {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|p| *p /= s);
            }
        }
        out
    }

    pub fn export(&self, inventory: &RoleInventory) -> TransitionExport {
        let mut states = vec![START_STATE.to_owned()];
        states.extend(inventory.roles().iter().cloned());
        TransitionExport {
            roles: inventory.roles().to_vec(),
            states,
            alpha: self.alpha,
            counts: self.counts.clone(),
            probs: self.probs.clone(),
            uniform_rows: self.uniform_rows.clone(),
        }
    }
}

pub const START_STATE: &str = "<START>";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionExport {
    pub roles: Vec<String>,
    /// Row labels: START followed by the roles.
    pub states: Vec<String>,
    pub alpha: f64,
    pub counts: Vec<Vec<u64>>,
    pub probs: Vec<Vec<f64>>,
    pub uniform_rows: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderSource {
    Expert,
    DataDerived,
}

/// A rank per role; rank 0 is expected earliest in a judgment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalOrder {
    ranks: Vec<usize>,
    source: OrderSource,
}

impl CanonicalOrder {
    /// Builds an order from roles listed earliest first. The list must be a
    /// permutation of `0..sequence.len()`.
    pub fn from_sequence(sequence: &[usize], source: OrderSource) -> Result<Self> {
        let n = sequence.len();
        let mut ranks = vec![usize::MAX; n];
        for (rank, &role) in sequence.iter().enumerate() {
            if role >= n || ranks[role] != usize::MAX {
                return Err(Error::InvalidArgument(format!(
                    "role order {sequence:?} is not a permutation"
                )));
            }
            ranks[role] = rank;
        }
        Ok(Self { ranks, source })
    }

    pub fn rank(&self, role: usize) -> usize {
        self.ranks[role]
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn source(&self) -> OrderSource {
        self.source
    }

    /// Role ids, earliest first.
    pub fn sequence(&self) -> Vec<usize> {
        let mut seq = vec![0; self.ranks.len()];
        for (role, &rank) in self.ranks.iter().enumerate() {
            seq[rank] = role;
        }
        seq
    }
}

/// Greedy most-probable walk: start at the likeliest initial role, then keep
/// moving to the likeliest role not yet visited. Ties go to the more frequent
/// role, then the lower id.
pub fn derive_canonical_order(tm: &TransitionMatrix) -> CanonicalOrder {
    let n = tm.num_roles();
    let freq = tm.role_frequency();
    let better = |row: &[f64], a: usize, b: usize| -> Ordering {
        row[a]
            .partial_cmp(&row[b])
            .unwrap_or(Ordering::Equal)
            .then(freq[a].cmp(&freq[b]))
            .then(b.cmp(&a))
    };

    let mut visited = vec![false; n];
    let mut sequence = Vec::with_capacity(n);
    let mut row = tm.start_row();
    while sequence.len() < n {
        let next = (0..n)
            .filter(|&r| !visited[r])
            .max_by(|&a, &b| better(row, a, b))
            .expect("an unvisited role remains");
        visited[next] = true;
        sequence.push(next);
        row = tm.row(next);
    }
    CanonicalOrder::from_sequence(&sequence, OrderSource::DataDerived)
        .expect("greedy walk visits each role once")
}

/// Reads an expert order: one role name per line, earliest first. Inventory
/// roles missing from the file are appended by descending `frequency`, then id.
pub fn load_expert_order(
    text: &str,
    inventory: &RoleInventory,
    frequency: &[u64],
) -> Result<CanonicalOrder> {
    let mut sequence = Vec::with_capacity(inventory.len());
    let mut seen = HashSet::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let role = inventory
            .id(line)
            .ok_or_else(|| Error::UnknownRole(line.to_owned()))?;
        if !seen.insert(role) {
            return Err(Error::InvalidArgument(format!(
                "role `{line}` listed twice in expert order"
            )));
        }
        sequence.push(role);
    }
    let mut missing: Vec<usize> = (0..inventory.len()).filter(|r| !seen.contains(r)).collect();
    missing.sort_by(|&a, &b| frequency[b].cmp(&frequency[a]).then(a.cmp(&b)));
    sequence.extend(missing);
    CanonicalOrder::from_sequence(&sequence, OrderSource::Expert)
}
