//! Per-document difficulty scores and easy-to-hard bucketing.
//!
//! Four scorers, all oriented so that a higher value means a harder document:
//!
//! * rhetorical shifts: adjacent label changes per sentence;
//! * inversions against an expert-given role order;
//! * inversions against an order derived from training transitions;
//! * negative per-sentence log-likelihood under the transition matrix.
//!
//! Inversion counts are normalized by `m(m-1)/2` so documents of different
//! lengths are comparable; the raw count is kept on the score.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, RoleInventory};
use crate::discourse::{derive_canonical_order, CanonicalOrder, TransitionMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Shifts,
    ExpertInversions,
    DataInversions,
    NegLoglik,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Shifts,
        Metric::ExpertInversions,
        Metric::DataInversions,
        Metric::NegLoglik,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Shifts => "shifts",
            Metric::ExpertInversions => "expert_inversions",
            Metric::DataInversions => "data_inversions",
            Metric::NegLoglik => "neg_loglik",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shifts" => Ok(Metric::Shifts),
            "expert_inversions" | "expert-inv" => Ok(Metric::ExpertInversions),
            "data_inversions" | "data-inv" => Ok(Metric::DataInversions),
            "neg_loglik" | "neg-loglik" => Ok(Metric::NegLoglik),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyScore {
    pub doc_id: String,
    pub metric: Metric,
    pub value: f64,
    /// Unnormalized inversion count for the inversion metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_inversions: Option<u64>,
}

/// Adjacent label changes divided by document length.
pub fn score_rhetorical_shifts(doc: &Document) -> DifficultyScore {
    let shifts = doc.labels.windows(2).filter(|w| w[0] != w[1]).count();
    DifficultyScore {
        doc_id: doc.id.clone(),
        metric: Metric::Shifts,
        value: shifts as f64 / doc.len() as f64,
        raw_inversions: None,
    }
}

/// Number of pairs `i < j` with `values[i] > values[j]`, by merge sort.
/// Equal values are not inversions.
pub fn count_inversions(values: &[usize]) -> u64 {
    let mut data = values.to_vec();
    let mut scratch = vec![0; data.len()];
    sort_counting(&mut data, &mut scratch)
}

fn sort_counting(data: &mut [usize], scratch: &mut [usize]) -> u64 {
    let n = data.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = {
        let (left, right) = data.split_at_mut(mid);
        let (sl, sr) = scratch.split_at_mut(mid);
        sort_counting(left, sl) + sort_counting(right, sr)
    };

    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        // `<=` keeps ties out of the count.
        if data[i] <= data[j] {
            scratch[k] = data[i];
            i += 1;
        } else {
            scratch[k] = data[j];
            count += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    scratch[k..k + mid - i].copy_from_slice(&data[i..mid]);
    k += mid - i;
    scratch[k..k + n - j].copy_from_slice(&data[j..n]);
    data.copy_from_slice(&scratch[..n]);
    count
}

/// Inversions of the document's label ranks, normalized by `m(m-1)/2`.
pub fn score_inversions(doc: &Document, order: &CanonicalOrder, metric: Metric) -> DifficultyScore {
    let ranks: Vec<usize> = doc.labels.iter().map(|&l| order.rank(l)).collect();
    let inversions = count_inversions(&ranks);
    let m = doc.len() as u64;
    let value = if m >= 2 {
        inversions as f64 / (m * (m - 1) / 2) as f64
    } else {
        0.0
    };
    DifficultyScore {
        doc_id: doc.id.clone(),
        metric,
        value,
        raw_inversions: Some(inversions),
    }
}

/// Negative log-likelihood of the label sequence per sentence.
///
/// `include_start` adds the START transition into the first label.
pub fn score_neg_loglik(
    doc: &Document,
    tm: &TransitionMatrix,
    include_start: bool,
    inventory: Option<&RoleInventory>,
) -> Result<DifficultyScore> {
    let name = |r: Option<usize>| match (r, inventory) {
        (None, _) => crate::discourse::START_STATE.to_owned(),
        (Some(r), Some(inv)) => inv.name(r).to_owned(),
        (Some(r), None) => r.to_string(),
    };
    let mut loglik = 0.0;
    let mut term = |from: Option<usize>, to: usize| -> Result<()> {
        let p = tm.prob(from, to);
        if p <= 0.0 {
            return Err(Error::InfiniteDifficulty {
                doc_id: doc.id.clone(),
                from: name(from),
                to: name(Some(to)),
            });
        }
        loglik += p.ln();
        Ok(())
    };
    if include_start {
        term(None, doc.labels[0])?;
    }
    for w in doc.labels.windows(2) {
        term(Some(w[0]), w[1])?;
    }
    // -0.0 for a certain sequence would print as "-0"
    let value = if loglik == 0.0 {
        0.0
    } else {
        -loglik / doc.len() as f64
    };
    Ok(DifficultyScore {
        doc_id: doc.id.clone(),
        metric: Metric::NegLoglik,
        value,
        raw_inversions: None,
    })
}

/// A metric together with the statistics it needs, fitted on training documents.
#[derive(Debug, Clone)]
pub enum DifficultyScorer {
    Shifts,
    Inversions {
        metric: Metric,
        order: CanonicalOrder,
    },
    NegLoglik {
        transitions: TransitionMatrix,
        include_start: bool,
    },
}

impl DifficultyScorer {
    /// Fits the scorer. `expert_order` is required for expert inversions.
    pub fn fit(
        metric: Metric,
        train_docs: &[&Document],
        num_roles: usize,
        alpha: f64,
        include_start: bool,
        expert_order: Option<&CanonicalOrder>,
    ) -> Result<Self> {
        Ok(match metric {
            Metric::Shifts => DifficultyScorer::Shifts,
            Metric::ExpertInversions => DifficultyScorer::Inversions {
                metric,
                order: expert_order
                    .ok_or_else(|| {
                        Error::InvalidArgument(
                            "expert inversions need an expert order file (--expert-order)".into(),
                        )
                    })?
                    .clone(),
            },
            Metric::DataInversions => DifficultyScorer::Inversions {
                metric,
                order: derive_canonical_order(&TransitionMatrix::estimate(
                    train_docs, num_roles, alpha,
                )?),
            },
            Metric::NegLoglik => DifficultyScorer::NegLoglik {
                transitions: TransitionMatrix::estimate(train_docs, num_roles, alpha)?,
                include_start,
            },
        })
    }

    pub fn score(&self, doc: &Document) -> Result<DifficultyScore> {
        match self {
            DifficultyScorer::Shifts => Ok(score_rhetorical_shifts(doc)),
            DifficultyScorer::Inversions { metric, order } => {
                Ok(score_inversions(doc, order, *metric))
            }
            DifficultyScorer::NegLoglik {
                transitions,
                include_start,
            } => score_neg_loglik(doc, transitions, *include_start, None),
        }
    }

    pub fn score_all(&self, docs: &[&Document]) -> Result<Vec<DifficultyScore>> {
        docs.iter().map(|d| self.score(d)).collect()
    }
}

/// Documents split into equal-frequency buckets, easiest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketAssignment {
    pub num_buckets: usize,
    /// Doc ids per bucket, in ascending difficulty order.
    pub buckets: Vec<Vec<String>>,
}

impl BucketAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        self.buckets.iter().map(Vec::len).collect()
    }

    pub fn num_documents(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }
}

fn by_difficulty(a: &DifficultyScore, b: &DifficultyScore) -> Ordering {
    a.value
        .total_cmp(&b.value)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Sorts by `(value, doc_id)` and cuts into `num_buckets` contiguous groups whose
/// sizes differ by at most one; the earliest buckets take the remainder.
pub fn rank_and_bucket(scores: &[DifficultyScore], num_buckets: usize) -> Result<BucketAssignment> {
    if num_buckets == 0 {
        return Err(Error::InvalidArgument("number of buckets must be >= 1".into()));
    }
    if num_buckets > scores.len() {
        return Err(Error::InvalidArgument(format!(
            "{num_buckets} buckets requested for {} documents",
            scores.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| s.value.is_nan()) {
        return Err(Error::NonFinite(format!("difficulty of `{}` is NaN", bad.doc_id)));
    }
    let mut sorted: Vec<&DifficultyScore> = scores.iter().collect();
    sorted.sort_by(|a, b| by_difficulty(a, b));

    let base = scores.len() / num_buckets;
    let extra = scores.len() % num_buckets;
    let mut buckets = Vec::with_capacity(num_buckets);
    let mut iter = sorted.into_iter();
    for k in 0..num_buckets {
        let size = base + usize::from(k < extra);
        buckets.push(iter.by_ref().take(size).map(|s| s.doc_id.clone()).collect());
    }
    Ok(BucketAssignment {
        num_buckets,
        buckets,
    })
}

pub fn write_scores_csv(scores: &[DifficultyScore]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["doc_id", "metric", "value"])?;
    for s in scores {
        writer.write_record([s.doc_id.as_str(), s.metric.as_str(), &s.value.to_string()])?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_scores_csv(text: &str) -> Result<Vec<DifficultyScore>> {
    #[derive(Deserialize)]
    struct Row {
        doc_id: String,
        metric: String,
        value: f64,
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize::<Row>()
        .map(|row| {
            let row = row?;
            Ok(DifficultyScore {
                doc_id: row.doc_id,
                metric: row.metric.parse()?,
                value: row.value,
                raw_inversions: None,
            })
        })
        .collect()
}
