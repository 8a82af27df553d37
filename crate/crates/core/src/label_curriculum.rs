//! Label-similarity curriculum: soft target distributions that start spread over
//! similar roles and anneal toward one-hot.
//!
//! Row `i` of the target matrix is the training target for a sentence whose
//! gold role is `i`. Each update maps a row with off-diagonal mass `S` to
//!
//! ```text
//! v_ii <- 1 / (1 + eps * S)
//! v_ij <- eps * v_ij / (1 + eps * S)    (j != i)
//! ```
//!
//! which keeps rows stochastic and shrinks `S` to `eps * S / (1 + eps * S)`.

use serde::{Deserialize, Serialize};

use crate::corpus::RoleInventory;
use crate::error::{Error, Result};

/// Off-diagonal mass below which the target matrix counts as one-hot.
pub const IDENTITY_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilaritySource {
    Confusion,
    Embedding,
}

impl std::str::FromStr for SimilaritySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "confusion" => Ok(SimilaritySource::Confusion),
            "embedding" => Ok(SimilaritySource::Embedding),
            other => Err(Error::InvalidArgument(format!(
                "unknown similarity source `{other}`"
            ))),
        }
    }
}

/// Symmetric, non-negative, zero-diagonal role similarities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub sim: Vec<Vec<f64>>,
    pub source: SimilaritySource,
    /// Set when the input carried no off-diagonal signal and uniform
    /// similarities were substituted.
    pub fallback: bool,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.sim.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sim.is_empty()
    }
}

fn check_square<T>(m: &[Vec<T>], context: &'static str) -> Result<()> {
    if m.is_empty() {
        return Err(Error::InvalidArgument(format!("{context} is empty")));
    }
    for row in m {
        if row.len() != m.len() {
            return Err(Error::DimensionMismatch {
                context,
                expected: m.len(),
                actual: row.len(),
            });
        }
    }
    Ok(())
}

/// Symmetrized off-diagonal confusion counts: `sim_ij = (C_ij + C_ji) / 2`.
pub fn similarity_from_confusion(confusion: &[Vec<u64>]) -> Result<SimilarityMatrix> {
    check_square(confusion, "confusion matrix")?;
    let n = confusion.len();
    let mut sim = vec![vec![0.0; n]; n];
    let mut any = false;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sim[i][j] = (confusion[i][j] + confusion[j][i]) as f64 / 2.0;
                any |= sim[i][j] > 0.0;
            }
        }
    }
    let fallback = !any && n > 1;
    if fallback {
        log::warn!("confusion matrix has no off-diagonal counts; using uniform role similarity");
        for (i, row) in sim.iter_mut().enumerate() {
            for (j, s) in row.iter_mut().enumerate() {
                *s = if i == j { 0.0 } else { 1.0 };
            }
        }
    }
    Ok(SimilarityMatrix {
        sim,
        source: SimilaritySource::Confusion,
        fallback,
    })
}

/// Cosine similarities clipped at zero.
pub fn similarity_from_embeddings(vectors: &[Vec<f64>]) -> Result<SimilarityMatrix> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::InvalidArgument("no role embeddings".into()))?;
    let dim = first.len();
    let mut norms = Vec::with_capacity(vectors.len());
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "role embedding",
                expected: dim,
                actual: v.len(),
            });
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "embedding for role {i} has zero or non-finite norm"
            )));
        }
        norms.push(norm);
    }
    let n = vectors.len();
    let mut sim = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dot: f64 = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a * b).sum();
            let c = (dot / (norms[i] * norms[j])).clamp(0.0, 1.0);
            sim[i][j] = c;
            sim[j][i] = c;
        }
    }
    Ok(SimilarityMatrix {
        sim,
        source: SimilaritySource::Embedding,
        fallback: false,
    })
}

/// Parses `role<TAB>f1 f2 ...` lines and returns vectors in inventory order.
/// Every inventory role must be present; extra roles are errors.
pub fn parse_role_embeddings(text: &str, inventory: &RoleInventory) -> Result<Vec<Vec<f64>>> {
    let mut vectors: Vec<Option<Vec<f64>>> = vec![None; inventory.len()];
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::MalformedRecord {
            line: lineno + 1,
            message,
        };
        let (name, rest) = line
            .split_once('\t')
            .ok_or_else(|| malformed("expected `role<TAB>values`".into()))?;
        let role = inventory
            .id(name.trim())
            .ok_or_else(|| Error::UnknownRole(name.trim().to_owned()))?;
        let values = rest
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| malformed(format!("`{t}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if vectors[role].replace(values).is_some() {
            return Err(malformed(format!("role `{name}` listed twice")));
        }
    }
    vectors
        .into_iter()
        .enumerate()
        .map(|(id, v)| {
            v.ok_or_else(|| {
                Error::InvalidArgument(format!("no embedding for role `{}`", inventory.name(id)))
            })
        })
        .collect()
}

/// Row-stochastic soft-target matrix annealed toward the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMatrix {
    v: Vec<Vec<f64>>,
    step: usize,
    epsilon: f64,
}

impl TargetMatrix {
    /// `V^0 = (1 - eta) I + eta * row-normalized similarity`.
    ///
    /// Rows without off-diagonal similarity spread `eta` uniformly over the
    /// other roles.
    pub fn init(sim: &SimilarityMatrix, eta: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eta) {
            return Err(Error::InvalidArgument(format!(
                "initial off-diagonal mass must be in [0, 1), got {eta}"
            )));
        }
        check_epsilon(epsilon)?;
        check_square(&sim.sim, "similarity matrix")?;
        let n = sim.len();
        let mut v = vec![vec![0.0; n]; n];
        for (i, row) in v.iter_mut().enumerate() {
            row[i] = 1.0 - eta;
            if n == 1 || eta == 0.0 {
                row[i] = 1.0;
                continue;
            }
            let total: f64 = (0..n).filter(|&j| j != i).map(|j| sim.sim[i][j]).sum();
            for j in (0..n).filter(|&j| j != i) {
                row[j] = if total > 0.0 {
                    eta * sim.sim[i][j] / total
                } else {
                    eta / (n - 1) as f64
                };
            }
        }
        Ok(Self {
            v,
            step: 0,
            epsilon,
        })
    }

    pub fn identity(num_roles: usize, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        let v = (0..num_roles)
            .map(|i| (0..num_roles).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Ok(Self {
            v,
            step: 0,
            epsilon,
        })
    }

    /// Wraps an explicit row-stochastic matrix.
    pub fn from_rows(v: Vec<Vec<f64>>, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        check_square(&v, "target matrix")?;
        for (i, row) in v.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 || row.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::InvalidTarget { index: i, sum: s });
            }
        }
        Ok(Self { v, step: 0, epsilon })
    }

    /// One annealing step applied to every row.
    pub fn update(&mut self) {
        let eps = self.epsilon;
        for (i, row) in self.v.iter_mut().enumerate() {
            let off: f64 = row
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, x)| x)
                .sum();
            let denom = 1.0 + eps * off;
            for (j, x) in row.iter_mut().enumerate() {
                *x = if j == i { 1.0 / denom } else { eps * *x / denom };
            }
        }
        self.step += 1;
    }

    pub fn soft_targets(&self, label: usize) -> &[f64] {
        &self.v[label]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.v
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// `S_i = sum_{k != i} v_ik` per row.
    pub fn off_diagonal_mass(&self) -> Vec<f64> {
        self.v
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(|&(k, _)| k != i)
                    .map(|(_, x)| x)
                    .sum()
            })
            .collect()
    }

    pub fn max_off_diagonal_mass(&self) -> f64 {
        self.off_diagonal_mass().into_iter().fold(0.0, f64::max)
    }

    pub fn max_off_diagonal(&self) -> f64 {
        self.v
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().filter(move |&(j, _)| j != i))
            .map(|(_, &x)| x)
            .fold(0.0, f64::max)
    }

    pub fn is_identity(&self) -> bool {
        self.max_off_diagonal() < IDENTITY_TOLERANCE
    }

    /// Updates needed before [`Self::is_identity`] holds, capped at `cap`.
    pub fn steps_to_identity(&self, cap: usize) -> usize {
        let mut probe = self.clone();
        let mut steps = 0;
        while !probe.is_identity() && steps < cap {
            probe.update();
            steps += 1;
        }
        steps
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "decay factor must be in (0, 1), got {epsilon}"
        )))
    }
}

/// JSON emitted by the `simmatrix` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarityExport {
    pub roles: Vec<String>,
    pub source: SimilaritySource,
    pub fallback: bool,
    pub similarity: Vec<Vec<f64>>,
    pub eta: f64,
    pub epsilon: f64,
    pub initial_targets: Vec<Vec<f64>>,
    pub steps_to_identity: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(rows: Vec<Vec<f64>>) -> SimilarityMatrix {
        SimilarityMatrix {
            sim: rows,
            source: SimilaritySource::Embedding,
            fallback: false,
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn confusion_symmetrization() {
        let s = similarity_from_confusion(&[vec![8, 2], vec![1, 9]]).unwrap();
        assert_eq!(s.sim, vec![vec![0.0, 1.5], vec![1.5, 0.0]]);
        assert!(!s.fallback);

        let s = similarity_from_confusion(&[vec![5, 4, 0], vec![2, 5, 0], vec![0, 0, 5]]).unwrap();
        assert_eq!(s.sim[0][1], 3.0);
        assert_eq!(s.sim[1][0], 3.0);
        assert_eq!(s.sim[0][2], 0.0);
        assert_eq!(s.sim[1][2], 0.0);
    }

    #[test]
    fn perfect_confusion_falls_back_to_uniform() {
        let s = similarity_from_confusion(&[vec![3, 0, 0], vec![0, 4, 0], vec![0, 0, 1]]).unwrap();
        assert!(s.fallback);
        assert_eq!(s.sim[0], vec![0.0, 1.0, 1.0]);
        assert_eq!(s.sim[2], vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn confusion_must_be_square() {
        assert!(similarity_from_confusion(&[vec![1, 2]]).is_err());
    }

    #[test]
    fn embedding_cosines() {
        let s = similarity_from_embeddings(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(s.sim, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);

        let s = similarity_from_embeddings(&[vec![0.3, 0.4], vec![0.3, 0.4]]).unwrap();
        assert!(close(s.sim[0][1], 1.0, 1e-15));

        let r = std::f64::consts::FRAC_1_SQRT_2;
        let s = similarity_from_embeddings(&[vec![1.0, 0.0], vec![r, r]]).unwrap();
        assert!(close(s.sim[0][1], 0.7071, 1e-4));
        assert!(close(s.sim[0][1], 2f64.sqrt() / 2.0, 1e-15));

        let s = similarity_from_embeddings(&[vec![1.0, 0.0], vec![-1.0, 0.1]]).unwrap();
        assert_eq!(s.sim[0][1], 0.0);
    }

    #[test]
    fn embedding_errors() {
        assert!(similarity_from_embeddings(&[vec![0.0, 0.0], vec![1.0, 0.0]]).is_err());
        assert!(matches!(
            similarity_from_embeddings(&[vec![1.0, 0.0], vec![1.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn parse_embedding_file() {
        let inv = RoleInventory::from_observed(["A", "B"]).unwrap();
        let v = parse_role_embeddings("B\t0 1\nA\t1 0.5\n", &inv).unwrap();
        assert_eq!(v, vec![vec![1.0, 0.5], vec![0.0, 1.0]]);
        assert!(parse_role_embeddings("A\t1 0\n", &inv).is_err());
        assert!(parse_role_embeddings("A\t1 0\nB\t0 1\nC\t1 1\n", &inv).is_err());
        assert!(parse_role_embeddings("A 1 0\n", &inv).is_err());
    }

    #[test]
    fn init_examples() {
        let s = sim(vec![vec![0.0, 2.0], vec![2.0, 0.0]]);
        let v = TargetMatrix::init(&s, 0.0, 0.9).unwrap();
        assert_eq!(v.rows(), TargetMatrix::identity(2, 0.9).unwrap().rows());

        let v = TargetMatrix::init(&s, 0.5, 0.9).unwrap();
        assert_eq!(v.soft_targets(0), &[0.5, 0.5]);
        assert_eq!(v.soft_targets(1), &[0.5, 0.5]);

        let s = sim(vec![
            vec![0.0, 3.0, 1.0],
            vec![3.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ]);
        let v = TargetMatrix::init(&s, 0.4, 0.9).unwrap();
        let row = v.soft_targets(0);
        assert!(close(row[0], 0.6, 1e-15) && close(row[1], 0.3, 1e-15) && close(row[2], 0.1, 1e-15));
        assert!(TargetMatrix::init(&s, 1.0, 0.9).is_err());
        assert!(TargetMatrix::init(&s, 0.5, 1.0).is_err());
    }

    #[test]
    fn init_spreads_uniformly_when_a_row_has_no_similarity() {
        let s = sim(vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        let v = TargetMatrix::init(&s, 0.3, 0.9).unwrap();
        assert!(close(v.soft_targets(0)[1], 0.3, 1e-15));
    }

    #[test]
    fn update_example() {
        let mut v = TargetMatrix::from_rows(
            vec![
                vec![0.6, 0.3, 0.1],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            0.5,
        )
        .unwrap();
        v.update();
        let row = v.soft_targets(0);
        assert!(close(row[0], 1.0 / 1.2, 1e-15));
        assert!(close(row[1], 0.15 / 1.2, 1e-15));
        assert!(close(row[2], 0.05 / 1.2, 1e-15));
        assert!(close(row[1], 0.1250, 1e-4) && close(row[2], 0.0417, 1e-4));
        assert_eq!(v.soft_targets(1), &[0.0, 1.0, 0.0]);
        assert_eq!(v.step(), 1);
    }

    #[test]
    fn identity_is_a_fixed_point() {
        let mut v = TargetMatrix::identity(4, 0.3).unwrap();
        let before = v.rows().to_vec();
        v.update();
        assert_eq!(v.rows(), before.as_slice());
        assert!(v.is_identity());
        assert_eq!(v.steps_to_identity(100), 0);
    }

    #[test]
    fn off_diagonal_mass_recursion_scalar() {
        let s = sim(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let mut v = TargetMatrix::init(&s, 0.5, 0.9).unwrap();
        v.update();
        assert!(close(v.off_diagonal_mass()[0], 0.45 / 1.45, 1e-15));
        assert!(close(v.off_diagonal_mass()[0], 0.310345, 1e-6));
    }

    #[test]
    fn fifty_updates_reach_one_hot() {
        let s = sim(vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]]);
        let mut v = TargetMatrix::init(&s, 0.5, 0.8).unwrap();
        for _ in 0..50 {
            v.update();
        }
        for label in 0..3 {
            for (j, &x) in v.soft_targets(label).iter().enumerate() {
                let one_hot = if j == label { 1.0 } else { 0.0 };
                assert!((x - one_hot).abs() < 1e-4);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn target_strategy() -> impl Strategy<Value = (TargetMatrix, f64)> {
            (2usize..8, 0.0f64..0.99, 0.01f64..0.999).prop_flat_map(|(n, eta, eps)| {
                prop::collection::vec(0.0f64..10.0, n * n).prop_map(move |raw| {
                    let mut m = vec![vec![0.0; n]; n];
                    for i in 0..n {
                        for j in 0..n {
                            if i != j {
                                m[i][j] = (raw[i * n + j] + raw[j * n + i]) / 2.0;
                            }
                        }
                    }
                    (TargetMatrix::init(&sim(m), eta, eps).unwrap(), eps)
                })
            })
        }

        proptest! {
            #[test]
            fn updates_preserve_rows_and_follow_recursion((mut v, eps) in target_strategy()) {
                let s0 = v.off_diagonal_mass();
                let mut prev = v.clone();
                for t in 1..=100 {
                    v.update();
                    for (i, row) in v.rows().iter().enumerate() {
                        prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                        prop_assert!(row[i] > 0.0 && row[i] <= 1.0);
                        prop_assert!(row[i] >= prev.rows()[i][i]);
                        let s_prev = prev.off_diagonal_mass()[i];
                        let expected = eps * s_prev / (1.0 + eps * s_prev);
                        prop_assert!((v.off_diagonal_mass()[i] - expected).abs() <= 1e-12);
                        prop_assert!(v.off_diagonal_mass()[i] <= eps.powi(t) * s0[i] + 1e-15);
                    }
                    prev = v.clone();
                }
            }
        }
    }
}
