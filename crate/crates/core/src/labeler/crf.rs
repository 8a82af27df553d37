//! Linear-chain CRF inference in log space.
//!
//! A label path `y` over `m` positions scores
//! `start(y_0) + sum_i e[i][y_i] + sum_i pair(y_i, y_{i+1}) + stop(y_{m-1})`.

use serde::{Deserialize, Serialize};

/// Transition scores over `n` labels plus START (as source) and STOP (as target),
/// stored as an `(n+1) x (n+1)` row-major table. Row `n` is START, column `n` is
/// STOP; the START -> STOP cell is unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transitions {
    n: usize,
    scores: Vec<f64>,
}

impl Transitions {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            scores: vec![0.0; (n + 1) * (n + 1)],
        }
    }

    pub fn from_scores(n: usize, scores: Vec<f64>) -> Self {
        assert_eq!(scores.len(), (n + 1) * (n + 1));
        Self { n, scores }
    }

    pub fn num_labels(&self) -> usize {
        self.n
    }

    pub fn pair_index(&self, from: usize, to: usize) -> usize {
        from * (self.n + 1) + to
    }

    pub fn start_index(&self, to: usize) -> usize {
        self.n * (self.n + 1) + to
    }

    pub fn stop_index(&self, from: usize) -> usize {
        from * (self.n + 1) + self.n
    }

    pub fn pair(&self, from: usize, to: usize) -> f64 {
        self.scores[self.pair_index(from, to)]
    }

    pub fn start(&self, to: usize) -> f64 {
        self.scores[self.start_index(to)]
    }

    pub fn stop(&self, from: usize) -> f64 {
        self.scores[self.stop_index(from)]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn scores_mut(&mut self) -> &mut [f64] {
        &mut self.scores
    }
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Total score of one label path.
pub fn path_score(emissions: &[Vec<f64>], trans: &Transitions, path: &[usize]) -> f64 {
    let mut s = trans.start(path[0]) + emissions[0][path[0]];
    for i in 1..path.len() {
        s += trans.pair(path[i - 1], path[i]) + emissions[i][path[i]];
    }
    s + trans.stop(path[path.len() - 1])
}

#[derive(Debug, Clone)]
pub struct ForwardBackward {
    pub log_z: f64,
    /// `alpha[i][y]`: log-sum of prefix paths ending in `y` at `i`, emission included.
    pub alpha: Vec<Vec<f64>>,
    /// `beta[i][y]`: log-sum of suffix paths leaving `y` at `i`, STOP included.
    pub beta: Vec<Vec<f64>>,
    /// `P(y_i = y)`.
    pub marginals: Vec<Vec<f64>>,
    /// `P(y_i = a, y_{i+1} = b)` for `i < m - 1`.
    pub pairwise: Vec<Vec<Vec<f64>>>,
}

pub fn forward_backward(emissions: &[Vec<f64>], trans: &Transitions) -> ForwardBackward {
    let m = emissions.len();
    let n = trans.num_labels();
    assert!(m > 0, "empty sequence");

    let mut alpha = vec![vec![0.0; n]; m];
    for y in 0..n {
        alpha[0][y] = trans.start(y) + emissions[0][y];
    }
    for i in 1..m {
        for y in 0..n {
            let prev = &alpha[i - 1];
            alpha[i][y] =
                emissions[i][y] + log_sum_exp((0..n).map(|a| prev[a] + trans.pair(a, y)));
        }
    }

    let mut beta = vec![vec![0.0; n]; m];
    for y in 0..n {
        beta[m - 1][y] = trans.stop(y);
    }
    for i in (0..m - 1).rev() {
        for y in 0..n {
            let next = &beta[i + 1];
            let e = &emissions[i + 1];
            beta[i][y] = log_sum_exp((0..n).map(|b| trans.pair(y, b) + e[b] + next[b]));
        }
    }

    let log_z = log_sum_exp((0..n).map(|y| alpha[m - 1][y] + trans.stop(y)));

    let marginals = (0..m)
        .map(|i| (0..n).map(|y| (alpha[i][y] + beta[i][y] - log_z).exp()).collect())
        .collect();
    let pairwise = (0..m.saturating_sub(1))
        .map(|i| {
            (0..n)
                .map(|a| {
                    (0..n)
                        .map(|b| {
                            (alpha[i][a] + trans.pair(a, b) + emissions[i + 1][b] + beta[i + 1][b]
                                - log_z)
                                .exp()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    ForwardBackward {
        log_z,
        alpha,
        beta,
        marginals,
        pairwise,
    }
}

/// Highest-scoring path and its score. Ties go to the lower label id.
pub fn viterbi(emissions: &[Vec<f64>], trans: &Transitions) -> (Vec<usize>, f64) {
    let m = emissions.len();
    let n = trans.num_labels();
    assert!(m > 0, "empty sequence");

    let mut score: Vec<f64> = (0..n).map(|y| trans.start(y) + emissions[0][y]).collect();
    let mut back = vec![vec![0usize; n]; m];
    for i in 1..m {
        let mut next = vec![0.0; n];
        for y in 0..n {
            let mut best = 0;
            let mut best_score = score[0] + trans.pair(0, y);
            for a in 1..n {
                let s = score[a] + trans.pair(a, y);
                if s > best_score {
                    best = a;
                    best_score = s;
                }
            }
            back[i][y] = best;
            next[y] = best_score + emissions[i][y];
        }
        score = next;
    }

    let mut last = 0;
    let mut best = score[0] + trans.stop(0);
    for y in 1..n {
        let s = score[y] + trans.stop(y);
        if s > best {
            last = y;
            best = s;
        }
    }
    let mut path = vec![0; m];
    path[m - 1] = last;
    for i in (1..m).rev() {
        path[i - 1] = back[i][path[i]];
    }
    (path, best)
}
