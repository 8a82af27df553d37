//! Hard and soft cross-entropy losses with gradients w.r.t. emission and
//! transition scores.
//!
//! All losses are averaged over the `m` sentences of a document.
//!
//! * softmax head: `-(1/m) sum_i sum_y t_iy log softmax(e_i)_y`;
//! * CRF head, one-hot targets: `(log Z - score(gold)) / m`;
//! * CRF head, soft targets: `-(1/m) sum_i sum_y t_iy log P(y_i = y)`, whose
//!   gradient is obtained by differentiating the forward and backward
//!   recursions in reverse.

use serde::{Deserialize, Serialize};

use super::crf::{forward_backward, log_sum_exp, path_score, Transitions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Crf,
    Softmax,
}

impl std::str::FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crf" => Ok(Head::Crf),
            "softmax" => Ok(Head::Softmax),
            other => Err(Error::InvalidArgument(format!("unknown head `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Hard(Vec<usize>),
    Soft(Vec<Vec<f64>>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Hard(l) => l.len(),
            Targets::Soft(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows that are exactly one-hot collapse to hard labels.
    pub fn normalized(self) -> Self {
        match self {
            Targets::Soft(rows) => {
                let hard: Option<Vec<usize>> = rows
                    .iter()
                    .map(|r| {
                        let hot = r.iter().position(|&x| x == 1.0)?;
                        r.iter()
                            .enumerate()
                            .all(|(j, &x)| j == hot || x == 0.0)
                            .then_some(hot)
                    })
                    .collect();
                match hard {
                    Some(labels) => Targets::Hard(labels),
                    None => Targets::Soft(rows),
                }
            }
            hard => hard,
        }
    }

    fn validate(&self, m: usize, n: usize) -> Result<()> {
        if self.len() != m {
            return Err(Error::DimensionMismatch {
                context: "targets per document",
                expected: m,
                actual: self.len(),
            });
        }
        match self {
            Targets::Hard(labels) => {
                if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
                    return Err(Error::InvalidArgument(format!("label id {bad} out of range")));
                }
            }
            Targets::Soft(rows) => {
                for (i, row) in rows.iter().enumerate() {
                    if row.len() != n {
                        return Err(Error::DimensionMismatch {
                            context: "target distribution",
                            expected: n,
                            actual: row.len(),
                        });
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > 1e-6 || row.iter().any(|&x| !(x >= 0.0)) {
                        return Err(Error::InvalidTarget { index: i, sum });
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradient {
    pub loss: f64,
    /// `d loss / d emissions[i][y]`.
    pub emissions: Vec<Vec<f64>>,
    /// `d loss / d transition score`, laid out like [`Transitions::scores`].
    pub transitions: Vec<f64>,
}

/// Loss and gradient for one document given its emission scores.
pub fn loss_and_gradient(
    head: Head,
    emissions: &[Vec<f64>],
    trans: &Transitions,
    targets: Targets,
) -> Result<ScoreGradient> {
    let m = emissions.len();
    let n = trans.num_labels();
    if m == 0 {
        return Err(Error::InvalidArgument("empty document".into()));
    }
    if let Some(row) = emissions.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            context: "emission row",
            expected: n,
            actual: row.len(),
        });
    }
    targets.validate(m, n)?;
    let out = match (head, targets.normalized()) {
        (Head::Softmax, Targets::Hard(labels)) => softmax_hard(emissions, &labels, n),
        (Head::Softmax, Targets::Soft(rows)) => softmax_soft(emissions, &rows, n),
        (Head::Crf, Targets::Hard(labels)) => crf_nll(emissions, trans, &labels),
        (Head::Crf, Targets::Soft(rows)) => crf_marginal_ce(emissions, trans, &rows),
    };
    if !out.loss.is_finite() {
        return Err(Error::NonFinite(format!("loss = {}", out.loss)));
    }
    Ok(out)
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(row.iter().copied());
    row.iter().map(|x| x - lse).collect()
}

fn softmax_hard(emissions: &[Vec<f64>], labels: &[usize], n: usize) -> ScoreGradient {
    let m = emissions.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(emissions.len());
    for (row, &gold) in emissions.iter().zip(labels) {
        let lp = log_softmax(row);
        loss -= lp[gold];
        grad.push(
            (0..n)
                .map(|y| (lp[y].exp() - f64::from(u8::from(y == gold))) / m)
                .collect(),
        );
    }
    ScoreGradient {
        loss: loss / m,
        emissions: grad,
        transitions: vec![0.0; (n + 1) * (n + 1)],
    }
}

fn softmax_soft(emissions: &[Vec<f64>], rows: &[Vec<f64>], n: usize) -> ScoreGradient {
    let m = emissions.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(emissions.len());
    for (row, t) in emissions.iter().zip(rows) {
        let lp = log_softmax(row);
        loss -= t.iter().zip(&lp).map(|(t, l)| t * l).sum::<f64>();
        let mass: f64 = t.iter().sum();
        grad.push((0..n).map(|y| (mass * lp[y].exp() - t[y]) / m).collect());
    }
    ScoreGradient {
        loss: loss / m,
        emissions: grad,
        transitions: vec![0.0; (n + 1) * (n + 1)],
    }
}

/// Adds the gradient of `scale * log Z` (the expected feature counts).
fn add_expectations(
    fb: &super::crf::ForwardBackward,
    trans: &Transitions,
    scale: f64,
    d_emis: &mut [Vec<f64>],
    d_trans: &mut [f64],
) {
    let m = d_emis.len();
    let n = trans.num_labels();
    for i in 0..m {
        for y in 0..n {
            d_emis[i][y] += scale * fb.marginals[i][y];
        }
    }
    for y in 0..n {
        d_trans[trans.start_index(y)] += scale * fb.marginals[0][y];
        d_trans[trans.stop_index(y)] += scale * fb.marginals[m - 1][y];
    }
    for pw in &fb.pairwise {
        for a in 0..n {
            for b in 0..n {
                d_trans[trans.pair_index(a, b)] += scale * pw[a][b];
            }
        }
    }
}

fn crf_nll(emissions: &[Vec<f64>], trans: &Transitions, gold: &[usize]) -> ScoreGradient {
    let m = emissions.len();
    let n = trans.num_labels();
    let scale = 1.0 / m as f64;
    let fb = forward_backward(emissions, trans);
    let loss = (fb.log_z - path_score(emissions, trans, gold)) * scale;

    let mut d_emis = vec![vec![0.0; n]; m];
    let mut d_trans = vec![0.0; (n + 1) * (n + 1)];
    add_expectations(&fb, trans, scale, &mut d_emis, &mut d_trans);
    for (i, &y) in gold.iter().enumerate() {
        d_emis[i][y] -= scale;
    }
    d_trans[trans.start_index(gold[0])] -= scale;
    d_trans[trans.stop_index(gold[m - 1])] -= scale;
    for w in gold.windows(2) {
        d_trans[trans.pair_index(w[0], w[1])] -= scale;
    }
    ScoreGradient {
        loss,
        emissions: d_emis,
        transitions: d_trans,
    }
}

fn crf_marginal_ce(emissions: &[Vec<f64>], trans: &Transitions, rows: &[Vec<f64>]) -> ScoreGradient {
    let m = emissions.len();
    let n = trans.num_labels();
    let scale = 1.0 / m as f64;
    let fb = forward_backward(emissions, trans);

    // loss = -(1/m) sum_iy t_iy (alpha_iy + beta_iy) + (sum t / m) log Z
    let mut loss = 0.0;
    let mut total_mass = 0.0;
    for i in 0..m {
        for y in 0..n {
            let t = rows[i][y];
            if t != 0.0 {
                loss -= t * (fb.alpha[i][y] + fb.beta[i][y] - fb.log_z);
            }
            total_mass += t;
        }
    }
    loss *= scale;

    let mut d_emis = vec![vec![0.0; n]; m];
    let mut d_trans = vec![0.0; (n + 1) * (n + 1)];
    add_expectations(&fb, trans, total_mass * scale, &mut d_emis, &mut d_trans);

    // Reverse pass through the forward recursion, seeded with -t/m.
    let mut adj: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().map(|t| -t * scale).collect())
        .collect();
    for i in (1..m).rev() {
        for y in 0..n {
            let a_bar = adj[i][y];
            d_emis[i][y] += a_bar;
            if a_bar == 0.0 {
                continue;
            }
            // alpha[i][y] - e[i][y] is the log-sum over predecessors
            let pivot = fb.alpha[i][y] - emissions[i][y];
            for a in 0..n {
                let w = (fb.alpha[i - 1][a] + trans.pair(a, y) - pivot).exp();
                adj[i - 1][a] += a_bar * w;
                d_trans[trans.pair_index(a, y)] += a_bar * w;
            }
        }
    }
    for y in 0..n {
        d_emis[0][y] += adj[0][y];
        d_trans[trans.start_index(y)] += adj[0][y];
    }

    // Reverse pass through the backward recursion.
    let mut adj: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().map(|t| -t * scale).collect())
        .collect();
    for i in 0..m - 1 {
        for y in 0..n {
            let b_bar = adj[i][y];
            if b_bar == 0.0 {
                continue;
            }
            for b in 0..n {
                let w = (trans.pair(y, b) + emissions[i + 1][b] + fb.beta[i + 1][b]
                    - fb.beta[i][y])
                    .exp();
                let g = b_bar * w;
                adj[i + 1][b] += g;
                d_trans[trans.pair_index(y, b)] += g;
                d_emis[i + 1][b] += g;
            }
        }
    }
    for y in 0..n {
        d_trans[trans.stop_index(y)] += adj[m - 1][y];
    }

    ScoreGradient {
        loss,
        emissions: d_emis,
        transitions: d_trans,
    }
}
