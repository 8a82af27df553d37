use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Split};
use crate::error::{Error, Result};

// Products such as 0.29 * 100 land just below the integer.
const FLOOR_SLACK: f64 = 1e-9;

/// Document-level random split. Validation and test sizes are floor-rounded and
/// the remainder goes to train. The assignment depends only on `seed` and the
/// document count.
pub fn split_corpus(corpus: Corpus, ratios: (f64, f64, f64), seed: u64) -> Result<Corpus> {
    let (train, val, test) = ratios;
    let parts = [train, val, test];
    if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be non-negative, got {ratios:?}"
        )));
    }
    if (train + val + test - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must sum to 1, got {}",
            train + val + test
        )));
    }
    let n = corpus.documents().len();
    let nonzero = parts.iter().filter(|r| **r > 0.0).count();
    if n < nonzero {
        return Err(Error::TooFewDocuments {
            documents: n,
            parts: nonzero,
        });
    }

    let n_val = (n as f64 * val + FLOOR_SLACK).floor() as usize;
    let n_test = (n as f64 * test + FLOOR_SLACK).floor() as usize;
    let n_train = n - n_val - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut splits = vec![Split::Train; n];
    for (pos, &doc) in order.iter().enumerate() {
        splits[doc] = if pos < n_train {
            Split::Train
        } else if pos < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    let mut corpus = corpus;
    corpus.set_splits(splits);
    Ok(corpus)
}
