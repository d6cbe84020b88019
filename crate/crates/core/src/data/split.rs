use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Segment;
use crate::error::{Error, Result};

/// Segment ids of one cluster split three ways.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

/// `(train, validation, test)` sizes for `n` segments: a third (rounded up)
/// for test, then a third of the rest (rounded up) for validation.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let test = n.div_ceil(3);
    let validation = (n - test).div_ceil(3);
    (n - test - validation, validation, test)
}

/// Seeded shuffle of the segment ids (sorted first, so input order does not
/// matter), then test, validation, train in that order.
pub fn split_cluster(segments: &[Segment], seed: u64) -> Result<Split> {
    if segments.is_empty() {
        return Err(Error::EmptyCluster("no segments to split".into()));
    }
    let mut ids: Vec<String> = segments.iter().map(|s| s.id.clone()).collect();
    ids.sort();
    ids.dedup();
    if ids.len() != segments.len() {
        return Err(Error::Data("duplicate segment ids in cluster".into()));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (_, validation, test) = split_sizes(ids.len());
    let train = ids.split_off(test + validation);
    let validation_ids = ids.split_off(test);
    Ok(Split {
        train,
        validation: validation_ids,
        test: ids,
        seed,
    })
}
