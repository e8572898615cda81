use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{RatingMatrix, RatingRecord};
use crate::error::{Error, Result};

/// A train/test partition of one dataset.
///
/// `train` keeps the full user and item index of the source matrix, so items
/// that only occur in the test side still exist (as isolated graph nodes).
#[derive(Debug, Clone)]
pub struct Split {
    pub train: RatingMatrix,
    pub test: Vec<RatingRecord>,
    pub fraction: f64,
    pub seed: u64,
}

impl Split {
    /// Test records resolved to `(user index, item index, rating)`.
    pub fn test_indexed(&self) -> Vec<(usize, usize, f64)> {
        self.test
            .iter()
            .map(|r| {
                let u = self.train.users().get(&r.user).expect("test user in shared index");
                let i = self.train.items().get(&r.item).expect("test item in shared index");
                (u, i, r.rating)
            })
            .collect()
    }
}

/// Splits ratings into `round(fraction * n)` training records and the rest
/// for testing.
///
/// Records are taken in [`RatingMatrix::entries`] order and shuffled with a
/// ChaCha8 stream keyed on `seed`; the first `n - round(fraction * n)`
/// shuffled positions form the test side. Every subset of that size is
/// equally likely and the result is bit-identical on every platform.
pub fn split_ratings(matrix: &RatingMatrix, fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let entries: Vec<(usize, usize, f64)> = matrix.entries().collect();
    let n = entries.len();
    let train_count = (fraction * n as f64).round() as usize;
    let test_count = n - train_count;

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut is_test = vec![false; n];
    for &pos in &order[..test_count] {
        is_test[pos] = true;
    }

    let mut train = RatingMatrix::with_index(matrix.users().clone(), matrix.items().clone(), matrix.bounds());
    let mut test = Vec::with_capacity(test_count);
    for (pos, &(u, i, r)) in entries.iter().enumerate() {
        if is_test[pos] {
            test.push(matrix.record(u, i, r));
        } else {
            train.push(u, i, r);
        }
    }
    train.finish();
    Ok(Split {
        train,
        test,
        fraction,
        seed,
    })
}

/// Writes one `user,item,rating` line per test record.
pub fn write_split_manifest<W: Write>(split: &Split, mut out: W) -> Result<()> {
    for r in &split.test {
        writeln!(out, "{},{},{}", r.user, r.item, r.rating)?;
    }
    Ok(())
}
