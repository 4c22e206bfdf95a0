use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded 6:1:3 partition with counts ⌊0.6n⌋ / ⌊0.1n⌋ / remainder.
pub fn split_dataset<T: Clone>(items: &[T], seed: u64) -> Result<Splits<T>> {
    let n = items.len();
    if n < 10 {
        return Err(Error::Dataset(format!(
            "need at least 10 samples to split 6:1:3, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * 6 / 10;
    let n_val = n / 10;
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
    Ok(Splits {
        train: pick(&order[..n_train]),
        val: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let s = split_dataset(&(0..5000).collect::<Vec<_>>(), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (3000, 500, 1500));
        let s = split_dataset(&(0..10).collect::<Vec<_>>(), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 1, 3));
        assert!(split_dataset(&[1, 2, 3], 1).is_err());
    }

    #[test]
    fn partition_is_exhaustive_and_disjoint() {
        let items: Vec<u32> = (0..137).collect();
        let s = split_dataset(&items, 9).unwrap();
        let mut all = [s.train.clone(), s.val.clone(), s.test.clone()].concat();
        all.sort();
        assert_eq!(all, items);
        assert_eq!(split_dataset(&items, 9).unwrap(), s);
        assert_ne!(split_dataset(&items, 10).unwrap(), s);
    }
}
