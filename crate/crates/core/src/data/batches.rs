use std::marker::PhantomData;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::RatingDataset;
use crate::error::{Error, Result};
use crate::loss::Batch;
use crate::real::Real;

/// Dense `[users x n_items]` rating rows of the given users.
pub fn densify<T: Real>(train: &RatingDataset, users: &[u32]) -> Result<Array2<T>> {
    let mut out = Array2::zeros((users.len(), train.n_items()));
    for (row, &u) in users.iter().enumerate() {
        for e in train.user_ratings(u)? {
            out[[row, e.item as usize]] = T::of(e.rating as f64);
        }
    }
    Ok(out)
}

/// One epoch over all training users in a seeded random order.
pub struct BatchIter<'a, T> {
    train: &'a RatingDataset,
    order: Vec<u32>,
    batch_size: usize,
    pos: usize,
    _elem: PhantomData<T>,
}

impl<'a, T: Real> BatchIter<'a, T> {
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn n_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

impl<T: Real> Iterator for BatchIter<'_, T> {
    type Item = Batch<T>;

    fn next(&mut self) -> Option<Batch<T>> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let users = self.order[self.pos..end].to_vec();
        self.pos = end;
        let ratings = densify(self.train, &users).expect("users come from the dataset");
        let mask = ratings.mapv(|v: T| if v.is_zero() { T::zero() } else { T::one() });
        Some(Batch { ratings, mask, users })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl<T: Real> ExactSizeIterator for BatchIter<'_, T> {}

/// Mini-batches covering every training user exactly once; the final batch may be short.
pub fn batch_iterator<T: Real>(train: &RatingDataset, batch_size: usize, epoch_seed: u64) -> Result<BatchIter<'_, T>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let mut order: Vec<u32> = (0..train.n_users() as u32).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    Ok(BatchIter {
        train,
        order,
        batch_size,
        pos: 0,
        _elem: PhantomData,
    })
}
