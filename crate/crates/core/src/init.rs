use ndarray::Array2;
use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::real::Real;

/// Glorot-uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_bound(out_dim: usize, in_dim: usize) -> f64 {
    (6.0 / (in_dim + out_dim) as f64).sqrt()
}

/// Glorot-uniform `[out_dim x in_dim]` matrix, deterministic in `seed`.
pub fn init_xavier<T: Real>(shape: (usize, usize), seed: u64) -> Result<Array2<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_xavier_with(shape, &mut rng)
}

pub fn init_xavier_with<T: Real, R: Rng + ?Sized>(shape: (usize, usize), rng: &mut R) -> Result<Array2<T>> {
    let (out_dim, in_dim) = shape;
    if out_dim == 0 || in_dim == 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot initialize a {out_dim}x{in_dim} weight matrix"
        )));
    }
    let bound = T::of(xavier_bound(out_dim, in_dim));
    let dist = Uniform::new_inclusive(-bound, bound);
    Ok(Array2::from_shape_simple_fn(shape, || dist.sample(rng)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_within_glorot_bound() {
        let w: Array2<f32> = init_xavier((128, 17_768), 3).unwrap();
        let bound = 0.018310392_f32; // sqrt(6 / 17896)
        assert!(w.iter().all(|v| v.abs() <= bound));
        // the draw actually spans the interval
        let max = w.iter().fold(0f32, |m, v| m.max(v.abs()));
        assert!(max > 0.99 * bound);
    }

    #[test]
    fn deterministic_in_seed() {
        let a: Array2<f64> = init_xavier((7, 5), 42).unwrap();
        let b: Array2<f64> = init_xavier((7, 5), 42).unwrap();
        let c: Array2<f64> = init_xavier((7, 5), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(init_xavier::<f64>((0, 5), 1).is_err());
        assert!(init_xavier::<f64>((5, 0), 1).is_err());
    }
}
