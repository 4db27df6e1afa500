//! Synthetic timestamped rating logs.
//!
//! Ratings come from a low-rank model with user and item biases plus
//! Gaussian noise, rounded and clamped to the 1..=5 scale. Item popularity
//! follows a power law. Each user is active over a random span of days and
//! some items are released late, so a time split produces cold users and
//! items just like a real log.

use std::collections::HashSet;

use chrono::NaiveDate;
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{day_start, RatingRecord, MAX_RATING, MIN_RATING};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    /// Mean ratings per user; actual counts are exponentially distributed.
    pub ratings_per_user: f64,
    pub rank: usize,
    /// Standard deviation of the latent dot product.
    pub signal: f64,
    pub noise: f64,
    /// Exponent of the item popularity power law.
    pub popularity_skew: f64,
    /// Fraction of items released after the first day.
    pub late_items: f64,
    pub start: NaiveDate,
    pub days: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 2000,
            n_items: 500,
            ratings_per_user: 40.0,
            rank: 8,
            signal: 0.8,
            noise: 0.5,
            popularity_skew: 0.8,
            late_items: 0.1,
            start: NaiveDate::from_ymd_opt(2005, 1, 1).expect("valid date"),
            days: 365,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synthetic corpus: {m}")));
        if self.n_users == 0 || self.n_items < 2 || self.rank == 0 || self.days == 0 {
            return bad("users, rank and days must be positive and there must be at least 2 items");
        }
        if !self.ratings_per_user.is_finite() || self.ratings_per_user < 1.0 {
            return bad("ratings_per_user must be at least 1");
        }
        if !(self.signal >= 0.0 && self.noise >= 0.0 && self.popularity_skew >= 0.0) {
            return bad("signal, noise and popularity_skew must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.late_items) {
            return bad("late_items must be in [0, 1]");
        }
        Ok(())
    }

    pub fn end(&self) -> NaiveDate {
        self.start + chrono::Days::new(self.days as u64 - 1)
    }
}

fn gaussian_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sd: f64) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, sd).expect("finite sd");
    (0..rows)
        .map(|_| (0..cols).map(|_| normal.sample(rng)).collect())
        .collect()
}

/// Generates a log in user order; timestamps within a user are sorted.
pub fn generate(config: &SynthConfig) -> Result<Vec<RatingRecord>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let factor_sd = (config.signal / (config.rank as f64).sqrt()).sqrt();
    let users = gaussian_rows(&mut rng, config.n_users, config.rank, factor_sd);
    let items = gaussian_rows(&mut rng, config.n_items, config.rank, factor_sd);
    let user_bias = Normal::new(0.0, 0.4).expect("finite sd");
    let item_bias = Normal::new(0.0, 0.5).expect("finite sd");
    let item_biases: Vec<f64> = (0..config.n_items).map(|_| item_bias.sample(&mut rng)).collect();
    let days = config.days as i64;
    let release: Vec<i64> = (0..config.n_items)
        .map(|_| {
            if rng.gen_bool(config.late_items) {
                rng.gen_range(0..days)
            } else {
                0
            }
        })
        .collect();
    let popularity = WeightedIndex::new((0..config.n_items).map(|i| ((i + 1) as f64).powf(-config.popularity_skew)))
        .map_err(|e| Error::InvalidArgument(format!("popularity weights: {e}")))?;
    let noise = Normal::new(0.0, config.noise).expect("finite sd");
    let origin = day_start(config.start);
    let max_per_user = (config.n_items / 2).max(1);

    let mut out = Vec::new();
    for (u, pu) in users.iter().enumerate() {
        let bu = user_bias.sample(&mut rng);
        let first = rng.gen_range(-days / 2..days);
        let span = rng.gen_range(days / 8..=days).max(1);
        let (lo, hi) = (first.max(0), (first + span).min(days));
        let draw: f64 = Exp1.sample(&mut rng);
        let count = ((config.ratings_per_user * draw).ceil() as usize).clamp(1, max_per_user);
        let mut seen = HashSet::with_capacity(count);
        let mut rows = Vec::with_capacity(count);
        let mut attempts = 0;
        while rows.len() < count && attempts < 20 * count {
            attempts += 1;
            let i = popularity.sample(&mut rng);
            let from = lo.max(release[i]);
            if from >= hi || !seen.insert(i) {
                continue;
            }
            let day = rng.gen_range(from..hi);
            let second = rng.gen_range(0..86_400);
            let dot: f64 = pu.iter().zip(&items[i]).map(|(a, b)| a * b).sum();
            let raw = 3.6 + bu + item_biases[i] + dot + noise.sample(&mut rng);
            let rating = (raw.round() as f32).clamp(MIN_RATING, MAX_RATING);
            rows.push((origin + day * 86_400 + second, i, rating));
        }
        rows.sort_by_key(|r| r.0);
        out.extend(
            rows.into_iter()
                .map(|(ts, i, rating)| RatingRecord::new(u.to_string(), i.to_string(), rating, ts)),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_range_and_unique() {
        let cfg = SynthConfig {
            n_users: 200,
            n_items: 80,
            seed: 3,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        let lo = day_start(cfg.start);
        let hi = day_start(cfg.end()) + 86_400;
        let mut pairs = HashSet::new();
        for r in &a {
            assert!((MIN_RATING..=MAX_RATING).contains(&r.rating) && r.rating.fract() == 0.0);
            assert!(r.timestamp >= lo && r.timestamp < hi);
            assert!(pairs.insert((r.user.clone(), r.item.clone())));
        }
        let mean = a.len() as f64 / 200.0;
        assert!(mean > 20.0 && mean < 40.0, "{mean}");
    }

    #[test]
    fn popular_items_dominate() {
        let recs = generate(&SynthConfig {
            n_users: 300,
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        let head = recs.iter().filter(|r| r.item.parse::<usize>().unwrap() < 50).count();
        let tail = recs.iter().filter(|r| r.item.parse::<usize>().unwrap() >= 450).count();
        assert!(head > 3 * tail, "{head} vs {tail}");
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(&SynthConfig {
            n_items: 1,
            ..Default::default()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            late_items: 2.0,
            ..Default::default()
        })
        .is_err());
    }
}
