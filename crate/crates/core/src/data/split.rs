//! Time-based train / test / validation split.
//!
//! Training ratings come from one date window, evaluation ratings from a
//! later one. Each evaluation-window rating goes to validation with
//! probability `valid_fraction` (to test otherwise), then ratings whose user
//! or item never occurs in training are discarded from both subsets.
//! Window bounds are whole days (UTC), inclusive at both ends; a day covered
//! by both windows belongs to training.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{EvalSet, RatingDataset};
use super::records::RatingRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Open-ended when `None`.
    pub train_start: Option<NaiveDate>,
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    /// Open-ended when `None`.
    pub test_end: Option<NaiveDate>,
    pub valid_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_end: NaiveDate, test_start: NaiveDate, seed: u64) -> Self {
        SplitSpec {
            train_start: None,
            train_end,
            test_start,
            test_end: None,
            valid_fraction: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_end > self.test_start {
            return Err(Error::Split(format!(
                "training window ends {} after the testing window starts {}",
                self.train_end, self.test_start
            )));
        }
        if let Some(start) = self.train_start {
            if start > self.train_end {
                return Err(Error::Split(format!(
                    "empty training window {start}..{}",
                    self.train_end
                )));
            }
        }
        if let Some(end) = self.test_end {
            if self.test_start > end {
                return Err(Error::Split(format!("empty testing window {}..{end}", self.test_start)));
            }
        }
        if !(self.valid_fraction > 0.0 && self.valid_fraction < 1.0) {
            return Err(Error::Split(format!(
                "validation fraction {} outside (0, 1)",
                self.valid_fraction
            )));
        }
        Ok(())
    }

    pub fn in_train(&self, day: NaiveDate) -> bool {
        self.train_start.is_none_or(|s| day >= s) && day <= self.train_end
    }

    pub fn in_test(&self, day: NaiveDate) -> bool {
        day >= self.test_start && self.test_end.is_none_or(|e| day <= e)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetCounts {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
}

/// Reproducibility record written next to the split files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub spec: SplitSpec,
    pub input_ratings: usize,
    /// Ratings outside both windows.
    pub outside_windows: usize,
    /// Testing-window ratings dropped for an unseen user or item.
    pub cold_dropped: usize,
    pub train: SubsetCounts,
    pub test: SubsetCounts,
    pub validation: SubsetCounts,
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: RatingDataset,
    pub test: EvalSet,
    pub validation: EvalSet,
    pub manifest: SplitManifest,
}

fn eval_counts(set: &EvalSet) -> SubsetCounts {
    let mut items: Vec<u32> = set.ratings.iter().map(|r| r.item).collect();
    items.sort_unstable();
    items.dedup();
    SubsetCounts {
        users: set.n_users(),
        items: items.len(),
        ratings: set.len(),
    }
}

/// Splits `records` by time. Deterministic for a fixed `spec.seed`.
pub fn time_split(records: &[RatingRecord], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train_records = Vec::new();
    let mut test_records = Vec::new();
    let mut valid_records = Vec::new();
    let mut outside = 0;
    for r in records {
        let day = r.date();
        if spec.in_train(day) {
            train_records.push(r.clone());
        } else if spec.in_test(day) {
            if rng.gen_bool(spec.valid_fraction) {
                valid_records.push(r.clone());
            } else {
                test_records.push(r.clone());
            }
        } else {
            outside += 1;
        }
    }
    if train_records.is_empty() {
        return Err(Error::Split("no ratings fall in the training window".into()));
    }
    let train = RatingDataset::from_records(&train_records)?;
    let (test, dropped_test) = EvalSet::from_records(&train, &test_records);
    let (validation, dropped_valid) = EvalSet::from_records(&train, &valid_records);
    let manifest = SplitManifest {
        spec: spec.clone(),
        input_ratings: records.len(),
        outside_windows: outside,
        cold_dropped: dropped_test + dropped_valid,
        train: SubsetCounts {
            users: train.n_users(),
            items: train.n_items(),
            ratings: train.n_ratings(),
        },
        test: eval_counts(&test),
        validation: eval_counts(&validation),
    };
    Ok(Split {
        train,
        test,
        validation,
        manifest,
    })
}
