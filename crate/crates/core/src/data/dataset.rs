use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use ndarray::Array1;

use super::records::{dedup_latest, RatingRecord};
use crate::error::{Error, Result};
use crate::real::Real;

/// One observed rating of a user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub item: u32,
    pub rating: f32,
    pub timestamp: i64,
}

/// Numeric tokens sort numerically and before non-numeric ones.
fn token_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct TokenIndex {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl TokenIndex {
    fn from_tokens(mut tokens: Vec<String>) -> Self {
        tokens.sort_by(|a, b| token_order(a, b));
        tokens.dedup();
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        TokenIndex { tokens, ids }
    }

    fn get(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }
}

/// Training ratings indexed by contiguous user and item ids.
///
/// Ids follow token order, so the same ratings always produce the same
/// index regardless of line order. Every user has at least one rating.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingDataset {
    users: TokenIndex,
    items: TokenIndex,
    rows: Vec<Vec<Entry>>,
    n_ratings: usize,
}

/// Sparse user vector over all items.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    pub dim: usize,
    /// Strictly ascending.
    pub indices: Vec<u32>,
    pub values: Vec<f32>,
}

impl SparseVector {
    pub fn to_dense<T: Real>(&self) -> Array1<T> {
        let mut v = Array1::zeros(self.dim);
        for (&i, &r) in self.indices.iter().zip(&self.values) {
            v[i as usize] = T::of(r as f64);
        }
        v
    }

    pub fn from_dense<T: Real>(dense: &[T]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(i, v)| (i as u32, v.as_f64() as f32))
            .unzip();
        SparseVector {
            dim: dense.len(),
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

impl RatingDataset {
    /// Indexes every user and item appearing in `records`.
    pub fn from_records(records: &[RatingRecord]) -> Result<Self> {
        let items = TokenIndex::from_tokens(records.iter().map(|r| r.item.clone()).collect());
        Self::build(records, items)
    }

    /// Indexes users against a fixed item vocabulary; ratings of other items are dropped.
    pub fn with_items(records: &[RatingRecord], item_tokens: Vec<String>) -> Result<Self> {
        let ids = item_tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect::<HashMap<_, _>>();
        if ids.len() != item_tokens.len() {
            return Err(Error::InvalidArgument("item vocabulary has duplicate tokens".into()));
        }
        let items = TokenIndex {
            tokens: item_tokens,
            ids,
        };
        let kept: Vec<RatingRecord> = records
            .iter()
            .filter(|r| items.get(&r.item).is_some())
            .cloned()
            .collect();
        Self::build(&kept, items)
    }

    fn build(records: &[RatingRecord], items: TokenIndex) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidArgument("no ratings to index".into()));
        }
        if items.tokens.is_empty() || items.tokens.len() > u32::MAX as usize {
            return Err(Error::InvalidArgument("item vocabulary size out of range".into()));
        }
        let records = dedup_latest(records.to_vec());
        let users = TokenIndex::from_tokens(records.iter().map(|r| r.user.clone()).collect());
        let mut rows: Vec<Vec<Entry>> = vec![Vec::new(); users.tokens.len()];
        for r in &records {
            let u = users.get(&r.user).expect("indexed above");
            let Some(item) = items.get(&r.item) else { continue };
            rows[u as usize].push(Entry {
                item,
                rating: r.rating,
                timestamp: r.timestamp,
            });
        }
        for row in &mut rows {
            row.sort_by_key(|e| e.item);
        }
        let n_ratings = rows.iter().map(Vec::len).sum();
        Ok(RatingDataset {
            users,
            items,
            rows,
            n_ratings,
        })
    }

    pub fn n_users(&self) -> usize {
        self.rows.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.tokens.len()
    }

    pub fn n_ratings(&self) -> usize {
        self.n_ratings
    }

    pub fn user_id(&self, token: &str) -> Option<u32> {
        self.users.get(token)
    }

    pub fn item_id(&self, token: &str) -> Option<u32> {
        self.items.get(token)
    }

    pub fn user_token(&self, user: u32) -> &str {
        &self.users.tokens[user as usize]
    }

    pub fn item_token(&self, item: u32) -> &str {
        &self.items.tokens[item as usize]
    }

    pub fn item_tokens(&self) -> &[String] {
        &self.items.tokens
    }

    /// Ratings of `user`, sorted by item id.
    pub fn user_ratings(&self, user: u32) -> Result<&[Entry]> {
        self.rows
            .get(user as usize)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownUser(user.to_string()))
    }

    pub fn user_vector(&self, user: u32) -> Result<SparseVector> {
        let row = self.user_ratings(user)?;
        Ok(SparseVector {
            dim: self.n_items(),
            indices: row.iter().map(|e| e.item).collect(),
            values: row.iter().map(|e| e.rating).collect(),
        })
    }

    pub fn min_timestamp(&self) -> Option<i64> {
        self.rows.iter().flatten().map(|e| e.timestamp).min()
    }

    pub fn max_timestamp(&self) -> Option<i64> {
        self.rows.iter().flatten().map(|e| e.timestamp).max()
    }

    pub fn to_records(&self) -> Vec<RatingRecord> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(u, row)| {
                row.iter().map(move |e| {
                    RatingRecord::new(
                        self.user_token(u as u32),
                        self.item_token(e.item),
                        e.rating,
                        e.timestamp,
                    )
                })
            })
            .collect()
    }

    /// The training ratings themselves as an evaluation set.
    pub fn as_eval_set(&self) -> EvalSet {
        let ratings = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(u, row)| {
                row.iter().map(move |e| EvalRating {
                    user: u as u32,
                    item: e.item,
                    rating: e.rating,
                    timestamp: e.timestamp,
                })
            })
            .collect();
        EvalSet { ratings }
    }
}

/// A held-out rating in the id space of a training dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRating {
    pub user: u32,
    pub item: u32,
    pub rating: f32,
    pub timestamp: i64,
}

/// Held-out ratings of users and items known to the training set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalSet {
    pub ratings: Vec<EvalRating>,
}

impl EvalSet {
    /// Maps records into `train`'s id space, dropping those whose user or
    /// item does not occur in `train`. Returns the set and the drop count.
    pub fn from_records(train: &RatingDataset, records: &[RatingRecord]) -> (EvalSet, usize) {
        let mut ratings = Vec::with_capacity(records.len());
        for r in records {
            if let (Some(user), Some(item)) = (train.user_id(&r.user), train.item_id(&r.item)) {
                ratings.push(EvalRating {
                    user,
                    item,
                    rating: r.rating,
                    timestamp: r.timestamp,
                });
            }
        }
        let dropped = records.len() - ratings.len();
        (EvalSet { ratings }, dropped)
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.by_user().len()
    }

    /// `user -> [(item, rating)]` in ascending user order.
    pub fn by_user(&self) -> BTreeMap<u32, Vec<(u32, f32)>> {
        let mut map: BTreeMap<u32, Vec<(u32, f32)>> = BTreeMap::new();
        for r in &self.ratings {
            map.entry(r.user).or_default().push((r.item, r.rating));
        }
        map
    }

    pub fn to_records(&self, train: &RatingDataset) -> Vec<RatingRecord> {
        self.ratings
            .iter()
            .map(|r| {
                RatingRecord::new(
                    train.user_token(r.user),
                    train.item_token(r.item),
                    r.rating,
                    r.timestamp,
                )
            })
            .collect()
    }
}
