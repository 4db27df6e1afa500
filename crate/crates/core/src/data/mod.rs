//! Rating logs: parsing, indexing, time-based splitting and mini-batching.

mod batches;
mod dataset;
mod records;
mod split;

pub use batches::{batch_iterator, densify, BatchIter};
pub use dataset::{Entry, EvalRating, EvalSet, RatingDataset, SparseVector};
pub use records::{
    day_of, day_start, dedup_latest, parse_ratings, parse_ratings_str, parse_timestamp, read_ratings_file,
    write_ratings, Delimiter, RatingRecord, MAX_RATING, MIN_RATING,
};
pub use split::{time_split, Split, SplitManifest, SplitSpec, SubsetCounts};
