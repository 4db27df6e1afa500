#![no_main]

use deeprec::data::{parse_ratings, Delimiter};
use deeprec::RatingDataset;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    for delim in [Delimiter::Csv, Delimiter::Tsv] {
        if let Ok(records) = parse_ratings(data, delim) {
            if let Ok(ds) = RatingDataset::from_records(&records) {
                assert!(ds.n_ratings() <= records.len());
            }
        }
    }
});
