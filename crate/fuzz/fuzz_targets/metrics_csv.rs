#![no_main]

use deeprec::train::parse_metrics_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_metrics_csv(text) {
        for r in rows {
            let _ = r.to_csv_row();
        }
    }
});
