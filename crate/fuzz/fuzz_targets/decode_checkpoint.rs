#![no_main]

use deeprec::checkpoint::{decode_checkpoint, decode_header, encode_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = decode_header(data);
    if let Ok(rec) = decode_checkpoint::<f32>(data) {
        let bytes = encode_checkpoint(&rec).expect("decoded record re-encodes");
        assert_eq!(decode_checkpoint::<f32>(&bytes).unwrap(), rec);
    }
    let _ = decode_checkpoint::<f64>(data);
});
