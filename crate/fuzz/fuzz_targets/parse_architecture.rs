#![no_main]

use deeprec::{parse_architecture, Activation};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = parse_architecture(text) {
        let canonical = spec.to_string();
        let again = parse_architecture(&canonical).expect("canonical form parses");
        assert_eq!(again, spec);
        let _ = spec.parameter_count(17);
    }
    if let Ok(act) = text.parse::<Activation>() {
        assert_eq!(act.to_string().parse::<Activation>().ok(), Some(act));
    }
});
