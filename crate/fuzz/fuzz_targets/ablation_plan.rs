#![no_main]

use deeprec::experiments::AblationPlan;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(plan) = AblationPlan::from_json(text) {
        for job in plan.jobs() {
            assert!(!job.cli_args().is_empty());
        }
    }
});
