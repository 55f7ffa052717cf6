#![no_main]

use chemovir::sweep::SweepResult;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(result) = SweepResult::read_csv(data) {
        let mut out = Vec::new();
        result.write_csv(&mut out).expect("rows serialize");
    }
});
