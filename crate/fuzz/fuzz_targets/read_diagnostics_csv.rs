#![no_main]

use chemovir::monitors::{read_diagnostics_csv, write_diagnostics_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_diagnostics_csv(data) {
        let mut out = Vec::new();
        write_diagnostics_csv(&records, &mut out).expect("records serialize");
        let _ = read_diagnostics_csv(out.as_slice());
    }
});
