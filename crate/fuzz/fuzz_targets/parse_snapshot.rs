#![no_main]

use chemovir::snapshot::{parse_snapshot, write_snapshot};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok((grid, state)) = parse_snapshot(text) {
        let written = write_snapshot(&grid, &state).expect("parsed state matches its grid");
        let (grid2, state2) = parse_snapshot(&written).expect("written snapshot reparses");
        assert_eq!(grid2, grid);
        assert_eq!(state2, state);
    }
});
