#![no_main]

use chemovir::sweep::Preset;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(preset) = text.parse::<Preset>() {
        assert_eq!(preset.to_string().parse::<Preset>().ok(), Some(preset));
    }
});
