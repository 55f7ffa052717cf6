#![no_main]

use chemovir::config::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = parse_config(text) {
        let again = parse_config(&config.to_config_string()).expect("serialized config reparses");
        assert_eq!(again, config);
    }
});
