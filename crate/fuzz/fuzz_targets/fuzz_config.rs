//! Run configs are user input; parsing and validation must never panic.
#![no_main]
use libfuzzer_sys::fuzz_target;
use sparkspread_core::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = RunConfig::from_json(text) {
        // Whatever validated must survive a round trip.
        let again = RunConfig::from_json(&config.to_json()).expect("re-parse of serialized config");
        assert_eq!(again, config);
    }
});
