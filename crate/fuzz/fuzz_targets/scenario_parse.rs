#![no_main]

use bladetrap::scenario::parse_scenario;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = parse_scenario(text) {
        let _ = s.validate();
        let _ = s.describe();
    }
});
