#![no_main]

use bladetrap::bem::container::decode;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(raw) = decode(data) {
        assert_eq!(raw.charges.len(), raw.electrodes.len());
    }
});
