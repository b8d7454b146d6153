#![no_main]

use bladetrap::geometry::{read_soup, write_soup};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mesh) = read_soup(text) {
        let back = read_soup(&write_soup(&mesh)).expect("rewritten soup parses");
        assert_eq!(back.content_hash(), mesh.content_hash());
    }
});
