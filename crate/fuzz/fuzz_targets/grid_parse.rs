#![no_main]

use bladetrap::potential::{parse_grid, write_grid};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(grid) = parse_grid(text) {
        // anything accepted must survive a write/read cycle unchanged
        let out = write_grid(&grid);
        let back = parse_grid(&out).expect("rewritten grid parses");
        assert_eq!(write_grid(&back), out);
    }
});
