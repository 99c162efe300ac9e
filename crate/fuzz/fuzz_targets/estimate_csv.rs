#![no_main]

use libfuzzer_sys::fuzz_target;
use telegraph_core::moments::MomentEstimate;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = MomentEstimate::read_csv(text);
});
