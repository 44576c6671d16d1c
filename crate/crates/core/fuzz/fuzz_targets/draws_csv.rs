#![no_main]
use bdaepi::io::parse_draws_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_draws_csv(text);
    }
});
