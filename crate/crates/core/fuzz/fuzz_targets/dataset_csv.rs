#![no_main]
use bdaepi::Dataset;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(ds) = Dataset::parse_csv(text, 1000) {
        let again = Dataset::parse_csv(&ds.to_csv(), 1000).expect("written dataset must parse");
        assert_eq!(again, ds);
    }
});
