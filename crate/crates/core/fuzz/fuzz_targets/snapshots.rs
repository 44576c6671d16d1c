#![no_main]
use bdaepi::io::{parse_snapshots, snapshots_text};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(snaps) = parse_snapshots(text) else {
        return;
    };
    assert_eq!(parse_snapshots(&snapshots_text(&snaps)).expect("round trip"), snaps);
    for (_, h) in &snaps {
        let (a, b) = h.window();
        let _ = h.counts_at_sorted(&[a, 0.5 * (a + b), b]);
        let _ = h.count_path();
    }
});
