#![no_main]

use libfuzzer_sys::fuzz_target;
use vspline::{parse_track, project, DedupePolicy, ParseOptions};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for dedupe in [DedupePolicy::Reject, DedupePolicy::Merge] {
        let options = ParseOptions { dedupe, ..Default::default() };
        if let Ok(records) = parse_track(text, &options) {
            for w in records.windows(2) {
                assert!(w[0].timestamp < w[1].timestamp);
            }
            let _ = project(&records, None);
        }
    }
});
