#![no_main]

use libfuzzer_sys::fuzz_target;
use vspline::io::parse_observations;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(parsed) = parse_observations(text) {
        assert!(parsed.obs.len() >= 2);
        if let Some(boom) = &parsed.boom {
            assert_eq!(boom.len(), parsed.obs.len() - 1);
        }
    }
});
