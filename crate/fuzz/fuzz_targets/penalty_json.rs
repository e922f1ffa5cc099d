#![no_main]

use libfuzzer_sys::fuzz_target;
use vspline::PenaltySpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = PenaltySpec::from_json(text) {
        assert!(spec.validate().is_ok());
        assert!(spec.parameters().iter().all(|p| p.is_finite() && *p > 0.0));
    }
});
