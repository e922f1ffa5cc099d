#![no_main]

use libfuzzer_sys::fuzz_target;
use vspline::io::{spline_from_json, spline_to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spline) = spline_from_json(text) {
        let again = spline_from_json(&spline_to_json(&spline)).expect("written splines parse");
        assert_eq!(again, spline);
        let t = spline.grid().start();
        let _ = spline.eval(t, 2);
    }
});
