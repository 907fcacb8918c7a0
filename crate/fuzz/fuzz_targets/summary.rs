#![no_main]

use fpp_lab::formats;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = formats::parse_summary(text) {
        assert_eq!(formats::parse_summary(&formats::to_json(&s)).unwrap(), s);
    }
});
