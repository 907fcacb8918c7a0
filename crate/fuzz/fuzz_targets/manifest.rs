#![no_main]

use fpp_lab::formats;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = formats::parse_manifest(text) {
        let _ = m.count(formats::UnitStatus::Pending);
        assert_eq!(formats::parse_manifest(&formats::to_json(&m)).unwrap(), m);
    }
});
