#![no_main]

use fpp_lab::harness;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = harness::parse_config(text) {
        // validation must reject or accept, never panic
        if let Ok(v) = harness::validate(&cfg, None) {
            assert_eq!(v.config_hash, harness::config_hash(&v.config));
        }
    }
});
