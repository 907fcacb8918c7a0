#![no_main]

use fpp_lab::formats;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(d) = formats::parse_geodesic_dump(text) {
        assert!(d.path.windows(2).all(|s| s[0].l1_distance(s[1]) == 1));
        let again = formats::parse_geodesic_dump(&formats::write_geodesic_dump(&d.config_hash, &d.path)).unwrap();
        assert_eq!(again, d);
    }
});
