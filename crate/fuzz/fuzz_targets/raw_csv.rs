#![no_main]

use fpp_lab::formats;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = formats::parse_raw_csv(text) {
        let again = formats::parse_raw_csv(&formats::write_raw_csv(&table.config_hash, &table.rows)).unwrap();
        assert_eq!(again, table);
    }
});
