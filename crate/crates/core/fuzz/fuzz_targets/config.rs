#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(file) = osmosis::config::parse_config_file(text) {
            let _ = file.resolve(&osmosis::config::Overrides::default());
        }
    }
});
