#![no_main]

use blowup_core::io::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_text(text) {
        // The canonical form must parse back to the same config.
        let again = RunConfig::from_text(&cfg.to_text()).expect("canonical text parses");
        assert_eq!(again.to_text(), cfg.to_text());
    }
    let mut cfg = RunConfig::default();
    let overrides: Vec<&str> = text.lines().collect();
    let _ = cfg.apply_overrides(&overrides);
});
