#![no_main]

use biaffine_core::ModelConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = ModelConfig::from_text(text, "fuzz") {
        let again = ModelConfig::from_text(&config.to_text(), "fuzz").expect("reparse");
        assert_eq!(again, config);
    }
});
