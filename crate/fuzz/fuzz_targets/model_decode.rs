#![no_main]

use biaffine_core::model::Model;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = Model::from_bytes(data) {
        let bytes = model.to_bytes();
        let again = Model::from_bytes(&bytes).expect("re-decode");
        assert_eq!(again.to_bytes(), bytes);
    }
});
