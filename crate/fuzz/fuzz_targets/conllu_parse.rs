#![no_main]

use biaffine_core::conllu::{parse_conllu, write_conllu, Annotation};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for annotation in [Annotation::Required, Annotation::Optional] {
        if let Ok(tb) = parse_conllu(text, "fuzz", annotation) {
            let again = parse_conllu(&write_conllu(&tb), "fuzz", annotation).expect("reparse");
            assert_eq!(again.len(), tb.len());
        }
    }
});
