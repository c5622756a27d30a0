//! Parser entry points must return errors, never panic, on hostile input.
//! The checked-in fuzz seeds are replayed here so they stay exercised
//! without a nightly toolchain.

use std::path::PathBuf;

use biaffine_core::conllu::{parse_conllu, write_conllu, Annotation};
use biaffine_core::model::{Model, MAGIC};
use biaffine_core::ModelConfig;
use proptest::prelude::*;

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<Vec<u8>> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|entry| std::fs::read(entry.unwrap().path()).unwrap())
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

fn conllu_case(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for annotation in [Annotation::Required, Annotation::Optional] {
        if let Ok(tb) = parse_conllu(text, "input", annotation) {
            let again = parse_conllu(&write_conllu(&tb), "input", annotation).expect("reparse");
            assert_eq!(again.len(), tb.len());
        }
    }
}

fn model_case(data: &[u8]) {
    if let Ok(model) = Model::from_bytes(data) {
        let bytes = model.to_bytes();
        assert_eq!(Model::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }
}

fn config_case(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = ModelConfig::from_text(text, "input") {
        assert_eq!(ModelConfig::from_text(&config.to_text(), "input").unwrap(), config);
    }
}

#[test]
fn conllu_seeds() {
    seeds("conllu_parse").iter().for_each(|s| conllu_case(s));
}

#[test]
fn model_seeds() {
    let all = seeds("model_decode");
    assert!(all.iter().any(|s| Model::from_bytes(s).is_ok()));
    all.iter().for_each(|s| model_case(s));
}

#[test]
fn config_seeds() {
    seeds("config_parse").iter().for_each(|s| config_case(s));
}

#[test]
fn truncated_and_mutated_model_seeds() {
    for seed in seeds("model_decode") {
        for cut in 0..seed.len().min(200) {
            model_case(&seed[..cut]);
        }
        for i in (0..seed.len()).step_by(13) {
            let mut m = seed.clone();
            m[i] = m[i].wrapping_add(0x81);
            model_case(&m);
        }
    }
}

proptest! {
    #[test]
    fn arbitrary_conllu_text(text in "([0-9_.\\-]{0,3}(\t[a-z0-9_]{0,3}){0,10}\r?\n){0,8}") {
        conllu_case(text.as_bytes());
    }

    #[test]
    fn arbitrary_bytes(data in prop::collection::vec(any::<u8>(), 0..256)) {
        conllu_case(&data);
        model_case(&data);
        config_case(&data);
    }

    #[test]
    fn arbitrary_model_bodies(body in prop::collection::vec(any::<u8>(), 0..512)) {
        let mut data = MAGIC.to_vec();
        data.extend_from_slice(&1u32.to_le_bytes());
        data.extend_from_slice(&body);
        model_case(&data);
    }

    #[test]
    fn arbitrary_config_lines(
        lines in prop::collection::vec(("[a-z_]{1,14}", "[ -~]{0,12}"), 0..6)
    ) {
        let text: String = lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        config_case(text.as_bytes());
    }
}

#[test]
fn awkward_config_values() {
    for key in ModelConfig::keys() {
        for value in ["NaN", "inf", "-0", "1e400", "18446744073709551616", "", " 3 ", "true"] {
            config_case(format!("{key} = {value}\n").as_bytes());
        }
    }
}
