//! Writes the synthetic treebanks under `tests/fixtures/`.
//!
//! `cargo run -p biaffine-core --example make_fixture -- <out-dir>`

use std::path::PathBuf;

use biaffine_core::conllu::{write_conllu_file, Sentence};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// (POS, head offset into the template or 0 for root, label)
type Template = &'static [(&'static str, usize, &'static str)];

const TEMPLATES: [Template; 6] = [
    &[("DET", 2, "det"), ("NOUN", 3, "nsubj"), ("VERB", 0, "root"), ("PUNCT", 3, "punct")],
    &[
        ("DET", 3, "det"),
        ("ADJ", 3, "amod"),
        ("NOUN", 4, "nsubj"),
        ("VERB", 0, "root"),
        ("DET", 6, "det"),
        ("NOUN", 4, "obj"),
        ("PUNCT", 4, "punct"),
    ],
    &[("PRON", 2, "nsubj"), ("VERB", 0, "root"), ("ADV", 2, "advmod"), ("PUNCT", 2, "punct")],
    &[
        ("NOUN", 2, "nsubj"),
        ("VERB", 0, "root"),
        ("ADP", 5, "case"),
        ("DET", 5, "det"),
        ("NOUN", 2, "obl"),
        ("PUNCT", 2, "punct"),
    ],
    &[
        ("PRON", 3, "nsubj"),
        ("AUX", 3, "aux"),
        ("VERB", 0, "root"),
        ("NOUN", 3, "obj"),
        ("CCONJ", 6, "cc"),
        ("NOUN", 4, "conj"),
        ("PUNCT", 3, "punct"),
    ],
    &[
        ("DET", 2, "det"),
        ("NOUN", 4, "nsubj"),
        ("ADV", 4, "advmod"),
        ("VERB", 0, "root"),
        ("PRON", 4, "obj"),
        ("PUNCT", 4, "punct"),
    ],
];

fn lexicon(pos: &str) -> &'static [&'static str] {
    match pos {
        "DET" => &["the", "a", "this", "every"],
        "NOUN" => &["dog", "cat", "river", "teacher", "garden", "letter", "city", "song"],
        "VERB" => &["sees", "likes", "runs", "writes", "finds", "sings"],
        "ADJ" => &["small", "old", "green", "quiet"],
        "PRON" => &["she", "they", "it", "we"],
        "ADV" => &["quickly", "often", "here"],
        "ADP" => &["in", "near", "under"],
        "AUX" => &["will", "can"],
        "CCONJ" => &["and", "or"],
        "PUNCT" => &["."],
        other => panic!("no words for {other}"),
    }
}

fn synthetic(count: usize, seed: u64) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let template = TEMPLATES[rng.random_range(0..TEMPLATES.len())];
            let mut s = Sentence::default();
            for &(pos, head, label) in template {
                s.tokens.push(lexicon(pos).choose(&mut rng).unwrap().to_string());
                s.upos.push(pos.to_string());
                s.heads.push(head);
                s.deprels.push(label.to_string());
            }
            s
        })
        .collect()
}

const RELATIONS: [&str; 37] = [
    "acl", "advcl", "advmod", "amod", "appos", "aux", "case", "cc", "ccomp", "clf", "compound",
    "conj", "cop", "csubj", "dep", "det", "discourse", "dislocated", "expl", "fixed", "flat",
    "goeswith", "iobj", "list", "mark", "nmod", "nsubj", "nummod", "obj", "obl", "orphan",
    "parataxis", "punct", "reparandum", "root", "vocative", "xcomp",
];

/// One two-token sentence per non-root relation.
fn all_relations() -> Vec<Sentence> {
    RELATIONS
        .iter()
        .filter(|&&r| r != "root")
        .enumerate()
        .map(|(i, rel)| Sentence {
            tokens: vec![format!("w{i}"), "head".to_string()],
            upos: vec!["X".to_string(), "VERB".to_string()],
            heads: vec![2, 0],
            deprels: vec![rel.to_string(), "root".to_string()],
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures"));
    std::fs::create_dir_all(&dir)?;
    write_conllu_file(dir.join("synthetic50.conllu"), &synthetic(50, 50))?;
    write_conllu_file(dir.join("synthetic_dev.conllu"), &synthetic(20, 51))?;
    write_conllu_file(dir.join("relations37.conllu"), &all_relations())?;
    println!("wrote fixtures to {}", dir.display());
    Ok(())
}
