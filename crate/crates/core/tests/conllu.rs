use std::path::PathBuf;

use biaffine_core::conllu::{
    parse_conllu, read_conllu, read_conllu_with, subsample, write_conllu, write_conllu_file,
    Annotation, Sentence, Vocab,
};
use biaffine_core::Error;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn multiword_ranges_and_empty_nodes_are_skipped() {
    let tb = read_conllu(fixture("multiword.conllu")).unwrap();
    assert_eq!(tb.len(), 2);
    assert_eq!(tb[0].tokens, ["vamos", "nos", "a", "el", "mar"]);
    assert_eq!(tb[0].heads, [0, 1, 5, 5, 1]);
    assert_eq!(tb[0].deprels, ["root", "obj", "case", "det", "obl"]);
    assert_eq!(tb[1].tokens, ["She", "left", "."]);
    assert_eq!(tb[1].upos, ["PRON", "VERB", "PUNCT"]);
}

#[test]
fn write_then_read_round_trips() {
    for name in ["synthetic50.conllu", "multiword.conllu", "relations37.conllu"] {
        let tb = read_conllu(fixture(name)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.conllu");
        write_conllu_file(&path, &tb).unwrap();
        assert_eq!(read_conllu(&path).unwrap(), tb, "{name}");
        assert_eq!(write_conllu(&parse_conllu(&write_conllu(&tb), "mem", Annotation::Required).unwrap()), write_conllu(&tb));
    }
}

#[test]
fn every_relation_gets_a_label_id() {
    let tb = read_conllu(fixture("relations37.conllu")).unwrap();
    let vocab = Vocab::build(&tb, 1);
    assert_eq!(vocab.num_labels(), 37);
    for s in &tb {
        for l in &s.deprels {
            let id = vocab.label_id(l).unwrap();
            assert_eq!(vocab.label(id), Some(l.as_str()));
        }
    }
}

#[test]
fn fixture_treebanks_have_the_expected_sizes() {
    assert_eq!(read_conllu(fixture("synthetic50.conllu")).unwrap().len(), 50);
    assert_eq!(read_conllu(fixture("synthetic_dev.conllu")).unwrap().len(), 20);
}

#[test]
fn subsampling_keeps_the_requested_share_in_order() {
    let one = read_conllu(fixture("synthetic50.conllu")).unwrap();
    let tb: Vec<Sentence> = one.iter().chain(one.iter()).cloned().collect();
    assert_eq!(tb.len(), 100);
    let half = subsample(&tb, 0.5, 3).unwrap();
    assert_eq!(half.len(), 50);
    assert_eq!(half, subsample(&tb, 0.5, 3).unwrap());
    assert_eq!(subsample(&tb, 0.1, 3).unwrap().len(), 10);
    assert_eq!(subsample(&tb, 1.0, 3).unwrap(), tb);
    assert!(matches!(subsample(&tb, 0.0, 3), Err(Error::Config(_))));
    assert!(matches!(subsample(&tb, 1.5, 3), Err(Error::Config(_))));
}

#[test]
fn syntax_errors_name_the_line() {
    let text = "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n2\tb\t_\tX\t_\t_\tzero\tdep\t_\t_\n";
    match parse_conllu(text, "broken.conllu", Annotation::Required) {
        Err(e @ Error::Syntax { .. }) => {
            let msg = e.to_string();
            assert!(msg.contains("broken.conllu") && msg.contains('2'), "{msg}");
        }
        other => panic!("expected a syntax error, got {other:?}"),
    }
    assert!(parse_conllu("1\ta\tb\n", "short", Annotation::Required).is_err());
    assert!(parse_conllu("2\ta\t_\tX\t_\t_\t0\troot\t_\t_\n", "seq", Annotation::Required).is_err());
    assert!(parse_conllu("1\ta\t_\tX\t_\t_\t5\troot\t_\t_\n", "range", Annotation::Required).is_err());
}

#[test]
fn unannotated_input_reads_with_optional_heads() {
    let text = "1\ta\t_\tX\t_\t_\t_\t_\t_\t_\n2\tb\t_\tX\t_\t_\t_\t_\t_\t_\n\n";
    assert!(parse_conllu(text, "raw", Annotation::Required).is_err());
    let tb = parse_conllu(text, "raw", Annotation::Optional).unwrap();
    assert_eq!(tb[0].tokens, ["a", "b"]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("raw.conllu");
    std::fs::write(&path, text).unwrap();
    assert_eq!(read_conllu_with(&path, Annotation::Optional).unwrap(), tb);
}

#[test]
fn missing_files_are_io_errors() {
    assert!(matches!(read_conllu("/nonexistent/file.conllu"), Err(Error::Io { .. })));
}
