//! CoNLL-U treebanks: reading, writing, vocabularies and subsampling.
//!
//! Only the syntactic-word lines are kept. Multiword-token ranges (`1-2`)
//! and empty nodes (`1.1`) are skipped, as are comment lines. Of the ten
//! columns, FORM, UPOS, HEAD and DEPREL are used.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub upos: Vec<String>,
    /// Gold heads, 1-based; 0 is the artificial root.
    pub heads: Vec<usize>,
    pub deprels: Vec<String>,
}

pub type Treebank = Vec<Sentence>;

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Whether HEAD/DEPREL must be present.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Annotation {
    /// Every HEAD must be an integer and the heads must form a tree.
    Required,
    /// `_` is accepted for HEAD (read as 0) and no tree check is made; used
    /// for text that is about to be parsed.
    Optional,
}

/// `true` if following heads from every token reaches the root without
/// revisiting a token.
pub fn heads_form_tree(heads: &[usize]) -> bool {
    let n = heads.len();
    if heads.iter().any(|&h| h > n) {
        return false;
    }
    // 0 = unvisited, 1 = on current path, 2 = known to reach root
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    for start in 1..=n {
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = heads[v - 1];
        }
        if state[v] == 1 {
            return false;
        }
        for p in path {
            state[p] = 2;
        }
    }
    true
}

#[derive(Default)]
struct Block {
    tokens: Vec<String>,
    upos: Vec<String>,
    heads: Vec<usize>,
    deprels: Vec<String>,
    head_lines: Vec<usize>,
    first_line: usize,
}

pub fn read_conllu(path: impl AsRef<Path>) -> Result<Treebank> {
    read_conllu_with(path, Annotation::Required)
}

pub fn read_conllu_with(path: impl AsRef<Path>, annotation: Annotation) -> Result<Treebank> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conllu(&text, &path.display().to_string(), annotation)
}

/// Parses CoNLL-U text. `source_name` is used in error messages.
pub fn parse_conllu(text: &str, source_name: &str, annotation: Annotation) -> Result<Treebank> {
    let syntax = |line: usize, message: String| Error::Syntax {
        source_name: source_name.to_string(),
        line,
        message,
    };

    let mut treebank = Vec::new();
    let mut block = Block::default();

    let finish = |block: &mut Block, treebank: &mut Treebank| -> Result<()> {
        let b = std::mem::take(block);
        if b.tokens.is_empty() {
            return Ok(());
        }
        let n = b.tokens.len();
        if let Some(i) = b.heads.iter().position(|&h| h > n) {
            return Err(syntax(
                b.head_lines[i],
                format!("HEAD {} exceeds sentence length {n}", b.heads[i]),
            ));
        }
        if annotation == Annotation::Required && !heads_form_tree(&b.heads) {
            log::warn!(
                "{source_name}:{}: gold heads contain a cycle; sentence dropped",
                b.first_line
            );
            return Ok(());
        }
        treebank.push(Sentence {
            tokens: b.tokens,
            upos: b.upos,
            heads: b.heads,
            deprels: b.deprels,
        });
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            finish(&mut block, &mut treebank)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(syntax(
                lineno,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            let well_formed = id
                .split(['-', '.'])
                .all(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()));
            if !well_formed {
                return Err(syntax(lineno, format!("malformed token id `{id}`")));
            }
            continue;
        }
        let id: usize = id
            .parse()
            .map_err(|_| syntax(lineno, format!("malformed token id `{id}`")))?;
        if id != block.tokens.len() + 1 {
            return Err(syntax(
                lineno,
                format!("token id {id} out of sequence (expected {})", block.tokens.len() + 1),
            ));
        }
        let head = match (cols[6], annotation) {
            ("_", Annotation::Optional) => 0,
            (h, _) => h
                .parse::<usize>()
                .map_err(|_| syntax(lineno, format!("HEAD `{h}` is not a non-negative integer")))?,
        };
        if block.tokens.is_empty() {
            block.first_line = lineno;
        }
        block.tokens.push(cols[1].to_string());
        block.upos.push(cols[3].to_string());
        block.heads.push(head);
        block.deprels.push(cols[7].to_string());
        block.head_lines.push(lineno);
    }
    finish(&mut block, &mut treebank)?;
    Ok(treebank)
}

/// Serializes sentences with ID, FORM, UPOS, HEAD and DEPREL filled in and
/// `_` in the remaining columns. Each sentence ends with a blank line.
pub fn write_conllu(treebank: &[Sentence]) -> String {
    let mut out = String::new();
    for s in treebank {
        for i in 0..s.len() {
            let _ = writeln!(
                out,
                "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_",
                i + 1,
                s.tokens[i],
                s.upos[i],
                s.heads[i],
                s.deprels[i]
            );
        }
        out.push('\n');
    }
    out
}

pub fn write_conllu_file(path: impl AsRef<Path>, treebank: &[Sentence]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_conllu(treebank)).map_err(|e| Error::io(path, e))
}

/// Keeps `ceil(fraction * N)` sentences chosen pseudo-randomly from `seed`,
/// in their original order.
pub fn subsample(treebank: &[Sentence], fraction: f64, seed: u64) -> Result<Treebank> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "subsample fraction must be in (0, 1], got {fraction}"
        )));
    }
    let n = treebank.len();
    // The epsilon keeps products such as 0.7 * 10 from rounding up.
    let keep = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let keep = keep.min(n);
    if keep == n {
        return Ok(treebank.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, n, keep).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| treebank[i].clone()).collect())
}

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const ROOT: usize = 2;
const RESERVED: [&str; 3] = ["<pad>", "<unk>", "<root>"];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Index {
    items: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Index {
    fn from_items(items: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if ids.insert(item.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary entry `{item}`")));
            }
        }
        Ok(Index { items, ids })
    }

    fn with_reserved() -> Self {
        Index::from_items(RESERVED.iter().map(|s| s.to_string()).collect())
            .expect("reserved entries are distinct")
    }

    fn push(&mut self, item: &str) {
        if !self.ids.contains_key(item) {
            self.ids.insert(item.to_string(), self.items.len());
            self.items.push(item.to_string());
        }
    }
}

/// Word, POS and label inventories. Word and POS ids 0, 1, 2 are PAD, UNK
/// and ROOT; labels have no reserved entries, so `num_labels()` is `L`.
/// A `Vocab` never changes after construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    words: Index,
    pos: Index,
    labels: Index,
}

impl Vocab {
    /// Words seen fewer than `min_count` times map to UNK; every POS tag
    /// and label is kept. Ids follow first occurrence.
    pub fn build(treebank: &[Sentence], min_count: usize) -> Vocab {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for s in treebank {
            for w in &s.tokens {
                *counts.entry(w.as_str()).or_default() += 1;
            }
        }
        let mut words = Index::with_reserved();
        let mut pos = Index::with_reserved();
        let mut labels = Index::default();
        for s in treebank {
            for w in &s.tokens {
                if counts[w.as_str()] >= min_count {
                    words.push(w);
                }
            }
            for p in &s.upos {
                pos.push(p);
            }
            for l in &s.deprels {
                labels.push(l);
            }
        }
        Vocab { words, pos, labels }
    }

    /// Rebuilds a vocabulary from id-ordered lists (reserved entries included).
    pub fn from_lists(words: Vec<String>, pos: Vec<String>, labels: Vec<String>) -> Result<Vocab> {
        for (kind, list) in [("word", &words), ("pos", &pos)] {
            if list.len() < RESERVED.len() || list[..RESERVED.len()] != RESERVED {
                return Err(Error::Data(format!("{kind} vocabulary lacks the reserved entries")));
            }
        }
        Ok(Vocab {
            words: Index::from_items(words)?,
            pos: Index::from_items(pos)?,
            labels: Index::from_items(labels)?,
        })
    }

    pub fn word_id(&self, word: &str) -> usize {
        self.words.ids.get(word).copied().unwrap_or(UNK)
    }

    pub fn pos_id(&self, tag: &str) -> usize {
        self.pos.ids.get(tag).copied().unwrap_or(UNK)
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.labels.ids.get(label).copied()
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.labels.items.get(id).map(String::as_str)
    }

    pub fn num_words(&self) -> usize {
        self.words.items.len()
    }

    pub fn num_pos(&self) -> usize {
        self.pos.items.len()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.items.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words.items
    }

    pub fn pos_tags(&self) -> &[String] {
        &self.pos.items
    }

    pub fn labels(&self) -> &[String] {
        &self.labels.items
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_TOKENS: &str = "# text = Dogs bark\n\
        1\tDogs\tdog\tNOUN\tNNS\t_\t2\tnsubj\t_\t_\n\
        2\tbark\tbark\tVERB\tVBP\t_\t0\troot\t_\t_\n\n";

    #[test]
    fn reads_a_two_token_sentence() {
        let tb = parse_conllu(TWO_TOKENS, "mem", Annotation::Required).unwrap();
        assert_eq!(tb.len(), 1);
        assert_eq!(tb[0].tokens, vec!["Dogs", "bark"]);
        assert_eq!(tb[0].upos, vec!["NOUN", "VERB"]);
        assert_eq!(tb[0].heads, vec![2, 0]);
        assert_eq!(tb[0].deprels, vec!["nsubj", "root"]);
    }

    #[test]
    fn comments_only_gives_empty_treebank() {
        let tb = parse_conllu("# one\n# two\n\n# three\n", "mem", Annotation::Required).unwrap();
        assert!(tb.is_empty());
    }

    #[test]
    fn range_and_empty_node_lines_are_skipped() {
        let text = "1-2\tvámonos\t_\t_\t_\t_\t_\t_\t_\t_\n\
            1\tvamos\tir\tVERB\t_\t_\t0\troot\t_\t_\n\
            2\tnos\tnosotros\tPRON\t_\t_\t1\tobj\t_\t_\n\
            2.1\tdeleted\t_\tX\t_\t_\t_\t_\t1:dep\t_\n\
            3\ta\ta\tADP\t_\t_\t4\tcase\t_\t_\n\
            4\tla\tel\tDET\t_\t_\t1\tobl\t_\t_\n";
        let tb = parse_conllu(text, "mem", Annotation::Required).unwrap();
        assert_eq!(tb.len(), 1);
        assert_eq!(tb[0].tokens, vec!["vamos", "nos", "a", "la"]);
        assert_eq!(tb[0].heads, vec![0, 1, 4, 1]);
    }

    #[test]
    fn malformed_line_reports_location() {
        let text = "1\tDogs\tdog\tNOUN\n";
        match parse_conllu(text, "bad.conllu", Annotation::Required) {
            Err(Error::Syntax { source_name, line, .. }) => {
                assert_eq!(source_name, "bad.conllu");
                assert_eq!(line, 1);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
        let err = parse_conllu(TWO_TOKENS, "x", Annotation::Required).map(|_| ());
        assert!(err.is_ok());
        let text = TWO_TOKENS.replace("\t2\tnsubj", "\tX\tnsubj");
        let err = parse_conllu(&text, "x.conllu", Annotation::Required).unwrap_err();
        assert!(err.to_string().starts_with("x.conllu:2:"), "{err}");
    }

    #[test]
    fn cyclic_sentence_is_dropped() {
        let text = "1\ta\t_\tX\t_\t_\t2\tdep\t_\t_\n\
            2\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n\n"
            .to_string()
            + TWO_TOKENS;
        let tb = parse_conllu(&text, "mem", Annotation::Required).unwrap();
        assert_eq!(tb.len(), 1);
        assert_eq!(tb[0].tokens, vec!["Dogs", "bark"]);
    }

    #[test]
    fn optional_annotation_accepts_underscore_heads() {
        let text = "1\tDogs\t_\tNOUN\t_\t_\t_\t_\t_\t_\n";
        assert!(parse_conllu(text, "mem", Annotation::Required).is_err());
        let tb = parse_conllu(text, "mem", Annotation::Optional).unwrap();
        assert_eq!(tb[0].heads, vec![0]);
    }

    #[test]
    fn write_then_read_round_trips() {
        let tb = parse_conllu(TWO_TOKENS, "mem", Annotation::Required).unwrap();
        let text = write_conllu(&tb);
        assert_eq!(
            text,
            "1\tDogs\t_\tNOUN\t_\t_\t2\tnsubj\t_\t_\n2\tbark\t_\tVERB\t_\t_\t0\troot\t_\t_\n\n"
        );
        assert_eq!(parse_conllu(&text, "mem", Annotation::Required).unwrap(), tb);
    }

    #[test]
    fn tree_check() {
        assert!(heads_form_tree(&[2, 0]));
        assert!(heads_form_tree(&[0, 0]));
        assert!(!heads_form_tree(&[1]));
        assert!(!heads_form_tree(&[2, 1]));
        assert!(!heads_form_tree(&[3, 0]));
        assert!(heads_form_tree(&[]));
    }

    fn sentences(n: usize) -> Treebank {
        (0..n)
            .map(|i| Sentence {
                tokens: vec![format!("w{i}")],
                upos: vec!["X".into()],
                heads: vec![0],
                deprels: vec!["root".into()],
            })
            .collect()
    }

    #[test]
    fn vocab_ids_and_unknowns() {
        let tb = parse_conllu(TWO_TOKENS, "mem", Annotation::Required).unwrap();
        let v = Vocab::build(&tb, 1);
        assert_eq!(v.word_id("Dogs"), 3);
        assert_eq!(v.word_id("bark"), 4);
        assert_eq!(v.word_id("cats"), UNK);
        assert_eq!(v.pos_id("NOUN"), 3);
        assert_eq!(v.num_labels(), 2);
        assert_eq!(v.label_id("root"), Some(1));
        assert_eq!(v.label_id("obj"), None);

        let v2 = Vocab::build(&tb, 2);
        assert_eq!(v2.word_id("Dogs"), UNK);
        assert_eq!(v2.num_words(), 3);
        assert_eq!(v2.num_pos(), 5);
    }

    #[test]
    fn vocab_lists_round_trip() {
        let tb = parse_conllu(TWO_TOKENS, "mem", Annotation::Required).unwrap();
        let v = Vocab::build(&tb, 1);
        let back =
            Vocab::from_lists(v.words().to_vec(), v.pos_tags().to_vec(), v.labels().to_vec()).unwrap();
        assert_eq!(back, v);
        assert!(Vocab::from_lists(vec!["a".into()], vec![], vec![]).is_err());
    }

    #[test]
    fn subsample_counts_and_determinism() {
        let tb = sentences(100);
        assert_eq!(subsample(&tb, 1.0, 3).unwrap(), tb);
        assert_eq!(subsample(&tb, 0.5, 3).unwrap().len(), 50);
        assert_eq!(subsample(&tb, 0.25, 3).unwrap().len(), 25);
        assert_eq!(subsample(&sentences(10), 0.7, 3).unwrap().len(), 7);
        assert_eq!(subsample(&sentences(3), 0.5, 3).unwrap().len(), 2);
        assert_eq!(subsample(&tb, 0.3, 9).unwrap(), subsample(&tb, 0.3, 9).unwrap());
        assert!(subsample(&tb, 0.0, 1).is_err());
        assert!(subsample(&tb, 1.5, 1).is_err());
        assert!(subsample(&tb, f64::NAN, 1).is_err());
    }
}
