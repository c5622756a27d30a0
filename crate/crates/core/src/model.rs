//! A complete parser (encoder plus classifiers), its loss, and its binary
//! file format.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! magic "BIAFPARS" | u32 version
//! str config text | list words | list pos | list labels
//! u32 param count | per param: str name, u32 rows, u32 cols, rows*cols f64
//! 32-byte SHA-256 of everything above
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8; `list` is a u32 count of
//! `str`s.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::autodiff::{NodeId, Tape};
use crate::config::ModelConfig;
use crate::conllu::{Sentence, Vocab};
use crate::decoder::{assign_labels, chu_liu_edmonds, ParseTree, UNKNOWN_LABEL};
use crate::encoder::{BoundEncoder, Encoder, SentenceIds, TokenViews};
use crate::error::{Error, Result};
use crate::kernels::Initializer;
use crate::param::{prefixed, prefixed_mut, HasParams, ParamView, ParamViewMut};
use crate::scorers::{
    arc_grid_on_tape, arc_loss_on_tape, label_loss_on_tape, label_scores_on_tape, score_arcs,
    ArcClassifier, BoundArc, BoundLabels, LabelClassifier,
};

pub const MAGIC: &[u8; 8] = b"BIAFPARS";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub encoder: Encoder,
    pub arc: ArcClassifier,
    pub labels: LabelClassifier,
}

/// A training sentence mapped to ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreparedSentence {
    pub ids: SentenceIds,
    pub heads: Vec<usize>,
    /// `None` for labels outside the vocabulary.
    pub labels: Vec<Option<usize>>,
}

#[derive(Clone, Debug)]
pub struct BoundModel {
    pub encoder: BoundEncoder,
    pub arc: BoundArc,
    pub labels: BoundLabels,
}

impl Model {
    /// Fresh parameters drawn from `rng`.
    pub fn new(config: ModelConfig, vocab: Vocab, rng: &mut dyn RngCore) -> Result<Model> {
        config.validate()?;
        if vocab.num_labels() == 0 {
            return Err(Error::Data("the label vocabulary is empty".into()));
        }
        let encoder = Encoder::new(config.encoder(vocab.num_words(), vocab.num_pos()), rng)?;
        let init = Initializer::Uniform(config.kernel_bound);
        let arc = ArcClassifier::new(config.variant, config.arc_dim, init, rng);
        let labels = LabelClassifier::new(config.variant, config.label_dim, vocab.num_labels(), init, rng);
        Ok(Model {
            config,
            vocab,
            encoder,
            arc,
            labels,
        })
    }

    pub fn sentence_ids(&self, sentence: &Sentence) -> SentenceIds {
        SentenceIds {
            words: sentence.tokens.iter().map(|w| self.vocab.word_id(w)).collect(),
            pos: sentence.upos.iter().map(|p| self.vocab.pos_id(p)).collect(),
        }
    }

    pub fn prepare(&self, sentence: &Sentence) -> PreparedSentence {
        PreparedSentence {
            ids: self.sentence_ids(sentence),
            heads: sentence.heads.clone(),
            labels: sentence.deprels.iter().map(|l| self.vocab.label_id(l)).collect(),
        }
    }

    /// Gold tree with label ids; unknown labels never match a prediction.
    pub fn gold_tree(&self, sentence: &Sentence) -> ParseTree {
        ParseTree {
            heads: sentence.heads.clone(),
            labels: sentence
                .deprels
                .iter()
                .map(|l| self.vocab.label_id(l).unwrap_or(UNKNOWN_LABEL))
                .collect(),
        }
    }

    pub fn views(&self, sentence: &Sentence) -> Result<Vec<TokenViews>> {
        self.encoder.encode(&self.sentence_ids(sentence))
    }

    pub fn predict(&self, sentence: &Sentence) -> Result<ParseTree> {
        if sentence.is_empty() {
            return Ok(ParseTree::default());
        }
        let views = self.views(sentence)?;
        let scores = score_arcs(&views, &self.arc)?;
        let heads = chu_liu_edmonds(&scores, self.config.single_root)?;
        assign_labels(&heads, &views, &self.labels)
    }

    /// Copy of `sentence` with predicted HEAD and DEPREL.
    pub fn parse_sentence(&self, sentence: &Sentence) -> Result<Sentence> {
        let tree = self.predict(sentence)?;
        let deprels = tree
            .labels
            .iter()
            .map(|&l| self.vocab.label(l).unwrap_or("_").to_string())
            .collect();
        Ok(Sentence {
            tokens: sentence.tokens.clone(),
            upos: sentence.upos.clone(),
            heads: tree.heads,
            deprels,
        })
    }

    pub fn parse(&self, treebank: &[Sentence]) -> Result<Vec<Sentence>> {
        treebank
            .iter()
            .enumerate()
            .map(|(i, s)| {
                self.parse_sentence(s).map_err(|e| match e {
                    Error::Data(msg) => Error::Data(format!("sentence {}: {msg}", i + 1)),
                    other => other,
                })
            })
            .collect()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let ids = self.bind_all(tape);
        let (encoder, rest) = ids.split_at(self.encoder.params().len());
        let (arc, labels) = rest.split_at(self.arc.params().len());
        BoundModel {
            encoder: self.encoder.bound_from(encoder),
            arc: self.arc.bound_from(arc),
            labels: self.labels.bound_from(labels),
        }
    }

    /// Records arc plus label loss of one non-empty sentence. Labels are
    /// scored at the gold heads.
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
        sentence: &PreparedSentence,
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<NodeId> {
        let n = sentence.ids.len();
        if n == 0 || sentence.heads.len() != n || sentence.labels.len() != n {
            return Err(Error::Data(format!(
                "cannot train on a sentence with {n} tokens and {} heads",
                sentence.heads.len()
            )));
        }
        let views = self.encoder.encode_on_tape(tape, &bound.encoder, &sentence.ids, dropout)?;
        let grid = arc_grid_on_tape(tape, &bound.arc, views.arc_head, views.arc_dep)?;
        let arc = arc_loss_on_tape(tape, grid, &sentence.heads)?;
        let heads = tape.gather_rows(views.label_head, &sentence.heads)?;
        let deps = tape.slice_rows(views.label_dep, 1, n + 1)?;
        let logits = label_scores_on_tape(tape, &bound.labels, heads, deps)?;
        match label_loss_on_tape(tape, logits, &sentence.labels)? {
            Some(label) => tape.add(arc, label),
            None => Ok(arc),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_str(&mut out, &self.config.to_text());
        for list in [self.vocab.words(), self.vocab.pos_tags(), self.vocab.labels()] {
            put_u32(&mut out, list.len());
            for item in list {
                put_str(&mut out, item);
            }
        }
        let params = self.params();
        put_u32(&mut out, params.len());
        for p in params {
            put_str(&mut out, &p.name);
            put_u32(&mut out, p.rows);
            put_u32(&mut out, p.cols);
            for v in p.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        let fail = |msg: &str| Error::ModelFormat(msg.to_string());
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(fail("file is too short"));
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(fail("not a model file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let (body, checksum) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != checksum {
            return Err(fail("checksum mismatch"));
        }

        let mut r = Reader {
            bytes: body,
            pos: 12,
        };
        let config = ModelConfig::from_text(&r.string()?, "model config")
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        let mut lists = Vec::new();
        for _ in 0..3 {
            let count = r.u32()?;
            let mut list = Vec::new();
            for _ in 0..count {
                list.push(r.string()?);
            }
            lists.push(list);
        }
        let labels = lists.pop().expect("three lists");
        let pos = lists.pop().expect("three lists");
        let words = lists.pop().expect("three lists");
        let vocab = Vocab::from_lists(words, pos, labels).map_err(|e| Error::ModelFormat(e.to_string()))?;

        let count = r.u32()?;
        let mut arrays = Vec::new();
        let mut scalars = 0usize;
        for _ in 0..count {
            let name = r.string()?;
            let rows = r.u32()?;
            let cols = r.u32()?;
            let len = rows.checked_mul(cols).ok_or_else(|| fail("parameter shape overflows"))?;
            let data = r.f64s(len)?;
            scalars += len;
            arrays.push((name, rows, cols, data));
        }
        if r.pos != body.len() {
            return Err(fail("trailing bytes after the parameters"));
        }
        let expected = config.parameter_count(vocab.num_words(), vocab.num_pos(), vocab.num_labels());
        if expected != Some(scalars) {
            return Err(fail("parameter count does not match the configuration"));
        }

        let mut model = Model::new(config, vocab, &mut ChaCha8Rng::seed_from_u64(0))
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        let shapes: Vec<(String, usize, usize)> =
            model.params().iter().map(|p| (p.name.clone(), p.rows, p.cols)).collect();
        if shapes.len() != arrays.len() {
            return Err(fail("parameter list does not match the configuration"));
        }
        for ((name, rows, cols), (got_name, got_rows, got_cols, _)) in shapes.iter().zip(&arrays) {
            if name != got_name || rows != got_rows || cols != got_cols {
                return Err(Error::ModelFormat(format!(
                    "expected parameter `{name}` ({rows}x{cols}), found `{got_name}` ({got_rows}x{got_cols})"
                )));
            }
        }
        for (view, (_, _, _, data)) in model.params_mut().into_iter().zip(arrays) {
            view.data.copy_from_slice(&data);
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Model::from_bytes(&bytes)
    }
}

impl HasParams for Model {
    fn params(&self) -> Vec<ParamView<'_>> {
        let mut out = prefixed("encoder", self.encoder.params());
        out.extend(prefixed("arc", self.arc.params()));
        out.extend(prefixed("label", self.labels.params()));
        out
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        let mut out = prefixed_mut("encoder", self.encoder.params_mut());
        out.extend(prefixed_mut("arc", self.arc.params_mut()));
        out.extend(prefixed_mut("label", self.labels.params_mut()));
        out
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("model sections fit in u32");
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, len: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::ModelFormat("unexpected end of file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()?;
        let b = self.take(len)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::ModelFormat("invalid UTF-8 in string".into()))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let len = count
            .checked_mul(8)
            .ok_or_else(|| Error::ModelFormat("parameter shape overflows".into()))?;
        let b = self.take(len)?;
        Ok(b
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::{parse_conllu, Annotation};
    use crate::kernels::Variant;

    const TEXT: &str = "1\tthe\t_\tDET\t_\t_\t2\tdet\t_\t_\n\
        2\tdog\t_\tNOUN\t_\t_\t3\tnsubj\t_\t_\n\
        3\tbarks\t_\tVERB\t_\t_\t0\troot\t_\t_\n\n";

    fn small(variant: Variant) -> ModelConfig {
        ModelConfig {
            variant,
            word_dim: 4,
            pos_dim: 3,
            hidden_dim: 5,
            arc_dim: 6,
            label_dim: 4,
            ..ModelConfig::default()
        }
    }

    fn model(variant: Variant) -> (Model, Vec<Sentence>) {
        let tb = parse_conllu(TEXT, "mem", Annotation::Required).unwrap();
        let vocab = Vocab::build(&tb, 1);
        let m = Model::new(small(variant), vocab, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        (m, tb)
    }

    #[test]
    fn parameter_count_matches_instantiation() {
        for variant in Variant::ALL {
            let (m, _) = model(variant);
            let expected = m
                .config
                .parameter_count(m.vocab.num_words(), m.vocab.num_pos(), m.vocab.num_labels());
            assert_eq!(expected, Some(m.num_scalars()));
        }
    }

    #[test]
    fn predictions_are_valid_trees() {
        for variant in Variant::ALL {
            let (m, tb) = model(variant);
            let tree = m.predict(&tb[0]).unwrap();
            assert!(tree.is_valid(true));
            assert_eq!(tree.labels.len(), 3);
            assert!(m.predict(&Sentence::default()).unwrap().is_empty());
        }
    }

    #[test]
    fn bytes_round_trip() {
        for variant in Variant::ALL {
            let (m, tb) = model(variant);
            let back = Model::from_bytes(&m.to_bytes()).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.parse(&tb).unwrap(), m.parse(&tb).unwrap());
        }
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let (m, _) = model(Variant::Symmetric);
        let bytes = m.to_bytes();

        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(Model::from_bytes(&flipped), Err(Error::ModelFormat(_))));

        let mut version = bytes.clone();
        version[8] = 9;
        let err = Model::from_bytes(&version).unwrap_err();
        assert!(err.to_string().contains("version 9"), "{err}");

        assert!(Model::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Model::from_bytes(b"BIAFPARS").is_err());
        assert!(Model::from_bytes(&[]).is_err());
    }

    #[test]
    fn loss_is_positive_and_finite() {
        for variant in Variant::ALL {
            let (m, tb) = model(variant);
            let mut tape = Tape::new();
            let bound = m.bind(&mut tape);
            let loss = m.loss_on_tape(&mut tape, &bound, &m.prepare(&tb[0]), None).unwrap();
            let v = tape.value(loss).data()[0];
            assert!(v.is_finite() && v > 0.0);
        }
    }
}
