//! Word and POS embeddings, a single-layer bidirectional LSTM and four
//! one-layer ReLU MLPs producing the arc/label head/dependent views.

use rand::{Rng, RngCore};

use crate::autodiff::{NodeId, Tape};
use crate::conllu::ROOT;
use crate::error::{Error, Result};
use crate::param::{prefixed, prefixed_mut, view, view_mut, HasParams, ParamView, ParamViewMut};
use crate::tensor::{matmul, RealMatrix, RealVector};

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub word_dim: usize,
    pub pos_dim: usize,
    /// Hidden size of each LSTM direction.
    pub hidden_dim: usize,
    pub arc_dim: usize,
    pub label_dim: usize,
    pub num_words: usize,
    pub num_pos: usize,
    pub dropout: f64,
    /// Embeddings are drawn from `U(-b, b)`.
    pub embedding_bound: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            word_dim: 100,
            pos_dim: 100,
            hidden_dim: 200,
            arc_dim: 400,
            label_dim: 100,
            num_words: 3,
            num_pos: 3,
            dropout: 0.33,
            embedding_bound: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("word_dim", self.word_dim),
            ("pos_dim", self.pos_dim),
            ("hidden_dim", self.hidden_dim),
            ("arc_dim", self.arc_dim),
            ("label_dim", self.label_dim),
            ("num_words", self.num_words),
            ("num_pos", self.num_pos),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.num_words <= ROOT || self.num_pos <= ROOT {
            return Err(Error::Config("vocabularies must include the reserved entries".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} is outside [0, 1)", self.dropout)));
        }
        if !self.embedding_bound.is_finite() || self.embedding_bound < 0.0 {
            return Err(Error::Config("embedding bound must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Per-position views; position 0 is ROOT.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenViews {
    pub arc_head: RealVector,
    pub arc_dep: RealVector,
    pub label_head: RealVector,
    pub label_dep: RealVector,
}

/// Vocabulary ids of one sentence, ROOT excluded.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SentenceIds {
    pub words: Vec<usize>,
    pub pos: Vec<usize>,
}

impl SentenceIds {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> RealMatrix {
    let data = (0..rows * cols)
        .map(|_| if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 })
        .collect();
    RealMatrix::from_parts(rows, cols, data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    /// `input x 4h`, gate blocks ordered input, forget, cell, output.
    pub w_input: RealMatrix,
    pub w_hidden: RealMatrix,
    pub bias: RealVector,
}

impl Lstm {
    fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].fill(1.0);
        Lstm {
            w_input: uniform(input, 4 * hidden, bound, rng),
            w_hidden: uniform(hidden, 4 * hidden, bound, rng),
            bias: RealVector::new(bias),
        }
    }

    fn hidden(&self) -> usize {
        self.w_hidden.rows()
    }

    /// Hidden states for every row of `x`, in input order; `reverse` runs
    /// right to left.
    fn run(&self, x: &RealMatrix, reverse: bool) -> RealMatrix {
        let h = self.hidden();
        let mut pre = matmul(x, &self.w_input);
        for r in 0..pre.rows() {
            for (p, b) in pre.row_mut(r).iter_mut().zip(self.bias.as_slice()) {
                *p += b;
            }
        }
        let mut out = RealMatrix::zeros(x.rows(), h);
        let mut state = vec![0.0; h];
        let mut cell = vec![0.0; h];
        let order: Vec<usize> = if reverse {
            (0..x.rows()).rev().collect()
        } else {
            (0..x.rows()).collect()
        };
        for t in order {
            let mut gates = pre.row(t).to_vec();
            for (k, &s) in state.iter().enumerate() {
                if s != 0.0 {
                    for (g, w) in gates.iter_mut().zip(self.w_hidden.row(k)) {
                        *g += s * w;
                    }
                }
            }
            for k in 0..h {
                let i = sigmoid(gates[k]);
                let f = sigmoid(gates[h + k]);
                let g = gates[2 * h + k].tanh();
                let o = sigmoid(gates[3 * h + k]);
                cell[k] = f * cell[k] + i * g;
                state[k] = o * cell[k].tanh();
            }
            out.row_mut(t).copy_from_slice(&state);
        }
        out
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl HasParams for Lstm {
    fn params(&self) -> Vec<ParamView<'_>> {
        let (ir, ic) = self.w_input.shape();
        let (hr, hc) = self.w_hidden.shape();
        vec![
            view("w_input", ir, ic, self.w_input.data()),
            view("w_hidden", hr, hc, self.w_hidden.data()),
            view("bias", 1, self.bias.len(), self.bias.as_slice()),
        ]
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        vec![
            view_mut("w_input", self.w_input.data_mut()),
            view_mut("w_hidden", self.w_hidden.data_mut()),
            view_mut("bias", self.bias.as_mut_slice()),
        ]
    }
}

/// `ReLU(x W + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub weight: RealMatrix,
    pub bias: RealVector,
}

impl Mlp {
    fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (input + output) as f64).sqrt();
        Mlp {
            weight: uniform(input, output, bound, rng),
            bias: RealVector::zeros(output),
        }
    }

    fn apply(&self, x: &RealMatrix) -> Vec<RealVector> {
        let y = matmul(x, &self.weight);
        (0..y.rows())
            .map(|r| {
                RealVector::new(
                    y.row(r)
                        .iter()
                        .zip(self.bias.as_slice())
                        .map(|(v, b)| (v + b).max(0.0))
                        .collect(),
                )
            })
            .collect()
    }
}

impl HasParams for Mlp {
    fn params(&self) -> Vec<ParamView<'_>> {
        let (r, c) = self.weight.shape();
        vec![
            view("weight", r, c, self.weight.data()),
            view("bias", 1, self.bias.len(), self.bias.as_slice()),
        ]
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        vec![
            view_mut("weight", self.weight.data_mut()),
            view_mut("bias", self.bias.as_mut_slice()),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub words: RealMatrix,
    pub pos: RealMatrix,
    pub forward: Lstm,
    pub backward: Lstm,
    pub arc_head: Mlp,
    pub arc_dep: Mlp,
    pub label_head: Mlp,
    pub label_dep: Mlp,
}

/// Tape nodes of every encoder parameter.
#[derive(Clone, Copy, Debug)]
pub struct BoundEncoder {
    words: NodeId,
    pos: NodeId,
    forward: [NodeId; 3],
    backward: [NodeId; 3],
    mlps: [[NodeId; 2]; 4],
}

/// `(len + 1) x dim` view matrices recorded on a tape; row 0 is ROOT.
#[derive(Clone, Copy, Debug)]
pub struct EncodedNodes {
    pub arc_head: NodeId,
    pub arc_dep: NodeId,
    pub label_head: NodeId,
    pub label_dep: NodeId,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let input = c.word_dim + c.pos_dim;
        let out = 2 * c.hidden_dim;
        Ok(Encoder {
            words: uniform(c.num_words, c.word_dim, c.embedding_bound, rng),
            pos: uniform(c.num_pos, c.pos_dim, c.embedding_bound, rng),
            forward: Lstm::new(input, c.hidden_dim, rng),
            backward: Lstm::new(input, c.hidden_dim, rng),
            arc_head: Mlp::new(out, c.arc_dim, rng),
            arc_dep: Mlp::new(out, c.arc_dim, rng),
            label_head: Mlp::new(out, c.label_dim, rng),
            label_dep: Mlp::new(out, c.label_dim, rng),
            config,
        })
    }

    fn check_ids(&self, ids: &SentenceIds) -> Result<()> {
        if ids.words.len() != ids.pos.len() {
            return Err(Error::Data(format!(
                "{} word ids but {} POS ids",
                ids.words.len(),
                ids.pos.len()
            )));
        }
        for (k, (&w, &p)) in ids.words.iter().zip(&ids.pos).enumerate() {
            if w >= self.config.num_words {
                return Err(Error::Data(format!(
                    "token {}: word id {w} out of range ({} words)",
                    k + 1,
                    self.config.num_words
                )));
            }
            if p >= self.config.num_pos {
                return Err(Error::Data(format!(
                    "token {}: POS id {p} out of range ({} tags)",
                    k + 1,
                    self.config.num_pos
                )));
            }
        }
        Ok(())
    }

    fn with_root(ids: &[usize]) -> Vec<usize> {
        std::iter::once(ROOT).chain(ids.iter().copied()).collect()
    }

    /// Evaluation-mode views (no dropout), ROOT first.
    pub fn encode(&self, ids: &SentenceIds) -> Result<Vec<TokenViews>> {
        self.check_ids(ids)?;
        let words = Self::with_root(&ids.words);
        let pos = Self::with_root(&ids.pos);
        let (dw, dp) = (self.config.word_dim, self.config.pos_dim);
        let mut x = RealMatrix::zeros(words.len(), dw + dp);
        for (t, (&w, &p)) in words.iter().zip(&pos).enumerate() {
            let row = x.row_mut(t);
            row[..dw].copy_from_slice(self.words.row(w));
            row[dw..].copy_from_slice(self.pos.row(p));
        }
        let fwd = self.forward.run(&x, false);
        let bwd = self.backward.run(&x, true);
        let h = self.config.hidden_dim;
        let mut y = RealMatrix::zeros(words.len(), 2 * h);
        for t in 0..words.len() {
            let row = y.row_mut(t);
            row[..h].copy_from_slice(fwd.row(t));
            row[h..].copy_from_slice(bwd.row(t));
        }
        let arc_head = self.arc_head.apply(&y);
        let arc_dep = self.arc_dep.apply(&y);
        let label_head = self.label_head.apply(&y);
        let label_dep = self.label_dep.apply(&y);
        Ok(arc_head
            .into_iter()
            .zip(arc_dep)
            .zip(label_head.into_iter().zip(label_dep))
            .map(|((arc_head, arc_dep), (label_head, label_dep))| TokenViews {
                arc_head,
                arc_dep,
                label_head,
                label_dep,
            })
            .collect())
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundEncoder {
        self.bound_from(&self.bind_all(tape))
    }

    /// Splits node ids bound in declared parameter order.
    pub(crate) fn bound_from(&self, ids: &[NodeId]) -> BoundEncoder {
        let at = |i: usize| ids[i];
        BoundEncoder {
            words: at(0),
            pos: at(1),
            forward: [at(2), at(3), at(4)],
            backward: [at(5), at(6), at(7)],
            mlps: [[at(8), at(9)], [at(10), at(11)], [at(12), at(13)], [at(14), at(15)]],
        }
    }

    /// Records the encoder on `tape`. With `dropout`, each MLP input gets
    /// an independent inverted-dropout mask drawn from that generator.
    pub fn encode_on_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundEncoder,
        ids: &SentenceIds,
        mut dropout: Option<&mut dyn RngCore>,
    ) -> Result<EncodedNodes> {
        self.check_ids(ids)?;
        let words = tape.gather_rows(bound.words, &Self::with_root(&ids.words))?;
        let pos = tape.gather_rows(bound.pos, &Self::with_root(&ids.pos))?;
        let x = tape.concat_cols(&[words, pos])?;
        let fwd = lstm_on_tape(tape, bound.forward, x, false)?;
        let bwd = lstm_on_tape(tape, bound.backward, x, true)?;
        let y = tape.concat_cols(&[fwd, bwd])?;

        let rate = self.config.dropout;
        let mut outputs = [y; 4];
        for (slot, [w, b]) in outputs.iter_mut().zip(bound.mlps) {
            let mut input = y;
            if let Some(rng) = dropout.as_deref_mut() {
                if rate > 0.0 {
                    let (r, c) = tape.value(y).shape();
                    let keep = 1.0 / (1.0 - rate);
                    let mask = (0..r * c)
                        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                        .collect();
                    input = tape.mul_const(y, RealMatrix::from_parts(r, c, mask))?;
                }
            }
            let z = tape.matmul(input, w)?;
            let z = tape.add_row(z, b)?;
            *slot = tape.relu(z)?;
        }
        let [arc_head, arc_dep, label_head, label_dep] = outputs;
        Ok(EncodedNodes {
            arc_head,
            arc_dep,
            label_head,
            label_dep,
        })
    }
}

fn lstm_on_tape(tape: &mut Tape, params: [NodeId; 3], x: NodeId, reverse: bool) -> Result<NodeId> {
    let [w_input, w_hidden, bias] = params;
    let steps = tape.value(x).rows();
    let h = tape.value(w_hidden).rows();
    let pre = tape.matmul(x, w_input)?;
    let pre = tape.add_row(pre, bias)?;
    let mut state: Option<NodeId> = None;
    let mut cell: Option<NodeId> = None;
    let mut outputs = vec![None; steps];
    let order: Vec<usize> = if reverse {
        (0..steps).rev().collect()
    } else {
        (0..steps).collect()
    };
    for t in order {
        let mut gates = tape.slice_rows(pre, t, t + 1)?;
        if let Some(s) = state {
            let rec = tape.matmul(s, w_hidden)?;
            gates = tape.add(gates, rec)?;
        }
        let i = tape.slice_cols(gates, 0, h)?;
        let i = tape.sigmoid(i)?;
        let f = tape.slice_cols(gates, h, 2 * h)?;
        let f = tape.sigmoid(f)?;
        let g = tape.slice_cols(gates, 2 * h, 3 * h)?;
        let g = tape.tanh(g)?;
        let o = tape.slice_cols(gates, 3 * h, 4 * h)?;
        let o = tape.sigmoid(o)?;
        let mut c = tape.mul(i, g)?;
        if let Some(prev) = cell {
            let kept = tape.mul(f, prev)?;
            c = tape.add(kept, c)?;
        }
        let tc = tape.tanh(c)?;
        let s = tape.mul(o, tc)?;
        state = Some(s);
        cell = Some(c);
        outputs[t] = Some(s);
    }
    let rows: Vec<NodeId> = outputs.into_iter().map(|o| o.expect("every step ran")).collect();
    tape.concat_rows(&rows)
}

impl HasParams for Encoder {
    fn params(&self) -> Vec<ParamView<'_>> {
        let mut out = vec![
            view("words", self.words.rows(), self.words.cols(), self.words.data()),
            view("pos", self.pos.rows(), self.pos.cols(), self.pos.data()),
        ];
        out.extend(prefixed("forward", self.forward.params()));
        out.extend(prefixed("backward", self.backward.params()));
        out.extend(prefixed("arc_head", self.arc_head.params()));
        out.extend(prefixed("arc_dep", self.arc_dep.params()));
        out.extend(prefixed("label_head", self.label_head.params()));
        out.extend(prefixed("label_dep", self.label_dep.params()));
        out
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        let mut out = vec![
            view_mut("words", self.words.data_mut()),
            view_mut("pos", self.pos.data_mut()),
        ];
        out.extend(prefixed_mut("forward", self.forward.params_mut()));
        out.extend(prefixed_mut("backward", self.backward.params_mut()));
        out.extend(prefixed_mut("arc_head", self.arc_head.params_mut()));
        out.extend(prefixed_mut("arc_dep", self.arc_dep.params_mut()));
        out.extend(prefixed_mut("label_head", self.label_head.params_mut()));
        out.extend(prefixed_mut("label_dep", self.label_dep.params_mut()));
        out
    }
}
