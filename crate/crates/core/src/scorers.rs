//! Arc and label classifiers built from the bilinear kernels plus bias
//! terms, evaluated either directly on values or recorded on a tape.
//!
//! Arc scores (`h` the head view, `d` the dependent view):
//!
//! * dense: `h^T W d + h^T b`
//! * symmetric: `<h, w, d> + (h ++ d)^T b`
//! * circulant: `h^T C(w) d + (h ++ d)^T b`
//!
//! Label `l` uses the same shapes with a per-label kernel and a `2m` bias;
//! the dense variant additionally carries a scalar bias per label.

use rand::Rng;
use rustfft::num_complex::Complex64;

use crate::autodiff::{NodeId, Tape};
use crate::encoder::TokenViews;
use crate::error::{Error, Result};
use crate::fft::dft_real;
use crate::kernels::{
    circulant_bilinear_naive, hermitian_triple, real_from_spectrum, Initializer, KernelWeights,
    Variant,
};
use crate::param::{view, view_mut, HasParams, ParamView, ParamViewMut};
use crate::tensor::{dot, RealMatrix, RealVector};

/// Square grid of arc scores; `get(h, d)` scores head `h` for dependent `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    size: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn zeros(size: usize) -> Self {
        ScoreMatrix {
            size,
            data: vec![0.0; size * size],
        }
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(size * size);
        for h in 0..size {
            for d in 0..size {
                data.push(f(h, d));
            }
        }
        ScoreMatrix { size, data }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, head: usize, dep: usize) -> f64 {
        self.data[head * self.size + dep]
    }

    pub fn set(&mut self, head: usize, dep: usize, value: f64) {
        self.data[head * self.size + dep] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_matrix(&self) -> RealMatrix {
        RealMatrix::from_parts(self.size, self.size, self.data.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArcClassifier {
    pub kernel: KernelWeights,
    /// Length `n` for dense (head only), `2n` otherwise (head then dep).
    pub bias: RealVector,
}

impl ArcClassifier {
    pub fn new<R: Rng + ?Sized>(variant: Variant, n: usize, init: Initializer, rng: &mut R) -> Self {
        ArcClassifier {
            kernel: KernelWeights::new(variant, n, init, rng),
            bias: RealVector::zeros(arc_bias_len(variant, n)),
        }
    }

    pub fn variant(&self) -> Variant {
        self.kernel.variant()
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    fn check(&self) -> Result<()> {
        let expected = arc_bias_len(self.variant(), self.dim());
        if self.bias.len() != expected {
            return Err(Error::shape(
                "arc classifier",
                format!("bias has length {}, expected {expected}", self.bias.len()),
            ));
        }
        Ok(())
    }
}

pub fn arc_bias_len(variant: Variant, n: usize) -> usize {
    match variant {
        Variant::Dense => n,
        Variant::Symmetric | Variant::Circulant => 2 * n,
    }
}

impl HasParams for ArcClassifier {
    fn params(&self) -> Vec<ParamView<'_>> {
        let (r, c) = self.kernel.storage_shape();
        vec![
            view("kernel", r, c, self.kernel.as_slice()),
            view("bias", 1, self.bias.len(), self.bias.as_slice()),
        ]
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        vec![
            view_mut("kernel", self.kernel.as_mut_slice()),
            view_mut("bias", self.bias.as_mut_slice()),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelEntry {
    pub kernel: KernelWeights,
    /// Head half then dependent half, `2m` in total.
    pub bias: RealVector,
    /// Dense only.
    pub scalar: Option<[f64; 1]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelClassifier {
    pub entries: Vec<LabelEntry>,
}

impl LabelClassifier {
    pub fn new<R: Rng + ?Sized>(
        variant: Variant,
        m: usize,
        num_labels: usize,
        init: Initializer,
        rng: &mut R,
    ) -> Self {
        let entries = (0..num_labels)
            .map(|_| LabelEntry {
                kernel: KernelWeights::new(variant, m, init, rng),
                bias: RealVector::zeros(2 * m),
                scalar: (variant == Variant::Dense).then_some([0.0]),
            })
            .collect();
        LabelClassifier { entries }
    }

    pub fn num_labels(&self) -> usize {
        self.entries.len()
    }

    pub fn variant(&self) -> Option<Variant> {
        self.entries.first().map(|e| e.kernel.variant())
    }

    pub fn dim(&self) -> Option<usize> {
        self.entries.first().map(|e| e.kernel.dim())
    }

    fn check(&self) -> Result<(Variant, usize)> {
        let (Some(variant), Some(m)) = (self.variant(), self.dim()) else {
            return Err(Error::shape("label classifier", "no labels"));
        };
        for (l, e) in self.entries.iter().enumerate() {
            let ok = e.kernel.variant() == variant
                && e.kernel.dim() == m
                && e.bias.len() == 2 * m
                && e.scalar.is_some() == (variant == Variant::Dense);
            if !ok {
                return Err(Error::shape(
                    "label classifier",
                    format!("label {l} does not match the {variant} layout with m = {m}"),
                ));
            }
        }
        Ok((variant, m))
    }
}

impl HasParams for LabelClassifier {
    fn params(&self) -> Vec<ParamView<'_>> {
        let mut out = Vec::new();
        for (l, e) in self.entries.iter().enumerate() {
            let (r, c) = e.kernel.storage_shape();
            out.push(view(format!("{l}.kernel"), r, c, e.kernel.as_slice()));
            out.push(view(format!("{l}.bias"), 1, e.bias.len(), e.bias.as_slice()));
            if let Some(s) = &e.scalar {
                out.push(view(format!("{l}.scalar"), 1, 1, s));
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        let mut out = Vec::new();
        for (l, e) in self.entries.iter_mut().enumerate() {
            out.push(view_mut(format!("{l}.kernel"), e.kernel.as_mut_slice()));
            out.push(view_mut(format!("{l}.bias"), e.bias.as_mut_slice()));
            if let Some(s) = &mut e.scalar {
                out.push(view_mut(format!("{l}.scalar"), s));
            }
        }
        out
    }
}

/// How circulant kernels are evaluated when scoring values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CirculantPath {
    #[default]
    Fft,
    /// Materializes `C(w)` and evaluates in `O(n^2)` per pair.
    Naive,
}

pub fn score_arcs(views: &[TokenViews], clf: &ArcClassifier) -> Result<ScoreMatrix> {
    score_arcs_with(views, clf, CirculantPath::Fft)
}

/// The full arc score grid for one sentence (ROOT included).
pub fn score_arcs_with(
    views: &[TokenViews],
    clf: &ArcClassifier,
    path: CirculantPath,
) -> Result<ScoreMatrix> {
    clf.check()?;
    if views.is_empty() {
        return Err(Error::shape("score_arcs", "no positions"));
    }
    let n = clf.dim();
    for v in views {
        if v.arc_head.len() != n || v.arc_dep.len() != n {
            return Err(Error::shape(
                "score_arcs",
                format!(
                    "views of length {}/{} against kernel dimension {n}",
                    v.arc_head.len(),
                    v.arc_dep.len()
                ),
            ));
        }
    }
    let size = views.len();
    let b = clf.bias.as_slice();
    let head_bias: Vec<f64> = views.iter().map(|v| dot(v.arc_head.as_slice(), &b[..n])).collect();
    let dep_bias: Vec<f64> = match clf.variant() {
        Variant::Dense => vec![0.0; size],
        _ => views.iter().map(|v| dot(v.arc_dep.as_slice(), &b[n..])).collect(),
    };

    let mut out = ScoreMatrix::zeros(size);
    match (&clf.kernel, path) {
        (KernelWeights::Dense(w), _) => {
            for (h, hv) in views.iter().enumerate() {
                // h^T W, then one dot product per dependent.
                let mut hw = vec![0.0; n];
                for (r, &x) in hv.arc_head.as_slice().iter().enumerate() {
                    for (acc, &wv) in hw.iter_mut().zip(w.row(r)) {
                        *acc += x * wv;
                    }
                }
                for (d, dv) in views.iter().enumerate() {
                    out.set(h, d, dot(&hw, dv.arc_dep.as_slice()) + head_bias[h]);
                }
            }
        }
        (KernelWeights::Symmetric(w), _) => {
            for (h, hv) in views.iter().enumerate() {
                let hw: Vec<f64> = hv
                    .arc_head
                    .as_slice()
                    .iter()
                    .zip(w.as_slice())
                    .map(|(x, y)| x * y)
                    .collect();
                for (d, dv) in views.iter().enumerate() {
                    let s = dot(&hw, dv.arc_dep.as_slice()) + head_bias[h] + dep_bias[d];
                    out.set(h, d, s);
                }
            }
        }
        (KernelWeights::Circulant(spectrum), CirculantPath::Fft) => {
            let w = spectrum.as_interleaved();
            // conj(F h) * w' per head, F d per dependent.
            let heads: Vec<Vec<Complex64>> = views
                .iter()
                .map(|v| {
                    dft_real(v.arc_head.as_slice())
                        .iter()
                        .enumerate()
                        .map(|(k, c)| c.conj() * Complex64::new(w[2 * k], w[2 * k + 1]))
                        .collect()
                })
                .collect();
            let deps: Vec<Vec<Complex64>> =
                views.iter().map(|v| dft_real(v.arc_dep.as_slice())).collect();
            for (h, ph) in heads.iter().enumerate() {
                for (d, fd) in deps.iter().enumerate() {
                    let s: f64 = ph.iter().zip(fd).map(|(p, f)| p.re * f.re - p.im * f.im).sum();
                    out.set(h, d, s + head_bias[h] + dep_bias[d]);
                }
            }
        }
        (KernelWeights::Circulant(spectrum), CirculantPath::Naive) => {
            let w = real_from_spectrum(spectrum);
            for (h, hv) in views.iter().enumerate() {
                for (d, dv) in views.iter().enumerate() {
                    let s = circulant_bilinear_naive(hv.arc_head.as_slice(), &w, dv.arc_dep.as_slice())?;
                    out.set(h, d, s + head_bias[h] + dep_bias[d]);
                }
            }
        }
    }
    Ok(out)
}

/// Scores of every label for one (head, dependent) pair.
pub fn score_labels(head: &TokenViews, dep: &TokenViews, clf: &LabelClassifier) -> Result<RealVector> {
    let (variant, m) = clf.check()?;
    let (h, d) = (head.label_head.as_slice(), dep.label_dep.as_slice());
    if h.len() != m || d.len() != m {
        return Err(Error::shape(
            "score_labels",
            format!("views of length {}/{} against kernel dimension {m}", h.len(), d.len()),
        ));
    }
    let transforms = (variant == Variant::Circulant).then(|| (dft_real(h), dft_real(d)));
    let mut out = Vec::with_capacity(clf.num_labels());
    for e in &clf.entries {
        let kernel = match (&e.kernel, &transforms) {
            (KernelWeights::Circulant(w), Some((fh, fd))) => hermitian_triple(fh, w.as_interleaved(), fd),
            (k, _) => k.bilinear(h, d)?,
        };
        let b = e.bias.as_slice();
        let bias = dot(h, &b[..m]) + dot(d, &b[m..]);
        out.push(kernel + bias + e.scalar.map_or(0.0, |s| s[0]));
    }
    Ok(RealVector::new(out))
}

/// `-log softmax(values)[target]` over the entries `allowed` admits.
fn cross_entropy(values: impl Iterator<Item = (usize, f64)> + Clone, target: usize) -> Result<f64> {
    let max = values.clone().map(|(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    let mut gold = None;
    for (i, v) in values {
        z += (v - max).exp();
        if i == target {
            gold = Some(v);
        }
    }
    let gold = gold.ok_or_else(|| Error::shape("cross_entropy", format!("target {target} is masked")))?;
    Ok(max + z.ln() - gold)
}

/// Mean over dependents of the softmax cross-entropy of the gold head,
/// with self-attachment excluded. `gold_heads[k]` is the head of token `k + 1`.
pub fn arc_loss(scores: &ScoreMatrix, gold_heads: &[usize]) -> Result<f64> {
    let size = scores.size();
    if gold_heads.len() + 1 != size {
        return Err(Error::shape(
            "arc_loss",
            format!("{} gold heads for a grid of size {size}", gold_heads.len()),
        ));
    }
    if gold_heads.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (k, &gold) in gold_heads.iter().enumerate() {
        let d = k + 1;
        if gold >= size {
            return Err(Error::shape("arc_loss", format!("head {gold} out of range")));
        }
        let column = (0..size).filter(|&h| h != d).map(|h| (h, scores.get(h, d)));
        total += cross_entropy(column, gold)?;
    }
    Ok(total / gold_heads.len() as f64)
}

/// Mean softmax cross-entropy of the gold labels, one score vector per token.
/// Tokens whose gold label is `None` are skipped.
pub fn label_loss(label_scores: &[RealVector], gold_labels: &[Option<usize>]) -> Result<f64> {
    if label_scores.len() != gold_labels.len() {
        return Err(Error::shape(
            "label_loss",
            format!("{} score vectors for {} labels", label_scores.len(), gold_labels.len()),
        ));
    }
    let mut total = 0.0;
    let mut count = 0;
    for (scores, gold) in label_scores.iter().zip(gold_labels) {
        let Some(gold) = *gold else { continue };
        if gold >= scores.len() {
            return Err(Error::shape("label_loss", format!("label {gold} out of range")));
        }
        total += cross_entropy(scores.as_slice().iter().copied().enumerate(), gold)?;
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Tape nodes of a bound kernel plus its bias terms.
#[derive(Clone, Copy, Debug)]
pub struct BoundArc {
    pub variant: Variant,
    pub kernel: NodeId,
    pub bias: NodeId,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLabelEntry {
    pub kernel: NodeId,
    pub bias: NodeId,
    pub scalar: Option<NodeId>,
}

#[derive(Clone, Debug)]
pub struct BoundLabels {
    pub variant: Variant,
    pub dim: usize,
    pub entries: Vec<BoundLabelEntry>,
}

impl ArcClassifier {
    pub fn bind(&self, tape: &mut Tape) -> BoundArc {
        self.bound_from(&self.bind_all(tape))
    }

    pub(crate) fn bound_from(&self, ids: &[NodeId]) -> BoundArc {
        BoundArc {
            variant: self.variant(),
            kernel: ids[0],
            bias: ids[1],
        }
    }
}

impl LabelClassifier {
    pub fn bind(&self, tape: &mut Tape) -> BoundLabels {
        self.bound_from(&self.bind_all(tape))
    }

    pub(crate) fn bound_from(&self, ids: &[NodeId]) -> BoundLabels {
        let mut it = ids.iter().copied();
        let entries = self
            .entries
            .iter()
            .map(|e| BoundLabelEntry {
                kernel: it.next().expect("kernel"),
                bias: it.next().expect("bias"),
                scalar: e.scalar.map(|_| it.next().expect("scalar")),
            })
            .collect();
        BoundLabels {
            variant: self.variant().unwrap_or(Variant::Dense),
            dim: self.dim().unwrap_or(0),
            entries,
        }
    }
}

/// `(Re, Im)` of `conj(F x) * w` and of `F y`, row by row.
fn spectral_pair(tape: &mut Tape, x: NodeId, w: NodeId, y: NodeId) -> Result<[NodeId; 4]> {
    let xc = tape.to_complex(x)?;
    let fx = tape.dft(xc)?;
    let fx = tape.conj(fx)?;
    let p = tape.complex_mul_row(fx, w)?;
    let yc = tape.to_complex(y)?;
    let fy = tape.dft(yc)?;
    Ok([
        tape.real_part(p)?,
        tape.imag_part(p)?,
        tape.real_part(fy)?,
        tape.imag_part(fy)?,
    ])
}

/// Records the arc grid for head views `heads` and dependent views `deps`
/// (both `P x n`); the result is `P x P` with rows indexing heads.
pub fn arc_grid_on_tape(tape: &mut Tape, clf: &BoundArc, heads: NodeId, deps: NodeId) -> Result<NodeId> {
    let n = tape.value(heads).cols();
    let grid = match clf.variant {
        Variant::Dense => {
            let hw = tape.matmul(heads, clf.kernel)?;
            tape.matmul_nt(hw, deps)?
        }
        Variant::Symmetric => {
            let hw = tape.mul_row(heads, clf.kernel)?;
            tape.matmul_nt(hw, deps)?
        }
        Variant::Circulant => {
            let [pr, pi, dr, di] = spectral_pair(tape, heads, clf.kernel, deps)?;
            let re = tape.matmul_nt(pr, dr)?;
            let im = tape.matmul_nt(pi, di)?;
            tape.sub(re, im)?
        }
    };
    let head_bias = tape.slice_cols(clf.bias, 0, n)?;
    let hb = tape.matmul_nt(heads, head_bias)?;
    let grid = tape.add_col(grid, hb)?;
    if clf.variant == Variant::Dense {
        return Ok(grid);
    }
    let dep_bias = tape.slice_cols(clf.bias, n, 2 * n)?;
    let db = tape.matmul_nt(dep_bias, deps)?;
    tape.add_row(grid, db)
}

/// Records label scores for aligned rows of `heads` and `deps` (`T x m`),
/// giving `T x L` logits.
pub fn label_scores_on_tape(
    tape: &mut Tape,
    clf: &BoundLabels,
    heads: NodeId,
    deps: NodeId,
) -> Result<NodeId> {
    let m = clf.dim;
    let transforms = if clf.variant == Variant::Circulant {
        let hc = tape.to_complex(heads)?;
        let fh = tape.dft(hc)?;
        let fh = tape.conj(fh)?;
        let dc = tape.to_complex(deps)?;
        let fd = tape.dft(dc)?;
        Some((fh, tape.real_part(fd)?, tape.imag_part(fd)?))
    } else {
        None
    };
    let mut columns = Vec::with_capacity(clf.entries.len());
    for e in &clf.entries {
        let kernel = match (clf.variant, transforms) {
            (Variant::Dense, _) => {
                let hw = tape.matmul(heads, e.kernel)?;
                tape.row_dot(hw, deps)?
            }
            (Variant::Symmetric, _) => {
                let hw = tape.mul_row(heads, e.kernel)?;
                tape.row_dot(hw, deps)?
            }
            (Variant::Circulant, Some((fh, dr, di))) => {
                let p = tape.complex_mul_row(fh, e.kernel)?;
                let pr = tape.real_part(p)?;
                let pi = tape.imag_part(p)?;
                let re = tape.row_dot(pr, dr)?;
                let im = tape.row_dot(pi, di)?;
                tape.sub(re, im)?
            }
            (Variant::Circulant, None) => unreachable!("transforms computed above"),
        };
        let bh = tape.slice_cols(e.bias, 0, m)?;
        let bd = tape.slice_cols(e.bias, m, 2 * m)?;
        let hb = tape.matmul_nt(heads, bh)?;
        let db = tape.matmul_nt(deps, bd)?;
        let mut col = tape.add(kernel, hb)?;
        col = tape.add(col, db)?;
        if let Some(s) = e.scalar {
            col = tape.add_row(col, s)?;
        }
        columns.push(col);
    }
    tape.concat_cols(&columns)
}

/// Mean arc cross-entropy for one sentence. `grid` is `P x P` with rows
/// indexing heads, `gold_heads[k]` the head of position `k + 1`.
pub fn arc_loss_on_tape(tape: &mut Tape, grid: NodeId, gold_heads: &[usize]) -> Result<NodeId> {
    let size = tape.value(grid).rows();
    if gold_heads.len() + 1 != size || gold_heads.is_empty() {
        return Err(Error::shape(
            "arc_loss",
            format!("{} gold heads for a grid of size {size}", gold_heads.len()),
        ));
    }
    let by_dep = tape.transpose(grid)?;
    let rows = tape.slice_rows(by_dep, 1, size)?;
    let targets: Vec<Option<usize>> = gold_heads.iter().map(|&h| Some(h)).collect();
    let not_self = |r: usize, c: usize| c != r + 1;
    let total = tape.softmax_xent(rows, &targets, Some(&not_self))?;
    tape.scale(total, 1.0 / gold_heads.len() as f64)
}

/// Mean label cross-entropy over tokens with a known gold label; `None`
/// when no token has one.
pub fn label_loss_on_tape(
    tape: &mut Tape,
    logits: NodeId,
    gold_labels: &[Option<usize>],
) -> Result<Option<NodeId>> {
    let count = gold_labels.iter().filter(|l| l.is_some()).count();
    if count == 0 {
        return Ok(None);
    }
    let total = tape.softmax_xent(logits, gold_labels, None)?;
    Ok(Some(tape.scale(total, 1.0 / count as f64)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rv(values: Vec<f64>) -> RealVector {
        RealVector::new(values)
    }

    fn random_views(len: usize, n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<TokenViews> {
        let mut draw = |k| rv((0..k).map(|_| rng.random_range(-1.0..1.0)).collect());
        (0..len)
            .map(|_| TokenViews {
                arc_head: draw(n),
                arc_dep: draw(n),
                label_head: draw(m),
                label_dep: draw(m),
            })
            .collect()
    }

    fn randomize<P: HasParams>(p: &mut P, rng: &mut ChaCha8Rng) {
        for v in p.params_mut() {
            for x in v.data.iter_mut() {
                *x = rng.random_range(-1.0..1.0);
            }
        }
    }

    #[test]
    fn zero_classifier_scores_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let views = random_views(4, 5, 3, &mut rng);
        for variant in Variant::ALL {
            let arc = ArcClassifier::new(variant, 5, Initializer::Zeros, &mut rng);
            let s = score_arcs(&views, &arc).unwrap();
            assert_eq!(s.size(), 4);
            assert!(s.as_slice().iter().all(|&v| v == 0.0));
            let lab = LabelClassifier::new(variant, 3, 4, Initializer::Zeros, &mut rng);
            assert_eq!(score_labels(&views[0], &views[1], &lab).unwrap().as_slice(), &[0.0; 4]);
        }
    }

    #[test]
    fn identity_dense_kernel_is_dot_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let views = random_views(3, 4, 2, &mut rng);
        let arc = ArcClassifier {
            kernel: KernelWeights::Dense(RealMatrix::identity(4)),
            bias: RealVector::zeros(4),
        };
        let s = score_arcs(&views, &arc).unwrap();
        for h in 0..3 {
            for d in 0..3 {
                let expected = dot(views[h].arc_head.as_slice(), views[d].arc_dep.as_slice());
                assert!((s.get(h, d) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn scalar_bias_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let views = random_views(2, 2, 3, &mut rng);
        let mut lab = LabelClassifier::new(Variant::Dense, 3, 1, Initializer::Zeros, &mut rng);
        lab.entries[0].scalar = Some([5.0]);
        assert_eq!(score_labels(&views[0], &views[1], &lab).unwrap().as_slice(), &[5.0]);
    }

    /// Rebuilds the dense classifier that a structured one stands for.
    fn dense_equivalent(arc: &ArcClassifier) -> (RealMatrix, Vec<f64>) {
        (arc.kernel.to_dense(), arc.bias.as_slice().to_vec())
    }

    #[test]
    fn structured_arcs_match_dense_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for variant in [Variant::Symmetric, Variant::Circulant] {
            for n in [1, 2, 5, 8] {
                let views = random_views(5, n, 2, &mut rng);
                let mut arc = ArcClassifier::new(variant, n, Initializer::Uniform(1.0), &mut rng);
                for b in arc.bias.as_mut_slice() {
                    *b = rng.random_range(-1.0..1.0);
                }
                let s = score_arcs(&views, &arc).unwrap();
                let (w, b) = dense_equivalent(&arc);
                let tol = if variant == Variant::Symmetric { 1e-12 } else { 1e-8 };
                for h in 0..5 {
                    for d in 0..5 {
                        let (hv, dv) = (views[h].arc_head.as_slice(), views[d].arc_dep.as_slice());
                        let expected = crate::kernels::bilinear_dense(hv, &w, dv).unwrap()
                            + dot(hv, &b[..n])
                            + dot(dv, &b[n..]);
                        assert!((s.get(h, d) - expected).abs() < tol, "{variant} n={n}");
                    }
                }
                if variant == Variant::Circulant {
                    let naive = score_arcs_with(&views, &arc, CirculantPath::Naive).unwrap();
                    for (a, b) in s.as_slice().iter().zip(naive.as_slice()) {
                        assert!((a - b).abs() < 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn circulant_labels_match_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let views = random_views(2, 3, 6, &mut rng);
        let lab = LabelClassifier::new(Variant::Circulant, 6, 3, Initializer::Uniform(1.0), &mut rng);
        let got = score_labels(&views[0], &views[1], &lab).unwrap();
        for (l, e) in lab.entries.iter().enumerate() {
            let KernelWeights::Circulant(spectrum) = &e.kernel else { unreachable!() };
            let w = real_from_spectrum(spectrum);
            let expected = circulant_bilinear_naive(
                views[0].label_head.as_slice(),
                &w,
                views[1].label_dep.as_slice(),
            )
            .unwrap();
            assert!((got.as_slice()[l] - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn uniform_scores_give_log_k() {
        // 4 positions: every dependent has 3 admissible heads.
        let s = ScoreMatrix::zeros(4);
        let loss = arc_loss(&s, &[0, 1, 2]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
        let loss = label_loss(&[rv(vec![2.0; 5])], &[Some(3)]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_gold_gives_zero_loss() {
        let s = ScoreMatrix::from_fn(3, |h, d| if (h, d) == (0, 1) || (h, d) == (1, 2) { 1e3 } else { 0.0 });
        assert!(arc_loss(&s, &[0, 1]).unwrap() < 1e-12);
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let views = random_views(3, 4, 2, &mut rng);
        let arc = ArcClassifier::new(Variant::Symmetric, 5, Initializer::Zeros, &mut rng);
        assert!(score_arcs(&views, &arc).is_err());
        let lab = LabelClassifier::new(Variant::Dense, 3, 2, Initializer::Zeros, &mut rng);
        assert!(score_labels(&views[0], &views[1], &lab).is_err());
        assert!(score_arcs(&[], &ArcClassifier::new(Variant::Dense, 4, Initializer::Zeros, &mut rng)).is_err());
    }

    #[test]
    fn tape_scores_match_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for variant in Variant::ALL {
            let (n, m, len) = (6, 4, 5);
            let views = random_views(len, n, m, &mut rng);
            let mut arc = ArcClassifier::new(variant, n, Initializer::Uniform(1.0), &mut rng);
            let mut lab = LabelClassifier::new(variant, m, 3, Initializer::Uniform(1.0), &mut rng);
            if variant != Variant::Circulant {
                randomize(&mut arc, &mut rng);
                randomize(&mut lab, &mut rng);
            }
            let stack = |f: fn(&TokenViews) -> &RealVector| {
                let rows: Vec<Vec<f64>> = views.iter().map(|v| f(v).as_slice().to_vec()).collect();
                RealMatrix::from_rows(&rows).unwrap()
            };
            let mut tape = Tape::new();
            let bound = arc.bind(&mut tape);
            let bound_labels = lab.bind(&mut tape);
            let h = tape.constant(stack(|v| &v.arc_head));
            let d = tape.constant(stack(|v| &v.arc_dep));
            let grid = arc_grid_on_tape(&mut tape, &bound, h, d).unwrap();
            let expected = score_arcs(&views, &arc).unwrap();
            for (a, b) in tape.value(grid).data().iter().zip(expected.as_slice()) {
                assert!((a - b).abs() < 1e-10, "{variant}");
            }

            let lh = tape.constant(stack(|v| &v.label_head));
            let ld = tape.constant(stack(|v| &v.label_dep));
            let logits = label_scores_on_tape(&mut tape, &bound_labels, lh, ld).unwrap();
            for t in 0..len {
                let expected = score_labels(&views[t], &views[t], &lab).unwrap();
                for (a, b) in tape.value(logits).row(t).iter().zip(expected.as_slice()) {
                    assert!((a - b).abs() < 1e-10, "{variant}");
                }
            }

            let gold = [0, 1, 1, 3];
            let loss = arc_loss_on_tape(&mut tape, grid, &gold).unwrap();
            let direct = arc_loss(&expected, &gold).unwrap();
            assert!((tape.value(loss).data()[0] - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn label_loss_skips_unknown() {
        let scores = vec![rv(vec![0.0, 0.0]), rv(vec![1.0, -1.0])];
        let loss = label_loss(&scores, &[Some(0), None]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        assert_eq!(label_loss(&scores, &[None, None]).unwrap(), 0.0);
    }

    #[test]
    fn param_counts_follow_the_variant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (n, m, l) = (7, 5, 3);
        let dense = (
            ArcClassifier::new(Variant::Dense, n, Initializer::Zeros, &mut rng),
            LabelClassifier::new(Variant::Dense, m, l, Initializer::Zeros, &mut rng),
        );
        assert_eq!(dense.0.num_scalars(), n * n + n);
        assert_eq!(dense.1.num_scalars(), l * (m * m + 2 * m + 1));
        let sym = ArcClassifier::new(Variant::Symmetric, n, Initializer::Zeros, &mut rng);
        assert_eq!(sym.num_scalars(), 3 * n);
        let circ = LabelClassifier::new(Variant::Circulant, m, l, Initializer::Zeros, &mut rng);
        assert_eq!(circ.num_scalars(), 4 * m * l);
    }
}
