//! Reverse-mode automatic differentiation over matrix-valued nodes.
//!
//! Every primitive records its inputs and enough state to compute its
//! adjoint. Nodes are appended in evaluation order, so the tape is always
//! topologically sorted and `backward` is a single reverse sweep.
//!
//! Complex quantities travel as `rows x 2n` matrices of interleaved
//! `(re, im)` pairs. For a real loss `L` the gradient of a complex node is
//! stored as `dL/dRe + i dL/dIm`, which makes the adjoint of the forward
//! transform `F^H g = n * idft(g)` and that of the inverse `dft(g) / n`.

use crate::error::{Error, Result};
use crate::fft::transform_rows_interleaved;
use crate::tensor::{matmul, matmul_nt, matmul_tn, RealMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    AddCol(NodeId, NodeId),
    Scale(NodeId, f64),
    MulConst(NodeId, RealMatrix),
    MatMul(NodeId, NodeId),
    MatMulNT(NodeId, NodeId),
    Transpose(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Dot(NodeId, NodeId),
    Sum(NodeId),
    RowDot(NodeId, NodeId),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceCols(NodeId, usize),
    SliceRows(NodeId, usize),
    GatherRows(NodeId, Vec<usize>),
    ToComplex(NodeId),
    RealPart(NodeId),
    ImagPart(NodeId),
    Conj(NodeId),
    ComplexMulRow(NodeId, NodeId),
    Dft(NodeId),
    Idft(NodeId),
    SoftmaxXent {
        logits: NodeId,
        targets: Vec<Option<usize>>,
        /// Softmax probabilities over allowed entries, zero elsewhere.
        probs: RealMatrix,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param => "param",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::AddCol(..) => "add_col",
            Op::Scale(..) => "scale",
            Op::MulConst(..) => "mul_const",
            Op::MatMul(..) => "matmul",
            Op::MatMulNT(..) => "matmul_nt",
            Op::Transpose(..) => "transpose",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Dot(..) => "dot",
            Op::Sum(..) => "sum",
            Op::RowDot(..) => "row_dot",
            Op::ConcatCols(..) => "concat_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::SliceRows(..) => "slice_rows",
            Op::GatherRows(..) => "gather_rows",
            Op::ToComplex(..) => "to_complex",
            Op::RealPart(..) => "real_part",
            Op::ImagPart(..) => "imag_part",
            Op::Conj(..) => "conj",
            Op::ComplexMulRow(..) => "complex_mul_row",
            Op::Dft(..) => "dft",
            Op::Idft(..) => "idft",
            Op::SoftmaxXent { .. } => "softmax_xent",
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Constant | Op::Param => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulRow(a, b)
            | Op::AddCol(a, b)
            | Op::MatMul(a, b)
            | Op::MatMulNT(a, b)
            | Op::Dot(a, b)
            | Op::RowDot(a, b)
            | Op::ComplexMulRow(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::MulConst(a, _)
            | Op::Transpose(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Sum(a)
            | Op::SliceCols(a, _)
            | Op::SliceRows(a, _)
            | Op::GatherRows(a, _)
            | Op::ToComplex(a)
            | Op::RealPart(a)
            | Op::ImagPart(a)
            | Op::Conj(a)
            | Op::Dft(a)
            | Op::Idft(a) => vec![*a],
            Op::ConcatCols(xs) | Op::ConcatRows(xs) => xs.clone(),
            Op::SoftmaxXent { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: RealMatrix,
    op: Op,
    needs_grad: bool,
}

/// A recording of primitive operations.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, NodeId)>,
}

/// Gradients of a scalar loss with respect to every node that reaches it.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<RealMatrix>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&RealMatrix> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }
}

fn check_same(op: &'static str, a: &RealMatrix, b: &RealMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn check_complex(op: &'static str, m: &RealMatrix) -> Result<()> {
    if !m.cols().is_multiple_of(2) {
        return Err(Error::shape(
            op,
            format!("complex rows need an even number of columns, got {}", m.cols()),
        ));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &RealMatrix {
        &self.nodes[id.0].value
    }

    /// Name of the primitive that produced `id`.
    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.name()
    }

    /// Input ids of the primitive that produced `id`.
    pub fn inputs(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.inputs()
    }

    fn push(&mut self, value: RealMatrix, op: Op) -> NodeId {
        let needs_grad = match &op {
            Op::Constant => false,
            Op::Param => true,
            _ => op.inputs().iter().any(|i| self.nodes[i.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn check_id(&self, op: &'static str, id: NodeId) -> Result<()> {
        if id.0 >= self.nodes.len() {
            return Err(Error::shape(op, format!("node {} is not on the tape", id.0)));
        }
        Ok(())
    }

    pub fn constant(&mut self, value: RealMatrix) -> NodeId {
        self.push(value, Op::Constant)
    }

    /// Registers a trainable leaf. Parameter gradients are reported in
    /// registration order by [`Tape::param_gradients`].
    pub fn param(&mut self, name: impl Into<String>, value: RealMatrix) -> NodeId {
        let id = self.push(value, Op::Param);
        self.params.push((name.into(), id));
        id
    }

    pub fn params(&self) -> &[(String, NodeId)] {
        &self.params
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_id("add", a)?;
        self.check_id("add", b)?;
        check_same("add", self.value(a), self.value(b))?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_id("sub", a)?;
        self.check_id("sub", b)?;
        check_same("sub", self.value(a), self.value(b))?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_id("mul", a)?;
        self.check_id("mul", b)?;
        check_same("mul", self.value(a), self.value(b))?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Adds the `1 x c` row `row` to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        self.check_id("add_row", a)?;
        self.check_id("add_row", row)?;
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(Error::shape(
                "add_row",
                format!("{:?} plus row {:?}", av.shape(), rv.shape()),
            ));
        }
        let mut v = av.clone();
        for r in 0..v.rows() {
            for (x, b) in v.row_mut(r).iter_mut().zip(rv.data()) {
                *x += b;
            }
        }
        Ok(self.push(v, Op::AddRow(a, row)))
    }

    /// Multiplies every row of `a` elementwise by the `1 x c` row `row`.
    pub fn mul_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        self.check_id("mul_row", a)?;
        self.check_id("mul_row", row)?;
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(Error::shape(
                "mul_row",
                format!("{:?} times row {:?}", av.shape(), rv.shape()),
            ));
        }
        let mut v = av.clone();
        for r in 0..v.rows() {
            for (x, w) in v.row_mut(r).iter_mut().zip(rv.data()) {
                *x *= w;
            }
        }
        Ok(self.push(v, Op::MulRow(a, row)))
    }

    /// Adds the `r x 1` column `col` to every column of `a`.
    pub fn add_col(&mut self, a: NodeId, col: NodeId) -> Result<NodeId> {
        self.check_id("add_col", a)?;
        self.check_id("add_col", col)?;
        let (av, cv) = (self.value(a), self.value(col));
        if cv.cols() != 1 || cv.rows() != av.rows() {
            return Err(Error::shape(
                "add_col",
                format!("{:?} plus column {:?}", av.shape(), cv.shape()),
            ));
        }
        let mut v = av.clone();
        for r in 0..v.rows() {
            let b = cv.data()[r];
            for x in v.row_mut(r) {
                *x += b;
            }
        }
        Ok(self.push(v, Op::AddCol(a, col)))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.check_id("scale", a)?;
        let v = self.value(a).map(|x| x * factor);
        Ok(self.push(v, Op::Scale(a, factor)))
    }

    /// Elementwise product with a constant (e.g. a dropout mask).
    pub fn mul_const(&mut self, a: NodeId, mask: RealMatrix) -> Result<NodeId> {
        self.check_id("mul_const", a)?;
        check_same("mul_const", self.value(a), &mask)?;
        let v = self.value(a).zip_map(&mask, |x, m| x * m);
        Ok(self.push(v, Op::MulConst(a, mask)))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_id("matmul", a)?;
        self.check_id("matmul", b)?;
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(Error::shape(
                "matmul",
                format!("{:?} times {:?}", av.shape(), bv.shape()),
            ));
        }
        let v = matmul(av, bv);
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// Matrix-vector product where the vector is a `k x 1` column.
    pub fn matvec(&mut self, m: NodeId, x: NodeId) -> Result<NodeId> {
        self.check_id("matvec", x)?;
        if self.value(x).cols() != 1 {
            return Err(Error::shape(
                "matvec",
                format!("expected a column vector, got {:?}", self.value(x).shape()),
            ));
        }
        self.matmul(m, x)
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_id("matmul_nt", a)?;
        self.check_id("matmul_nt", b)?;
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(Error::shape(
                "matmul_nt",
                format!("{:?} times transpose of {:?}", av.shape(), bv.shape()),
            ));
        }
        let v = matmul_nt(av, bv);
        Ok(self.push(v, Op::MatMulNT(a, b)))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_id("transpose", a)?;
        let v = self.value(a).transpose();
        Ok(self.push(v, Op::Transpose(a)))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_id("relu", a)?;
        let v = self.value(a).map(|x| x.max(0.0));
        Ok(self.push(v, Op::Relu(a)))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_id("sigmoid", a)?;
        let v = self.value(a).map(sigmoid);
        Ok(self.push(v, Op::Sigmoid(a)))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_id("tanh", a)?;
        let v = self.value(a).map(f64::tanh);
        Ok(self.push(v, Op::Tanh(a)))
    }

    /// Inner product of two equally shaped nodes; yields a `1 x 1` node.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_id("dot", a)?;
        self.check_id("dot", b)?;
        check_same("dot", self.value(a), self.value(b))?;
        let s = crate::tensor::dot(self.value(a).data(), self.value(b).data());
        Ok(self.push(RealMatrix::scalar(s), Op::Dot(a, b)))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_id("sum", a)?;
        let s = self.value(a).sum();
        Ok(self.push(RealMatrix::scalar(s), Op::Sum(a)))
    }

    /// Row-wise inner products of two `r x c` nodes; yields `r x 1`.
    pub fn row_dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_id("row_dot", a)?;
        self.check_id("row_dot", b)?;
        let (av, bv) = (self.value(a), self.value(b));
        check_same("row_dot", av, bv)?;
        let data = (0..av.rows())
            .map(|r| crate::tensor::dot(av.row(r), bv.row(r)))
            .collect();
        let v = RealMatrix::from_parts(av.rows(), 1, data);
        Ok(self.push(v, Op::RowDot(a, b)))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::shape("concat_cols", "nothing to concatenate"));
        }
        for &p in parts {
            self.check_id("concat_cols", p)?;
        }
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let v = RealMatrix::from_parts(rows, cols, data);
        Ok(self.push(v, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::shape("concat_rows", "nothing to concatenate"));
        }
        for &p in parts {
            self.check_id("concat_rows", p)?;
        }
        let cols = self.value(parts[0]).cols();
        if parts.iter().any(|&p| self.value(p).cols() != cols) {
            return Err(Error::shape("concat_rows", "column counts differ"));
        }
        let rows: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let v = RealMatrix::from_parts(rows, cols, data);
        Ok(self.push(v, Op::ConcatRows(parts.to_vec())))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        self.check_id("slice_cols", a)?;
        let av = self.value(a);
        if start >= end || end > av.cols() {
            return Err(Error::shape(
                "slice_cols",
                format!("range {start}..{end} of {} columns", av.cols()),
            ));
        }
        let mut data = Vec::with_capacity(av.rows() * (end - start));
        for r in 0..av.rows() {
            data.extend_from_slice(&av.row(r)[start..end]);
        }
        let v = RealMatrix::from_parts(av.rows(), end - start, data);
        Ok(self.push(v, Op::SliceCols(a, start)))
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        self.check_id("slice_rows", a)?;
        let av = self.value(a);
        if start >= end || end > av.rows() {
            return Err(Error::shape(
                "slice_rows",
                format!("range {start}..{end} of {} rows", av.rows()),
            ));
        }
        let c = av.cols();
        let v = RealMatrix::from_parts(end - start, c, av.data()[start * c..end * c].to_vec());
        Ok(self.push(v, Op::SliceRows(a, start)))
    }

    /// Stacks the selected rows of `a` (rows may repeat).
    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId> {
        self.check_id("gather_rows", a)?;
        let av = self.value(a);
        if indices.is_empty() {
            return Err(Error::shape("gather_rows", "no rows selected"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= av.rows()) {
            return Err(Error::shape(
                "gather_rows",
                format!("row {bad} out of range for {} rows", av.rows()),
            ));
        }
        let mut data = Vec::with_capacity(indices.len() * av.cols());
        for &i in indices {
            data.extend_from_slice(av.row(i));
        }
        let v = RealMatrix::from_parts(indices.len(), av.cols(), data);
        Ok(self.push(v, Op::GatherRows(a, indices.to_vec())))
    }

    /// Embeds a real `r x n` node as complex `r x 2n` with zero imaginary part.
    pub fn to_complex(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_id("to_complex", a)?;
        let av = self.value(a);
        let mut data = Vec::with_capacity(av.len() * 2);
        for &x in av.data() {
            data.push(x);
            data.push(0.0);
        }
        let v = RealMatrix::from_parts(av.rows(), av.cols() * 2, data);
        Ok(self.push(v, Op::ToComplex(a)))
    }

    pub fn real_part(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_id("real_part", a)?;
        check_complex("real_part", self.value(a))?;
        let av = self.value(a);
        let data = av.data().iter().step_by(2).copied().collect();
        let v = RealMatrix::from_parts(av.rows(), av.cols() / 2, data);
        Ok(self.push(v, Op::RealPart(a)))
    }

    pub fn imag_part(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_id("imag_part", a)?;
        check_complex("imag_part", self.value(a))?;
        let av = self.value(a);
        let data = av.data().iter().skip(1).step_by(2).copied().collect();
        let v = RealMatrix::from_parts(av.rows(), av.cols() / 2, data);
        Ok(self.push(v, Op::ImagPart(a)))
    }

    pub fn conj(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_id("conj", a)?;
        check_complex("conj", self.value(a))?;
        let mut v = self.value(a).clone();
        for pair in v.data_mut().chunks_exact_mut(2) {
            pair[1] = -pair[1];
        }
        Ok(self.push(v, Op::Conj(a)))
    }

    /// Complex elementwise product of every row of `a` with the row `w`.
    pub fn complex_mul_row(&mut self, a: NodeId, w: NodeId) -> Result<NodeId> {
        self.check_id("complex_mul_row", a)?;
        self.check_id("complex_mul_row", w)?;
        let (av, wv) = (self.value(a), self.value(w));
        check_complex("complex_mul_row", av)?;
        if wv.rows() != 1 || wv.cols() != av.cols() {
            return Err(Error::shape(
                "complex_mul_row",
                format!("{:?} times row {:?}", av.shape(), wv.shape()),
            ));
        }
        let mut v = av.clone();
        let wd = wv.data();
        for r in 0..v.rows() {
            for (k, pair) in v.row_mut(r).chunks_exact_mut(2).enumerate() {
                let (xr, xi) = (pair[0], pair[1]);
                let (wr, wi) = (wd[2 * k], wd[2 * k + 1]);
                pair[0] = xr * wr - xi * wi;
                pair[1] = xr * wi + xi * wr;
            }
        }
        Ok(self.push(v, Op::ComplexMulRow(a, w)))
    }

    /// Row-wise forward DFT of an interleaved complex node.
    pub fn dft(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_id("dft", a)?;
        check_complex("dft", self.value(a))?;
        let mut v = self.value(a).clone();
        let c = v.cols();
        transform_rows_interleaved(v.data_mut(), c, false);
        Ok(self.push(v, Op::Dft(a)))
    }

    /// Row-wise inverse DFT (with `1/n`) of an interleaved complex node.
    pub fn idft(&mut self, a: NodeId) -> Result<NodeId> {
        self.check_id("idft", a)?;
        check_complex("idft", self.value(a))?;
        let mut v = self.value(a).clone();
        let c = v.cols();
        transform_rows_interleaved(v.data_mut(), c, true);
        Ok(self.push(v, Op::Idft(a)))
    }

    /// Summed softmax cross-entropy over the rows of `logits`.
    ///
    /// Row `r` contributes `-log softmax(row)[targets[r]]` where the softmax
    /// only ranges over entries with `allowed[r][c]`; rows whose target is
    /// `None` contribute nothing.
    pub fn softmax_xent(
        &mut self,
        logits: NodeId,
        targets: &[Option<usize>],
        allowed: Option<&dyn Fn(usize, usize) -> bool>,
    ) -> Result<NodeId> {
        self.check_id("softmax_xent", logits)?;
        let lv = self.value(logits);
        if targets.len() != lv.rows() {
            return Err(Error::shape(
                "softmax_xent",
                format!("{} targets for {} rows", targets.len(), lv.rows()),
            ));
        }
        let allow = |r: usize, c: usize| allowed.is_none_or(|f| f(r, c));
        let mut probs = RealMatrix::zeros(lv.rows(), lv.cols());
        let mut total = 0.0;
        for (r, target) in targets.iter().enumerate() {
            let Some(t) = *target else { continue };
            if t >= lv.cols() || !allow(r, t) {
                return Err(Error::shape(
                    "softmax_xent",
                    format!("target {t} of row {r} is out of range or masked"),
                ));
            }
            let row = lv.row(r);
            let max = (0..lv.cols())
                .filter(|&c| allow(r, c))
                .map(|c| row[c])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for c in 0..lv.cols() {
                if allow(r, c) {
                    let e = (row[c] - max).exp();
                    probs.set(r, c, e);
                    z += e;
                }
            }
            for p in probs.row_mut(r) {
                *p /= z;
            }
            total += max + z.ln() - row[t];
        }
        let v = RealMatrix::scalar(total);
        Ok(self.push(
            v,
            Op::SoftmaxXent {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        self.check_id("backward", loss)?;
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::NotScalar {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }
        let mut grads: Vec<Option<RealMatrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(RealMatrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, op: &Op, out: &RealMatrix, g: &RealMatrix, grads: &mut [Option<RealMatrix>]) {
        let mut acc = |id: NodeId, contribution: RealMatrix| {
            if !self.nodes[id.0].needs_grad {
                return;
            }
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&contribution),
                slot @ None => *slot = Some(contribution),
            }
        };
        let val = |id: NodeId| &self.nodes[id.0].value;

        match op {
            Op::Constant | Op::Param => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(val(*b), |x, y| x * y));
                acc(*b, g.zip_map(val(*a), |x, y| x * y));
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                let mut rg = RealMatrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (s, x) in rg.data_mut().iter_mut().zip(g.row(r)) {
                        *s += x;
                    }
                }
                acc(*row, rg);
            }
            Op::MulRow(a, row) => {
                let (av, rv) = (val(*a), val(*row));
                let mut ga = g.clone();
                let mut rg = RealMatrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (k, x) in ga.row_mut(r).iter_mut().enumerate() {
                        rg.data_mut()[k] += *x * av.get(r, k);
                        *x *= rv.data()[k];
                    }
                }
                acc(*a, ga);
                acc(*row, rg);
            }
            Op::AddCol(a, col) => {
                acc(*a, g.clone());
                let data = (0..g.rows()).map(|r| g.row(r).iter().sum()).collect();
                acc(*col, RealMatrix::from_parts(g.rows(), 1, data));
            }
            Op::Scale(a, f) => acc(*a, g.map(|x| x * f)),
            Op::MulConst(a, mask) => acc(*a, g.zip_map(mask, |x, m| x * m)),
            Op::MatMul(a, b) => {
                acc(*a, matmul_nt(g, val(*b)));
                acc(*b, matmul_tn(val(*a), g));
            }
            Op::MatMulNT(a, b) => {
                acc(*a, matmul(g, val(*b)));
                acc(*b, matmul_tn(g, val(*a)));
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Relu(a) => acc(*a, g.zip_map(val(*a), |x, v| if v > 0.0 { x } else { 0.0 })),
            Op::Sigmoid(a) => acc(*a, g.zip_map(out, |x, s| x * s * (1.0 - s))),
            Op::Tanh(a) => acc(*a, g.zip_map(out, |x, t| x * (1.0 - t * t))),
            Op::Dot(a, b) => {
                let s = g.data()[0];
                acc(*a, val(*b).map(|y| y * s));
                acc(*b, val(*a).map(|y| y * s));
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, RealMatrix::filled(r, c, g.data()[0]));
            }
            Op::RowDot(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let mut ga = bv.clone();
                let mut gb = av.clone();
                for r in 0..av.rows() {
                    let s = g.data()[r];
                    ga.row_mut(r).iter_mut().for_each(|x| *x *= s);
                    gb.row_mut(r).iter_mut().for_each(|x| *x *= s);
                }
                acc(*a, ga);
                acc(*b, gb);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let c = val(p).cols();
                    let mut data = Vec::with_capacity(g.rows() * c);
                    for r in 0..g.rows() {
                        data.extend_from_slice(&g.row(r)[offset..offset + c]);
                    }
                    acc(p, RealMatrix::from_parts(g.rows(), c, data));
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                let cols = g.cols();
                for &p in parts {
                    let r = val(p).rows();
                    let data = g.data()[offset * cols..(offset + r) * cols].to_vec();
                    acc(p, RealMatrix::from_parts(r, cols, data));
                    offset += r;
                }
            }
            Op::SliceCols(a, start) => {
                let av = val(*a);
                let mut ga = RealMatrix::zeros(av.rows(), av.cols());
                for r in 0..g.rows() {
                    ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(*a, ga);
            }
            Op::SliceRows(a, start) => {
                let av = val(*a);
                let mut ga = RealMatrix::zeros(av.rows(), av.cols());
                let c = av.cols();
                ga.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                acc(*a, ga);
            }
            Op::GatherRows(a, indices) => {
                let av = val(*a);
                let mut ga = RealMatrix::zeros(av.rows(), av.cols());
                for (r, &i) in indices.iter().enumerate() {
                    for (s, x) in ga.row_mut(i).iter_mut().zip(g.row(r)) {
                        *s += x;
                    }
                }
                acc(*a, ga);
            }
            Op::ToComplex(a) => {
                let data = g.data().iter().step_by(2).copied().collect();
                acc(*a, RealMatrix::from_parts(g.rows(), g.cols() / 2, data));
            }
            Op::RealPart(a) => {
                let mut data = Vec::with_capacity(g.len() * 2);
                for &x in g.data() {
                    data.push(x);
                    data.push(0.0);
                }
                acc(*a, RealMatrix::from_parts(g.rows(), g.cols() * 2, data));
            }
            Op::ImagPart(a) => {
                let mut data = Vec::with_capacity(g.len() * 2);
                for &x in g.data() {
                    data.push(0.0);
                    data.push(x);
                }
                acc(*a, RealMatrix::from_parts(g.rows(), g.cols() * 2, data));
            }
            Op::Conj(a) => {
                let mut ga = g.clone();
                for pair in ga.data_mut().chunks_exact_mut(2) {
                    pair[1] = -pair[1];
                }
                acc(*a, ga);
            }
            Op::ComplexMulRow(a, w) => {
                let (av, wv) = (val(*a), val(*w));
                let wd = wv.data();
                // d/dx = conj(w) g, d/dw = sum_rows conj(x) g
                let mut ga = g.clone();
                let mut gw = RealMatrix::zeros(1, wv.cols());
                for r in 0..g.rows() {
                    let xr_row = av.row(r);
                    let g_row = g.row(r);
                    for k in 0..wv.cols() / 2 {
                        let (gr, gi) = (g_row[2 * k], g_row[2 * k + 1]);
                        let (wr, wi) = (wd[2 * k], wd[2 * k + 1]);
                        let (xr, xi) = (xr_row[2 * k], xr_row[2 * k + 1]);
                        let ga_row = ga.row_mut(r);
                        ga_row[2 * k] = wr * gr + wi * gi;
                        ga_row[2 * k + 1] = wr * gi - wi * gr;
                        let gwd = gw.data_mut();
                        gwd[2 * k] += xr * gr + xi * gi;
                        gwd[2 * k + 1] += xr * gi - xi * gr;
                    }
                }
                acc(*a, ga);
                acc(*w, gw);
            }
            Op::Dft(a) => {
                // F^H g = n * idft(g)
                let mut ga = g.clone();
                let c = ga.cols();
                transform_rows_interleaved(ga.data_mut(), c, true);
                let n = (c / 2) as f64;
                ga.data_mut().iter_mut().for_each(|x| *x *= n);
                acc(*a, ga);
            }
            Op::Idft(a) => {
                // (F^H / n)^H g = dft(g) / n
                let mut ga = g.clone();
                let c = ga.cols();
                transform_rows_interleaved(ga.data_mut(), c, false);
                let n = (c / 2) as f64;
                ga.data_mut().iter_mut().for_each(|x| *x /= n);
                acc(*a, ga);
            }
            Op::SoftmaxXent {
                logits,
                targets,
                probs,
            } => {
                let s = g.data()[0];
                let mut gl = probs.clone();
                for (r, target) in targets.iter().enumerate() {
                    match target {
                        Some(t) => {
                            let row = gl.row_mut(r);
                            row[*t] -= 1.0;
                            row.iter_mut().for_each(|x| *x *= s);
                        }
                        None => gl.row_mut(r).fill(0.0),
                    }
                }
                acc(*logits, gl);
            }
        }
    }

    /// Gradients of every registered parameter, in registration order.
    /// Parameters the loss does not reach get a zero gradient of their shape.
    pub fn param_gradients(&self, grads: &Gradients) -> Vec<(String, RealMatrix)> {
        self.params
            .iter()
            .map(|(name, id)| {
                let g = grads.get(*id).cloned().unwrap_or_else(|| {
                    let (r, c) = self.value(*id).shape();
                    RealMatrix::zeros(r, c)
                });
                (name.clone(), g)
            })
            .collect()
    }
}
