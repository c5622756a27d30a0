//! Dense 64-bit arrays.
//!
//! `RealMatrix` is row-major and is the value type carried by every tape
//! node; vectors on the tape are `1 x n` matrices. `ComplexVector` keeps
//! its entries as interleaved `(re, im)` pairs so that complex parameters
//! can be optimized as plain real slices.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RealVector(Vec<f64>);

impl RealVector {
    pub fn new(data: Vec<f64>) -> Self {
        RealVector(data)
    }

    pub fn zeros(n: usize) -> Self {
        RealVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for RealVector {
    fn from(data: Vec<f64>) -> Self {
        RealVector(data)
    }
}

impl From<&[f64]> for RealVector {
    fn from(data: &[f64]) -> Self {
        RealVector(data.to_vec())
    }
}

/// Complex vector stored as interleaved real pairs: `[re0, im0, re1, im1, ...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVector {
    interleaved: Vec<f64>,
}

impl ComplexVector {
    pub fn zeros(n: usize) -> Self {
        ComplexVector {
            interleaved: vec![0.0; 2 * n],
        }
    }

    pub fn from_complex(values: &[Complex64]) -> Self {
        let mut interleaved = Vec::with_capacity(values.len() * 2);
        for c in values {
            interleaved.push(c.re);
            interleaved.push(c.im);
        }
        ComplexVector { interleaved }
    }

    pub fn from_real(values: &[f64]) -> Self {
        let mut interleaved = Vec::with_capacity(values.len() * 2);
        for &v in values {
            interleaved.push(v);
            interleaved.push(0.0);
        }
        ComplexVector { interleaved }
    }

    pub fn from_interleaved(interleaved: Vec<f64>) -> Result<Self> {
        if !interleaved.len().is_multiple_of(2) {
            return Err(Error::shape(
                "complex_vector",
                format!("interleaved length {} is odd", interleaved.len()),
            ));
        }
        Ok(ComplexVector { interleaved })
    }

    /// Number of complex entries.
    pub fn len(&self) -> usize {
        self.interleaved.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.interleaved.is_empty()
    }

    pub fn get(&self, k: usize) -> Complex64 {
        Complex64::new(self.interleaved[2 * k], self.interleaved[2 * k + 1])
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.interleaved
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect()
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.interleaved.iter().step_by(2).copied().collect()
    }

    pub fn as_interleaved(&self) -> &[f64] {
        &self.interleaved
    }

    pub fn as_interleaved_mut(&mut self) -> &mut [f64] {
        &mut self.interleaved
    }

    pub fn scale(&self, factor: f64) -> ComplexVector {
        ComplexVector {
            interleaved: self.interleaved.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.interleaved.iter().all(|v| v.is_finite())
    }

    /// `max_k |x[k] - conj(x[(n - k) mod n])|`; zero exactly when the vector
    /// is the spectrum of a real signal.
    pub fn conjugate_symmetry_residual(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|k| (self.get(k) - self.get((n - k) % n).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        self.conjugate_symmetry_residual() <= tol
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(
                "matrix",
                format!("dimensions must be positive, got {rows}x{cols}"),
            ));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(
                "matrix",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        Ok(RealMatrix { rows, cols, data })
    }

    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        RealMatrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        RealMatrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = RealMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = RealMatrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn row_vector(values: &[f64]) -> Self {
        RealMatrix::from_parts(1, values.len(), values.to_vec())
    }

    pub fn scalar(value: f64) -> Self {
        RealMatrix::from_parts(1, 1, vec![value])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::shape("from_rows", "ragged rows"));
        }
        RealMatrix::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> RealMatrix {
        let mut out = RealMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealMatrix {
        RealMatrix::from_parts(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &RealMatrix, f: impl Fn(f64, f64) -> f64) -> RealMatrix {
        debug_assert_eq!(self.shape(), other.shape());
        RealMatrix::from_parts(
            self.rows,
            self.cols,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add_assign(&mut self, other: &RealMatrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Matrix-vector product `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::shape(
                "matvec",
                format!("{}x{} matrix times vector of length {}", self.rows, self.cols, x.len()),
            ));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a * b` for `a: r x k`, `b: k x c`.
pub fn matmul(a: &RealMatrix, b: &RealMatrix) -> RealMatrix {
    debug_assert_eq!(a.cols, b.rows);
    let (r, k, c) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let out_row = &mut out[i * c..(i + 1) * c];
        for p in 0..k {
            let aip = a.data[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b.data[p * c..(p + 1) * c];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
    RealMatrix::from_parts(r, c, out)
}

/// `a * b^T` for `a: r x k`, `b: c x k`.
pub fn matmul_nt(a: &RealMatrix, b: &RealMatrix) -> RealMatrix {
    debug_assert_eq!(a.cols, b.cols);
    let (r, c) = (a.rows, b.rows);
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        let a_row = a.row(i);
        for j in 0..c {
            out.push(dot(a_row, b.row(j)));
        }
    }
    RealMatrix::from_parts(r, c, out)
}

/// `a^T * b` for `a: k x r`, `b: k x c`.
pub fn matmul_tn(a: &RealMatrix, b: &RealMatrix) -> RealMatrix {
    debug_assert_eq!(a.rows, b.rows);
    let (k, r, c) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; r * c];
    for p in 0..k {
        let a_row = a.row(p);
        let b_row = b.row(p);
        for (i, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[i * c..(i + 1) * c];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    RealMatrix::from_parts(r, c, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_bad_shapes() {
        assert!(RealMatrix::new(0, 2, vec![]).is_err());
        assert!(RealMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(RealMatrix::new(2, 2, vec![1.0; 4]).is_ok());
    }

    #[test]
    fn matmul_variants_agree() {
        let a = RealMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let b = RealMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, -1.0]]).unwrap();
        let ab = matmul(&a, &b);
        assert_eq!(ab.data(), &[7.0, -1.0, 16.0, -1.0]);
        assert_eq!(matmul_nt(&a, &b.transpose()), ab);
        assert_eq!(matmul_tn(&a.transpose(), &b), ab);
    }

    #[test]
    fn conjugate_symmetry_residual_detects_asymmetry() {
        let sym = ComplexVector::from_complex(&[
            Complex64::new(1.0, 0.0),
            Complex64::new(2.0, 3.0),
            Complex64::new(2.0, -3.0),
        ]);
        assert_eq!(sym.conjugate_symmetry_residual(), 0.0);
        let asym = ComplexVector::from_complex(&[
            Complex64::new(1.0, 0.5),
            Complex64::new(2.0, 3.0),
            Complex64::new(2.0, 3.0),
        ]);
        assert!(asym.conjugate_symmetry_residual() > 1.0);
    }
}
