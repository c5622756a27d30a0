//! Bilinear forms `v_i^T W v_j` under three parameterizations of `W`.
//!
//! * dense: `W` is an arbitrary `n x n` matrix (`n^2` weights);
//! * symmetric: `W = O diag(w) O^T` with `O` absorbed into the inputs, so
//!   the form reduces to the triple inner product `sum_k a_k w_k b_k`
//!   (`n` weights, `O(n)` time);
//! * circulant: `W = C(w)`, evaluated through the DFT as
//!   `Re(sum_k conj(F v_i)_k w'_k (F v_j)_k)` with `w' = F w / n`
//!   (`O(n log n)` time). The spectrum `w'` is stored and trained directly
//!   as `2n` reals; it is conjugate-symmetric whenever `w` is real.
//!
//! The orthogonal and unitary bases are never materialized. The encoder's
//! outputs are taken to live in the diagonalizing basis already, and one
//! output space is shared by every label kernel.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{dft_in_place, dft_real, idft_in_place};
use crate::tensor::{dot, ComplexVector, RealMatrix, RealVector};

/// Tolerance for the conjugate-symmetry check on circulant spectra.
pub const CONJUGATE_SYMMETRY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Dense,
    Symmetric,
    Circulant,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Dense, Variant::Symmetric, Variant::Circulant];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Dense => "dense",
            Variant::Symmetric => "symmetric",
            Variant::Circulant => "circulant",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Variant::Dense),
            "symmetric" => Ok(Variant::Symmetric),
            "circulant" => Ok(Variant::Circulant),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected dense, symmetric or circulant)"
            ))),
        }
    }
}

/// How freshly created weights are drawn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Initializer {
    Zeros,
    /// Independent draws from `U(-bound, bound)`.
    Uniform(f64),
}

impl Initializer {
    pub fn draw<R: Rng + ?Sized>(self, n: usize, rng: &mut R) -> Vec<f64> {
        match self {
            Initializer::Zeros => vec![0.0; n],
            Initializer::Uniform(bound) if bound > 0.0 => {
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            }
            Initializer::Uniform(_) => vec![0.0; n],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelWeights {
    Dense(RealMatrix),
    Symmetric(RealVector),
    /// Spectrum `w' = F w / n`.
    Circulant(ComplexVector),
}

impl KernelWeights {
    pub fn new<R: Rng + ?Sized>(variant: Variant, n: usize, init: Initializer, rng: &mut R) -> Self {
        match variant {
            Variant::Dense => KernelWeights::Dense(RealMatrix::from_parts(n, n, init.draw(n * n, rng))),
            Variant::Symmetric => KernelWeights::Symmetric(RealVector::new(init.draw(n, rng))),
            Variant::Circulant => KernelWeights::Circulant(spectrum_init(n, init, rng)),
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            KernelWeights::Dense(_) => Variant::Dense,
            KernelWeights::Symmetric(_) => Variant::Symmetric,
            KernelWeights::Circulant(_) => Variant::Circulant,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            KernelWeights::Dense(w) => w.rows(),
            KernelWeights::Symmetric(w) => w.len(),
            KernelWeights::Circulant(w) => w.len(),
        }
    }

    /// Storage shape as `(rows, cols)` of reals.
    pub fn storage_shape(&self) -> (usize, usize) {
        match self {
            KernelWeights::Dense(w) => w.shape(),
            KernelWeights::Symmetric(w) => (1, w.len()),
            KernelWeights::Circulant(w) => (1, 2 * w.len()),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            KernelWeights::Dense(w) => w.data(),
            KernelWeights::Symmetric(w) => w.as_slice(),
            KernelWeights::Circulant(w) => w.as_interleaved(),
        }
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        match self {
            KernelWeights::Dense(w) => w.data_mut(),
            KernelWeights::Symmetric(w) => w.as_mut_slice(),
            KernelWeights::Circulant(w) => w.as_interleaved_mut(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }

    /// The equivalent dense matrix: `W`, `diag(w)` or `C(n * idft(w'))`.
    ///
    /// For a circulant spectrum that has drifted from conjugate symmetry
    /// only the real part of the recovered signal is kept.
    pub fn to_dense(&self) -> RealMatrix {
        match self {
            KernelWeights::Dense(w) => w.clone(),
            KernelWeights::Symmetric(w) => RealMatrix::diag(w.as_slice()),
            KernelWeights::Circulant(w) => circulant_from_vector(&real_from_spectrum(w)),
        }
    }

    /// `v_i^T W v_j` through the variant's own kernel.
    pub fn bilinear(&self, vi: &[f64], vj: &[f64]) -> Result<f64> {
        match self {
            KernelWeights::Dense(w) => bilinear_dense(vi, w, vj),
            KernelWeights::Symmetric(w) => triple_inner_product(vi, w.as_slice(), vj),
            KernelWeights::Circulant(w) => circulant_bilinear_fft(vi, w, vj),
        }
    }
}

fn check_dims(op: &'static str, dims: &[usize]) -> Result<()> {
    if dims.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::shape(op, format!("dimensions {dims:?} differ")));
    }
    Ok(())
}

/// `v_i^T W v_j`.
pub fn bilinear_dense(vi: &[f64], w: &RealMatrix, vj: &[f64]) -> Result<f64> {
    if vi.len() != w.rows() || vj.len() != w.cols() {
        return Err(Error::shape(
            "bilinear_dense",
            format!(
                "vectors of length {} and {} against a {}x{} matrix",
                vi.len(),
                vj.len(),
                w.rows(),
                w.cols()
            ),
        ));
    }
    Ok(vi
        .iter()
        .enumerate()
        .map(|(r, &a)| a * dot(w.row(r), vj))
        .sum())
}

/// `<a, w, b> = sum_k a_k w_k b_k`.
pub fn triple_inner_product(a: &[f64], w: &[f64], b: &[f64]) -> Result<f64> {
    check_dims("triple_inner_product", &[a.len(), w.len(), b.len()])?;
    // a_k * b_k first so that swapping `a` and `b` gives a bit-identical sum.
    Ok(a.iter().zip(b).zip(w).map(|((x, z), y)| (x * z) * y).sum())
}

/// `C(w)[i][j] = w[(i - j) mod n]`: the first column is `w` and each
/// following column is the previous one rotated down by one.
pub fn circulant_from_vector(w: &[f64]) -> RealMatrix {
    let n = w.len();
    let mut out = RealMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, w[(i + n - j) % n]);
        }
    }
    out
}

/// `v_i^T C(w) v_j` by explicit `O(n^2)` evaluation. Reference path.
pub fn circulant_bilinear_naive(vi: &[f64], w: &[f64], vj: &[f64]) -> Result<f64> {
    check_dims("circulant_bilinear_naive", &[vi.len(), w.len(), vj.len()])?;
    let n = w.len();
    let mut total = 0.0;
    for (i, &a) in vi.iter().enumerate() {
        let mut row = 0.0;
        for (j, &b) in vj.iter().enumerate() {
            row += w[(i + n - j) % n] * b;
        }
        total += a * row;
    }
    Ok(total)
}

/// `Re(<conj(F v_i), w', F v_j>)`, equal to `v_i^T C(n idft(w')) v_j`.
pub fn circulant_bilinear_fft(vi: &[f64], spectrum: &ComplexVector, vj: &[f64]) -> Result<f64> {
    check_dims("circulant_bilinear_fft", &[vi.len(), spectrum.len(), vj.len()])?;
    let residual = spectrum.conjugate_symmetry_residual();
    if residual > CONJUGATE_SYMMETRY_TOL {
        log::warn!("circulant spectrum is not conjugate-symmetric (residual {residual:.3e})");
    }
    let fi = dft_real(vi);
    let fj = dft_real(vj);
    Ok(hermitian_triple(&fi, spectrum.as_interleaved(), &fj))
}

/// `Re(sum_k conj(fi_k) w_k fj_k)` for precomputed transforms; `w` interleaved.
pub(crate) fn hermitian_triple(fi: &[Complex64], w: &[f64], fj: &[Complex64]) -> f64 {
    let mut total = 0.0;
    for k in 0..fi.len() {
        let wk = Complex64::new(w[2 * k], w[2 * k + 1]);
        total += (fi[k].conj() * wk * fj[k]).re;
    }
    total
}

/// The spectrum `F w / n` of a real vector.
pub fn spectrum_from_real(w: &[f64]) -> ComplexVector {
    let n = w.len() as f64;
    let mut buf: Vec<Complex64> = w.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft_in_place(&mut buf);
    for v in buf.iter_mut() {
        *v /= n;
    }
    ComplexVector::from_complex(&buf)
}

/// Real part of `n * idft(w')`, the circulant's defining vector.
pub fn real_from_spectrum(spectrum: &ComplexVector) -> Vec<f64> {
    let n = spectrum.len() as f64;
    let mut buf = spectrum.to_complex();
    idft_in_place(&mut buf);
    buf.iter().map(|c| c.re * n).collect()
}

/// Draws a real vector from `init` and returns its spectrum `F w / n`,
/// which is conjugate-symmetric by construction.
pub fn spectrum_init<R: Rng + ?Sized>(n: usize, init: Initializer, rng: &mut R) -> ComplexVector {
    spectrum_from_real(&init.draw(n, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn dense_examples() {
        let id = RealMatrix::identity(2);
        assert_eq!(bilinear_dense(&[1.0, 0.0], &id, &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(bilinear_dense(&[1.0, 2.0], &id, &[3.0, 4.0]).unwrap(), 11.0);
        let w = RealMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(bilinear_dense(&[1.0, 2.0], &w, &[5.0, 6.0]).unwrap(), 95.0);
        assert!(bilinear_dense(&[1.0], &w, &[5.0, 6.0]).is_err());
    }

    #[test]
    fn triple_examples() {
        assert_eq!(triple_inner_product(&[1.0; 3], &[1.0; 3], &[1.0; 3]).unwrap(), 3.0);
        assert_eq!(
            triple_inner_product(&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]).unwrap(),
            63.0
        );
        assert!(triple_inner_product(&[1.0], &[3.0, 4.0], &[5.0, 6.0]).is_err());
    }

    #[test]
    fn circulant_layout() {
        let c = circulant_from_vector(&[1.0, 2.0, 3.0]);
        let expected =
            RealMatrix::from_rows(&[vec![1.0, 3.0, 2.0], vec![2.0, 1.0, 3.0], vec![3.0, 2.0, 1.0]])
                .unwrap();
        assert_eq!(c, expected);
        assert_eq!(circulant_from_vector(&[4.5]).data(), &[4.5]);
        assert_eq!(circulant_from_vector(&[1.0, 0.0, 0.0, 0.0]), RealMatrix::identity(4));
    }

    #[test]
    fn naive_circulant_examples() {
        let v = circulant_bilinear_naive(&[1.0, 0.0, 0.0], &[1.0, 2.0, 3.0], &[0.0, 1.0, 0.0]);
        assert_eq!(v.unwrap(), 3.0);
        let a = [0.3, -1.0, 2.0];
        let b = [1.5, 0.5, -0.25];
        let impulse = circulant_bilinear_naive(&a, &[1.0, 0.0, 0.0], &b).unwrap();
        assert_eq!(impulse, dot(&a, &b));
        assert!(circulant_bilinear_naive(&a, &[1.0], &b).is_err());
    }

    #[test]
    fn flat_spectrum_is_identity() {
        let n = 5;
        let spectrum = ComplexVector::from_real(&vec![1.0 / n as f64; n]);
        let a = [0.3, -1.0, 2.0, 0.7, 1.1];
        let b = [1.5, 0.5, -0.25, 2.0, -0.6];
        let v = circulant_bilinear_fft(&a, &spectrum, &b).unwrap();
        assert!((v - dot(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn fft_matches_naive_n8() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let (a, w, b) = (random(8, &mut rng), random(8, &mut rng), random(8, &mut rng));
            let naive = circulant_bilinear_naive(&a, &w, &b).unwrap();
            let fast = circulant_bilinear_fft(&a, &spectrum_from_real(&w), &b).unwrap();
            assert!((naive - fast).abs() < 1e-9);
        }
    }

    #[test]
    fn spectrum_init_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(spectrum_init(6, Initializer::Zeros, &mut rng)
            .as_interleaved()
            .iter()
            .all(|&v| v == 0.0));
        for n in 1..=33 {
            let mut draw_rng = ChaCha8Rng::seed_from_u64(n as u64);
            let drawn = Initializer::Uniform(0.5).draw(n, &mut draw_rng);
            let mut init_rng = ChaCha8Rng::seed_from_u64(n as u64);
            let spectrum = spectrum_init(n, Initializer::Uniform(0.5), &mut init_rng);
            assert!(spectrum.conjugate_symmetry_residual() < 1e-12, "n={n}");
            for (x, y) in real_from_spectrum(&spectrum).iter().zip(&drawn) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn circulant_can_be_asymmetric() {
        let mut w = vec![0.0; 6];
        w[1] = 1.0;
        let spectrum = spectrum_from_real(&w);
        let a = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let b = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let ab = circulant_bilinear_fft(&a, &spectrum, &b).unwrap();
        let ba = circulant_bilinear_fft(&b, &spectrum, &a).unwrap();
        assert!((ab - ba).abs() > 0.5, "ab={ab} ba={ba}");
    }

    #[test]
    fn variant_round_trips_through_strings() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("toeplitz".parse::<Variant>().is_err());
    }
}
