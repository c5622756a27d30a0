//! Discrete Fourier transforms of arbitrary length.
//!
//! `dft` computes `X[j] = sum_k x[k] exp(-2 pi i j k / n)` without
//! normalization; `idft` carries the `1/n` factor so that `idft(dft(x)) = x`.
//! Plans are cached per thread.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::ComplexVector;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

fn plan(n: usize, direction: Direction) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        match direction {
            Direction::Forward => planner.plan_fft_forward(n),
            Direction::Inverse => planner.plan_fft_inverse(n),
        }
    })
}

/// In-place unnormalized forward transform.
pub fn dft_in_place(buf: &mut [Complex64]) {
    if buf.len() > 1 {
        plan(buf.len(), Direction::Forward).process(buf);
    }
}

/// In-place inverse transform including the `1/n` factor.
pub fn idft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    if n > 1 {
        plan(n, Direction::Inverse).process(buf);
    }
    let scale = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

pub fn dft(x: &ComplexVector) -> Result<ComplexVector> {
    if x.is_empty() {
        return Err(Error::shape("dft", "length must be at least 1"));
    }
    let mut buf = x.to_complex();
    dft_in_place(&mut buf);
    Ok(ComplexVector::from_complex(&buf))
}

pub fn idft(x: &ComplexVector) -> Result<ComplexVector> {
    if x.is_empty() {
        return Err(Error::shape("idft", "length must be at least 1"));
    }
    let mut buf = x.to_complex();
    idft_in_place(&mut buf);
    Ok(ComplexVector::from_complex(&buf))
}

/// Forward transform of a real signal.
pub fn dft_real(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft_in_place(&mut buf);
    buf
}

/// Transforms every row of an interleaved complex matrix (`rows x 2n`).
pub(crate) fn transform_rows_interleaved(data: &mut [f64], row_len: usize, inverse: bool) {
    let n = row_len / 2;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for row in data.chunks_exact_mut(row_len) {
        for (k, c) in buf.iter_mut().enumerate() {
            *c = Complex64::new(row[2 * k], row[2 * k + 1]);
        }
        if inverse {
            idft_in_place(&mut buf);
        } else {
            dft_in_place(&mut buf);
        }
        for (k, c) in buf.iter().enumerate() {
            row[2 * k] = c.re;
            row[2 * k + 1] = c.im;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(n^2) transform straight from the definition.
    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|j| {
                x.iter()
                    .enumerate()
                    .map(|(k, &v)| {
                        let angle = -2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
                        v * Complex64::from_polar(1.0, angle)
                    })
                    .sum()
            })
            .collect()
    }

    fn random_complex(n: usize, rng: &mut ChaCha8Rng) -> ComplexVector {
        let v: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexVector::from_complex(&v)
    }

    #[test]
    fn impulse_gives_flat_spectrum() {
        let x = ComplexVector::from_real(&[1.0, 0.0, 0.0, 0.0]);
        let y = dft(&x).unwrap();
        assert_eq!(y.to_complex(), vec![Complex64::new(1.0, 0.0); 4]);
    }

    #[test]
    fn constant_gives_dc_only() {
        let x = ComplexVector::from_real(&[1.0, 1.0, 1.0, 1.0]);
        let y = dft(&x).unwrap().to_complex();
        assert!((y[0] - Complex64::new(4.0, 0.0)).norm() < 1e-15);
        for c in &y[1..] {
            assert!(c.norm() < 1e-15);
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(dft(&ComplexVector::zeros(0)).is_err());
        assert!(idft(&ComplexVector::zeros(0)).is_err());
    }

    #[test]
    fn matches_definition_for_all_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=64 {
            let x = random_complex(n, &mut rng);
            let fast = dft(&x).unwrap().to_complex();
            let slow = naive_dft(&x.to_complex());
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-9, "n={n}");
            }
        }
    }

    #[test]
    fn inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=64 {
            let x = random_complex(n, &mut rng);
            let back = idft(&dft(&x).unwrap()).unwrap();
            for k in 0..n {
                assert!((back.get(k) - x.get(k)).norm() < 1e-9, "n={n}");
            }
        }
    }

    #[test]
    fn conjugate_symmetric_iff_real() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=64 {
            let real: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let spectrum = dft(&ComplexVector::from_real(&real)).unwrap();
            assert!(spectrum.is_conjugate_symmetric(1e-9), "real input, n={n}");

            // Converse: a signal with a non-zero imaginary part never has a
            // conjugate-symmetric spectrum.
            let mut complex = ComplexVector::from_real(&real);
            complex.as_interleaved_mut()[2 * rng.random_range(0..n) + 1] = 0.5;
            let spectrum = dft(&complex).unwrap();
            assert!(!spectrum.is_conjugate_symmetric(1e-9), "complex input, n={n}");

            // And a conjugate-symmetric spectrum inverts to a real signal.
            let back = idft(&dft(&ComplexVector::from_real(&real)).unwrap()).unwrap();
            for k in 0..n {
                assert!(back.get(k).im.abs() < 1e-9);
            }
        }
    }
}
