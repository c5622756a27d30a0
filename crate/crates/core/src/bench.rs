//! Timing of batched arc-score grids on random views, so that only the
//! classifier's cost is measured.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::TokenViews;
use crate::error::{Error, Result};
use crate::kernels::{Initializer, Variant};
use crate::scorers::{score_arcs_with, ArcClassifier, CirculantPath};
use crate::tensor::RealVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BenchKernel {
    Dense,
    Symmetric,
    Circulant,
    /// Circulant weights evaluated as an explicit `n x n` matrix.
    CirculantNaive,
}

impl BenchKernel {
    pub const ALL: [BenchKernel; 4] = [
        BenchKernel::Dense,
        BenchKernel::Symmetric,
        BenchKernel::Circulant,
        BenchKernel::CirculantNaive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchKernel::Dense => "dense",
            BenchKernel::Symmetric => "symmetric",
            BenchKernel::Circulant => "circulant",
            BenchKernel::CirculantNaive => "circulant-naive",
        }
    }

    fn variant_and_path(self) -> (Variant, CirculantPath) {
        match self {
            BenchKernel::Dense => (Variant::Dense, CirculantPath::Fft),
            BenchKernel::Symmetric => (Variant::Symmetric, CirculantPath::Fft),
            BenchKernel::Circulant => (Variant::Circulant, CirculantPath::Fft),
            BenchKernel::CirculantNaive => (Variant::Circulant, CirculantPath::Naive),
        }
    }
}

impl fmt::Display for BenchKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchKernel::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown benchmark kernel `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    pub kernels: Vec<BenchKernel>,
    /// Scored (head, dependent) pairs per timed repeat, at least.
    pub pairs: usize,
    /// Positions per sentence, ROOT included.
    pub positions: usize,
    pub repeats: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            dims: vec![256, 512],
            kernels: vec![BenchKernel::Dense, BenchKernel::Symmetric, BenchKernel::Circulant],
            pairs: 10_000,
            positions: 10,
            repeats: 5,
            warmup: 1,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub kernel: BenchKernel,
    pub dim: usize,
    pub pairs: usize,
    pub repeats: usize,
    pub median_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        (values[k / 2 - 1] + values[k / 2]) / 2.0
    }
}

pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    if config.dims.iter().any(|&d| d < 2) {
        return Err(Error::Config("benchmark dimensions must be at least 2".into()));
    }
    if config.repeats == 0 || config.positions == 0 || config.pairs == 0 {
        return Err(Error::Config("repeats, positions and pairs must be positive".into()));
    }
    let per_sentence = config.positions * config.positions;
    let sentences = config.pairs.div_ceil(per_sentence);
    let mut rows = Vec::new();
    for &dim in &config.dims {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ dim as u64);
        let mut draw = |k: usize| RealVector::new((0..k).map(|_| rng.random_range(-1.0..1.0)).collect());
        let batch: Vec<Vec<TokenViews>> = (0..sentences)
            .map(|_| {
                (0..config.positions)
                    .map(|_| TokenViews {
                        arc_head: draw(dim),
                        arc_dep: draw(dim),
                        label_head: RealVector::zeros(1),
                        label_dep: RealVector::zeros(1),
                    })
                    .collect()
            })
            .collect();
        for &kernel in &config.kernels {
            let (variant, path) = kernel.variant_and_path();
            let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut clf = ArcClassifier::new(variant, dim, Initializer::Uniform(0.1), &mut init_rng);
            for b in clf.bias.as_mut_slice() {
                *b = init_rng.random_range(-0.1..0.1);
            }
            let mut times = Vec::with_capacity(config.repeats);
            let mut sink = 0.0;
            for round in 0..config.warmup + config.repeats {
                let start = Instant::now();
                for views in &batch {
                    let grid = score_arcs_with(views, &clf, path)?;
                    sink += grid.get(0, 1);
                }
                let elapsed = start.elapsed().as_secs_f64();
                if round >= config.warmup {
                    times.push(elapsed);
                }
            }
            std::hint::black_box(sink);
            let min = times.iter().copied().fold(f64::INFINITY, f64::min);
            let max = times.iter().copied().fold(0.0, f64::max);
            rows.push(BenchRow {
                kernel,
                dim,
                pairs: sentences * per_sentence,
                repeats: config.repeats,
                median_seconds: median(&mut times),
                min_seconds: min,
                max_seconds: max,
            });
        }
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("kernel,dim,pairs,repeats,median_seconds,min_seconds,max_seconds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.9},{:.9},{:.9}\n",
            r.kernel, r.dim, r.pairs, r.repeats, r.median_seconds, r.min_seconds, r.max_seconds
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn small_run_produces_every_row() {
        let config = BenchConfig {
            dims: vec![4, 8],
            kernels: BenchKernel::ALL.to_vec(),
            pairs: 50,
            positions: 5,
            repeats: 3,
            warmup: 1,
            seed: 2,
        };
        let rows = run_bench(&config).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.pairs == 50 && r.median_seconds >= 0.0));
        let csv = bench_csv(&rows);
        assert!(csv.starts_with("kernel,dim,pairs"));
        assert_eq!(csv.lines().count(), 9);
    }

    #[test]
    fn rejects_tiny_dims() {
        let config = BenchConfig {
            dims: vec![1],
            ..BenchConfig::default()
        };
        assert!(run_bench(&config).is_err());
    }

    #[test]
    fn kernel_names_round_trip() {
        for k in BenchKernel::ALL {
            assert_eq!(k.as_str().parse::<BenchKernel>().unwrap(), k);
        }
        assert!("sparse".parse::<BenchKernel>().is_err());
    }
}
