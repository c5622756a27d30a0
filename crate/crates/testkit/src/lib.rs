//! Slow, direct reference implementations that the test suites compare the
//! parser against. Nothing here shares code paths with the library beyond
//! its public data types.

use biaffine_core::conllu::{parse_conllu, Annotation, Sentence, Vocab};
use biaffine_core::model::Model;
use biaffine_core::param::HasParams;
use biaffine_core::scorers::{arc_loss, label_loss, score_arcs, score_labels, ScoreMatrix};
use biaffine_core::autodiff::Tape;
use biaffine_core::{ModelConfig, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `sum_j x_j e^{-2 pi i jk/n}` by direct summation, as `(re, im)` pairs.
pub fn naive_dft(re: &[f64], im: &[f64]) -> Vec<(f64, f64)> {
    let n = re.len();
    (0..n)
        .map(|k| {
            let mut acc = (0.0, 0.0);
            for j in 0..n {
                let angle = -2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
                let (s, c) = angle.sin_cos();
                acc.0 += re[j] * c - im[j] * s;
                acc.1 += re[j] * s + im[j] * c;
            }
            acc
        })
        .collect()
}

/// Real part of `n * idft(spectrum)` by direct summation.
pub fn naive_signal_from_spectrum(spectrum: &[f64]) -> Vec<f64> {
    let n = spectrum.len() / 2;
    (0..n)
        .map(|j| {
            let mut acc = 0.0;
            for k in 0..n {
                let angle = 2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
                let (s, c) = angle.sin_cos();
                acc += spectrum[2 * k] * c - spectrum[2 * k + 1] * s;
            }
            acc
        })
        .collect()
}

/// Every column of the result is the previous one rotated down by one.
pub fn circulant_matrix(w: &[f64]) -> Vec<Vec<f64>> {
    let n = w.len();
    (0..n)
        .map(|i| (0..n).map(|j| w[(i + n - j) % n]).collect())
        .collect()
}

pub fn diagonal_matrix(w: &[f64]) -> Vec<Vec<f64>> {
    let n = w.len();
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { w[i] } else { 0.0 }).collect())
        .collect()
}

/// `sum_ij a_i M_ij b_j`.
pub fn bilinear(a: &[f64], m: &[Vec<f64>], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            total += a[i] * v * b[j];
        }
    }
    total
}

/// Acyclic, spanning, rooted at 0, and with one root child if requested.
pub fn is_arborescence(heads: &[usize], single_root: bool) -> bool {
    let n = heads.len();
    for (k, &h) in heads.iter().enumerate() {
        if h > n || h == k + 1 {
            return false;
        }
    }
    for start in 1..=n {
        let mut v = start;
        let mut steps = 0;
        while v != 0 {
            v = heads[v - 1];
            steps += 1;
            if steps > n {
                return false;
            }
        }
    }
    !single_root || n == 0 || heads.iter().filter(|&&h| h == 0).count() == 1
}

/// Best total score over every arborescence, found by enumerating all
/// `(n+1)^n` head assignments.
pub fn brute_force_max(scores: &ScoreMatrix, single_root: bool) -> f64 {
    let tokens = scores.size() - 1;
    let mut heads = vec![0usize; tokens];
    let mut best = f64::NEG_INFINITY;
    loop {
        if is_arborescence(&heads, single_root) {
            best = best.max(tree_total(scores, &heads));
        }
        let mut k = 0;
        loop {
            if k == tokens {
                return best;
            }
            heads[k] += 1;
            if heads[k] <= tokens {
                break;
            }
            heads[k] = 0;
            k += 1;
        }
    }
}

pub fn tree_total(scores: &ScoreMatrix, heads: &[usize]) -> f64 {
    heads
        .iter()
        .enumerate()
        .map(|(k, &h)| scores.get(h, k + 1))
        .sum()
}

/// Arc plus label loss of one sentence computed from evaluation-mode values
/// only (no tape).
pub fn loss_by_values(model: &Model, sentence: &Sentence) -> f64 {
    let views = model.views(sentence).expect("encode");
    let scores = score_arcs(&views, &model.arc).expect("arc scores");
    let arc = arc_loss(&scores, &sentence.heads).expect("arc loss");
    let label_scores: Vec<_> = sentence
        .heads
        .iter()
        .enumerate()
        .map(|(k, &h)| score_labels(&views[h], &views[k + 1], &model.labels).expect("label scores"))
        .collect();
    let gold: Vec<Option<usize>> = sentence.deprels.iter().map(|l| model.vocab.label_id(l)).collect();
    arc + label_loss(&label_scores, &gold).expect("label loss")
}

#[derive(Clone, Debug)]
pub struct GradientReport {
    pub checked: usize,
    pub max_relative_error: f64,
    pub worst: String,
}

/// Relative error used for gradient checks: `|a - f| / max(|a|, |f|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares tape gradients of the training loss (dropout off) with central
/// differences of [`loss_by_values`] for every parameter scalar.
pub fn check_gradients(model: &mut Model, sentence: &Sentence, step: f64, floor: f64) -> GradientReport {
    let prepared = model.prepare(sentence);
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let loss = model.loss_on_tape(&mut tape, &bound, &prepared, None).expect("loss");
    let grads = tape.backward(loss).expect("backward");
    let analytic = tape.param_gradients(&grads);

    let mut report = GradientReport {
        checked: 0,
        max_relative_error: 0.0,
        worst: String::new(),
    };
    for (p, (name, grad)) in analytic.iter().enumerate() {
        for i in 0..grad.len() {
            let original = model.params_mut()[p].data[i];
            model.params_mut()[p].data[i] = original + step;
            let up = loss_by_values(model, sentence);
            model.params_mut()[p].data[i] = original - step;
            let down = loss_by_values(model, sentence);
            model.params_mut()[p].data[i] = original;
            let numeric = (up - down) / (2.0 * step);
            let err = relative_error(grad.data()[i], numeric, floor);
            report.checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = format!("{name}[{i}]: analytic {:e}, numeric {numeric:e}", grad.data()[i]);
            }
        }
    }
    report
}

const TEXT: &str = "1\tthe\t_\tDET\t_\t_\t2\tdet\t_\t_\n\
    2\tdog\t_\tNOUN\t_\t_\t3\tnsubj\t_\t_\n\
    3\tbarks\t_\tVERB\t_\t_\t0\troot\t_\t_\n\
    4\tloudly\t_\tADV\t_\t_\t3\tdet\t_\t_\n\n";

/// A four-token sentence with three labels and a model small enough for
/// finite differences over every scalar. Biases are randomized so every
/// term contributes.
pub fn gradient_instance(variant: Variant, seed: u64) -> (Model, Sentence) {
    let tb = parse_conllu(TEXT, "mem", Annotation::Required).unwrap();
    let config = ModelConfig {
        variant,
        word_dim: 3,
        pos_dim: 2,
        hidden_dim: 3,
        arc_dim: 8,
        label_dim: 5,
        kernel_bound: 0.5,
        ..ModelConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::new(config, Vocab::build(&tb, 1), &mut rng).unwrap();
    for p in model.params_mut() {
        if p.name.ends_with("bias") || p.name.ends_with("scalar") {
            for x in p.data.iter_mut() {
                *x = rng.random_range(-0.5..0.5);
            }
        }
    }
    (model, tb[0].clone())
}
