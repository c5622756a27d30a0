use std::path::PathBuf;

use biaffine_core::conllu::read_conllu;
use biaffine_core::kernels::KernelWeights;
use biaffine_core::train::Trainer;
use biaffine_core::{ModelConfig, Variant};

fn fixture() -> Vec<biaffine_core::conllu::Sentence> {
    read_conllu(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic50.conllu")).unwrap()
}

fn config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        word_dim: 16,
        pos_dim: 8,
        hidden_dim: 16,
        arc_dim: 32,
        label_dim: 12,
        batch_size: 1,
        ..ModelConfig::default()
    }
}

fn spectra(t: &Trainer) -> Vec<f64> {
    let mut residuals = Vec::new();
    let kernels = std::iter::once(&t.model.arc.kernel).chain(t.model.labels.entries.iter().map(|e| &e.kernel));
    for k in kernels {
        match k {
            KernelWeights::Circulant(s) => residuals.push(s.conjugate_symmetry_residual()),
            other => panic!("expected a circulant kernel, found {:?}", other.variant()),
        }
    }
    residuals
}

#[test]
fn circulant_spectra_stay_conjugate_symmetric() {
    let tb = fixture();
    let mut t = Trainer::new(config(Variant::Circulant), &tb).unwrap();
    for step in 0..100 {
        t.step(&[step % t.train_sentences()]).unwrap();
    }
    assert_eq!(t.steps_taken(), 100);
    let residuals = spectra(&t);
    assert_eq!(residuals.len(), 1 + t.model.vocab.num_labels());
    for r in residuals {
        assert!(r < 1e-6, "residual {r}");
    }
}

#[test]
fn training_is_reproducible_for_every_variant() {
    let tb = fixture();
    for variant in Variant::ALL {
        let run = || {
            let mut t = Trainer::new(config(variant), &tb).unwrap();
            let losses: Vec<f64> = (0..2).map(|_| t.epoch().unwrap()).collect();
            (losses, t.model)
        };
        let (la, ma) = run();
        let (lb, mb) = run();
        assert_eq!(la, lb, "{variant}");
        assert_eq!(ma, mb, "{variant}");
        assert!(la[1] < la[0], "{variant}: {la:?}");
    }
}
