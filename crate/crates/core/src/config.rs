//! Model and training settings, read from flat `key = value` text.

use std::fmt::Write as _;
use std::path::Path;

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::kernels::Variant;
use crate::optim::AdamConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub word_dim: usize,
    pub pos_dim: usize,
    pub hidden_dim: usize,
    pub arc_dim: usize,
    pub label_dim: usize,
    pub dropout: f64,
    pub embedding_bound: f64,
    /// Classifier kernels start from `U(-b, b)` (spectra from the transform
    /// of such a vector).
    pub kernel_bound: f64,
    pub min_count: usize,
    pub single_root: bool,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    /// Sentences per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    pub subsample: f64,
    /// Longer training sentences are skipped.
    pub max_length: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let enc = EncoderConfig::default();
        ModelConfig {
            variant: Variant::Dense,
            word_dim: enc.word_dim,
            pos_dim: enc.pos_dim,
            hidden_dim: enc.hidden_dim,
            arc_dim: enc.arc_dim,
            label_dim: enc.label_dim,
            dropout: enc.dropout,
            embedding_bound: enc.embedding_bound,
            kernel_bound: 0.05,
            min_count: 1,
            single_root: true,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            epochs: 10,
            batch_size: 16,
            seed: 1,
            subsample: 1.0,
            max_length: 100,
        }
    }
}

const KEYS: [&str; 20] = [
    "variant",
    "word_dim",
    "pos_dim",
    "hidden_dim",
    "arc_dim",
    "label_dim",
    "dropout",
    "embedding_bound",
    "kernel_bound",
    "min_count",
    "single_root",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "epochs",
    "batch_size",
    "seed",
    "subsample",
    "max_length",
];

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl ModelConfig {
    pub fn keys() -> &'static [&'static str] {
        &KEYS
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "variant" => self.variant = v.parse()?,
            "word_dim" => self.word_dim = parse_value(key, v)?,
            "pos_dim" => self.pos_dim = parse_value(key, v)?,
            "hidden_dim" => self.hidden_dim = parse_value(key, v)?,
            "arc_dim" => self.arc_dim = parse_value(key, v)?,
            "label_dim" => self.label_dim = parse_value(key, v)?,
            "dropout" => self.dropout = parse_value(key, v)?,
            "embedding_bound" => self.embedding_bound = parse_value(key, v)?,
            "kernel_bound" => self.kernel_bound = parse_value(key, v)?,
            "min_count" => self.min_count = parse_value(key, v)?,
            "single_root" => self.single_root = parse_value(key, v)?,
            "learning_rate" => self.learning_rate = parse_value(key, v)?,
            "beta1" => self.beta1 = parse_value(key, v)?,
            "beta2" => self.beta2 = parse_value(key, v)?,
            "epsilon" => self.epsilon = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "subsample" => self.subsample = parse_value(key, v)?,
            "max_length" => self.max_length = parse_value(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn apply_text(&mut self, text: &str, source_name: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = |msg: String| Error::Config(format!("{source_name}:{}: {msg}", i + 1));
            let Some((key, value)) = line.split_once('=') else {
                return Err(at(format!("expected `key = value`, got `{line}`")));
            };
            self.set(key.trim(), value).map_err(|e| match e {
                Error::Config(msg) => at(msg),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str, source_name: &str) -> Result<Self> {
        let mut config = ModelConfig::default();
        config.apply_text(text, source_name)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelConfig::from_text(&text, &path.display().to_string())
    }

    /// Every key in canonical order; `from_text(to_text())` is the identity.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = match key {
                "variant" => self.variant.as_str().to_string(),
                "word_dim" => self.word_dim.to_string(),
                "pos_dim" => self.pos_dim.to_string(),
                "hidden_dim" => self.hidden_dim.to_string(),
                "arc_dim" => self.arc_dim.to_string(),
                "label_dim" => self.label_dim.to_string(),
                "dropout" => format!("{:?}", self.dropout),
                "embedding_bound" => format!("{:?}", self.embedding_bound),
                "kernel_bound" => format!("{:?}", self.kernel_bound),
                "min_count" => self.min_count.to_string(),
                "single_root" => self.single_root.to_string(),
                "learning_rate" => format!("{:?}", self.learning_rate),
                "beta1" => format!("{:?}", self.beta1),
                "beta2" => format!("{:?}", self.beta2),
                "epsilon" => format!("{:?}", self.epsilon),
                "epochs" => self.epochs.to_string(),
                "batch_size" => self.batch_size.to_string(),
                "seed" => self.seed.to_string(),
                "subsample" => format!("{:?}", self.subsample),
                "max_length" => self.max_length.to_string(),
                _ => unreachable!("every key is listed"),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("word_dim", self.word_dim),
            ("pos_dim", self.pos_dim),
            ("hidden_dim", self.hidden_dim),
            ("arc_dim", self.arc_dim),
            ("label_dim", self.label_dim),
            ("batch_size", self.batch_size),
            ("max_length", self.max_length),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{name}` must be at least 1")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} is outside [0, 1)", self.dropout)));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config(format!("subsample {} is outside (0, 1]", self.subsample)));
        }
        for (name, v) in [
            ("embedding_bound", self.embedding_bound),
            ("kernel_bound", self.kernel_bound),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("`{name}` must be finite and non-negative")));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("`learning_rate` must be positive".into()));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("`{name}` must lie in [0, 1)")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config("`epsilon` must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn encoder(&self, num_words: usize, num_pos: usize) -> EncoderConfig {
        EncoderConfig {
            word_dim: self.word_dim,
            pos_dim: self.pos_dim,
            hidden_dim: self.hidden_dim,
            arc_dim: self.arc_dim,
            label_dim: self.label_dim,
            num_words,
            num_pos,
            dropout: self.dropout,
            embedding_bound: self.embedding_bound,
        }
    }

    /// Trainable scalars of a model with these vocabulary sizes, or `None`
    /// on overflow.
    pub fn parameter_count(&self, num_words: usize, num_pos: usize, num_labels: usize) -> Option<usize> {
        let mul = |a: usize, b: usize| a.checked_mul(b);
        let add = |a: usize, b: usize| a.checked_add(b);
        let h4 = mul(4, self.hidden_dim)?;
        let input = add(self.word_dim, self.pos_dim)?;
        let lstm = add(mul(add(input, self.hidden_dim)?, h4)?, h4)?;
        let out = mul(2, self.hidden_dim)?;
        let mlp = |d: usize| add(mul(out, d)?, d);
        let mut total = add(mul(num_words, self.word_dim)?, mul(num_pos, self.pos_dim)?)?;
        total = add(total, mul(2, lstm)?)?;
        total = add(total, mul(2, mlp(self.arc_dim)?)?)?;
        total = add(total, mul(2, mlp(self.label_dim)?)?)?;
        let n = self.arc_dim;
        let m = self.label_dim;
        let (arc, label) = match self.variant {
            Variant::Dense => (add(mul(n, n)?, n)?, mul(num_labels, add(mul(m, m)?, add(mul(2, m)?, 1)?)?)?),
            Variant::Symmetric => (mul(3, n)?, mul(num_labels, mul(3, m)?)?),
            Variant::Circulant => (mul(4, n)?, mul(num_labels, mul(4, m)?)?),
        };
        add(add(total, arc)?, label)
    }
}
