//! Graph-based dependency parsing with biaffine arc and label classifiers
//! whose bilinear kernels can be dense, diagonal (symmetric) or circulant.

pub mod accounting;
pub mod autodiff;
pub mod bench;
pub mod config;
pub mod conllu;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod fft;
pub mod kernels;
pub mod model;
pub mod optim;
pub mod param;
pub mod scorers;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use config::ModelConfig;
pub use kernels::Variant;
pub use model::Model;
