//! Learnable audio front-end: a cosine-modulated Gaussian filterbank with
//! trainable center frequencies, multi-head relevance weighting over the
//! resulting time-frequency representation, spectrogram augmentation, and a
//! compact CNN classifier, all differentiated end to end on a from-scratch
//! reverse-mode tape.

pub mod augment;
pub mod config;
pub mod dataio;
pub mod error;
pub mod frontend;
pub mod gradcheck;
pub mod optim;
pub mod pipeline;
pub mod relevance;
pub mod rng;
pub mod tape;
pub mod train;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
