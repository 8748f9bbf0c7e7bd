//! Streaming neural transducer with adaptive contextual biasing.
//!
//! The crate implements a context-aware transformer transducer (CATT): a
//! causal self-attention audio encoder and an LSTM prediction network, both
//! biased towards a user-supplied list of context phrases through multi-head
//! attention over phrase embeddings. Two entity detectors (predictor-based
//! and encoder-predictor-based) predict, token by token, whether a listed
//! phrase is being spoken; greedy decoding uses that prediction as a switch
//! that turns the bias list on and off mid-utterance.
//!
//! Everything runs on a small tape-based reverse-mode autodiff engine so the
//! joint objective (transducer negative log-likelihood plus detector
//! cross-entropy) trains end to end on CPU.

pub mod decode;
pub mod detector;
pub mod error;
pub mod kernels;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod params;
pub mod report;
pub mod scalar;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{CoreError, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;
