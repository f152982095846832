//! MPS multi-class classifier trained by two-site gradient-descent sweeps,
//! instrumented with entanglement and magnetization diagnostics and with
//! k-nearest-neighbor information estimators (transfer entropy,
//! O-information) for detecting grokking transitions during training.

pub mod datasets;
pub mod diagnostics;
pub mod hoi;
pub mod mps;
pub mod tensor;

pub use mps::{classify, encode_sample, EncodedSample, MpsClassifier, SweepConfig};
