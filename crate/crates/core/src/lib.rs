//! Frequency-domain fusion of text and image embeddings, fidelity-based
//! knowledge retrieval, and a focal-loss classifier with a stratified
//! cross-validation harness.
//!
//! The pipeline for one sample:
//!
//! 1. both embeddings are zero-padded and transformed with a real FFT
//!    ([`spectral`]);
//! 2. the text embedding (or a frozen projection of the fused spectra) is
//!    amplitude-encoded and matched against a knowledge base; the top-k keys
//!    are averaged ([`retrieval`]);
//! 3. the spectra are projected and fused by a sigmoid gate, the knowledge
//!    context is projected, and a softmax head produces the answer
//!    ([`fusion`], [`classifier`]).

pub mod classifier;
pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod linalg;
pub mod retrieval;
pub mod rng;
pub mod spectral;

pub use error::{Error, ErrorKind, Result};
