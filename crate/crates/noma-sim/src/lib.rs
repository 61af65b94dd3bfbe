//! Link-level library and simulator for pilot-free uplink power-domain NOMA.
//!
//! The receiver separates superimposed users without any training symbols:
//! each SIC stage clusters the received I/Q samples with a Gaussian mixture
//! model, reads the channel amplitude and a phase representative off the
//! cluster centroids, slices with rotated decision boundaries, and decodes
//! a rotationally invariant rate-1/2 code so that the residual 90-degree
//! phase ambiguity is absorbed by the code instead of by pilots.
//!
//! Modules:
//! - [`ricode`]: the invariant code (encoder, QPSK mapping, Viterbi decoder)
//! - [`channel`]: block-fading channel realizations and the superposition model
//! - [`clustering`]: K-means initialization and the GMM/EM fit
//! - [`receiver`]: the blind SIC detector plus ML and pilot-based baselines
//! - [`harness`]: seeded Monte Carlo BER sweeps, config files, result output

pub mod channel;
pub mod clustering;
pub mod harness;
pub mod receiver;
pub mod ricode;

pub use num_complex::Complex64;
