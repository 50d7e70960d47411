//! Probing toolkit for layered speech-tokenizer representations.
//!
//! Three protocols are provided over exported per-layer features:
//!
//! * word-pair distance probing (synonym, near-homophone, speaker and random
//!   pairs, normalized against the random setting),
//! * articulatory probing with PWCCA against vocal-tract distance tracks,
//! * cross-modal linear CKA with a row-permutation baseline.
//!
//! A small residual vector quantizer ([`rvq_sim`]) generates synthetic
//! corpora with planted geometry for end-to-end checks.

pub mod alignment;
pub mod cli;
pub mod error;
pub mod lexicon;
pub mod metrics;
pub mod probe;
pub mod rvq_sim;
pub mod tensor_io;

pub use error::{ProbeError, Result};
