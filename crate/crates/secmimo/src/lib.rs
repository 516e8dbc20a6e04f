//! Secure massive MIMO downlink toolkit.
//!
//! Models a multi-cell TDD system in which an active eavesdropper transmits
//! the target user's pilot during uplink training to contaminate the base
//! station's MMSE channel estimate. The crate provides:
//!
//! - spatially correlated channel construction from a truncated Laplacian
//!   power angle spectrum ([`channel`]),
//! - uplink training with the contamination attack and MMSE estimation
//!   ([`training`]),
//! - matched-filter plus artificial-noise downlink transmission with exact
//!   Monte Carlo secrecy rates ([`downlink`]),
//! - closed-form large-antenna secrecy rates and convergence diagnostics
//!   ([`asymptotic`]),
//! - optimal signal/artificial-noise power allocation ([`power`]),
//! - the null-space training and precoding countermeasure ([`nullspace`]),
//! - config-driven experiment sweeps with CSV output ([`experiment`]).
//!
//! Everything is deterministic: one master seed addresses independent ChaCha
//! substreams per purpose and trial ([`rng`]), and the matrix backend runs
//! sequentially, so results are bit-identical across runs and thread counts.

pub mod asymptotic;
pub mod channel;
pub mod downlink;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod nullspace;
pub mod power;
pub mod rng;
pub mod training;

pub use error::{Error, ErrorKind, Result};
pub use linalg::C64;
