//! Bit-accurate model of a sparsity-adaptive beamspace LMMSE equalizer for
//! mmWave massive MU-MIMO uplinks.
//!
//! The crate covers the whole chain: synthetic planar-wave channels, the
//! spatial DFT (exact or with low-resolution twiddles), LMMSE preprocessing
//! with per-row scaling, the threshold-gated matrix-vector multiply with exact
//! skip accounting, a cycle-level model of the streaming datapath, and a
//! Monte Carlo harness for BER curves and threshold sweeps.

pub mod beamspace;
pub mod channel;
pub mod datapath;
pub mod equalizer;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod qam;

pub use error::{Error, Result};
