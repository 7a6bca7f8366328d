//! Simulation and analysis of interference management among overlapped
//! slotted-ALOHA random access networks whose APs and users carry multiple
//! antennas.
//!
//! Layers, bottom up:
//!
//! - [`matkernels`]: small dense complex linear algebra (SVD, null spaces,
//!   pseudo-inverse).
//! - [`channel`]: Rayleigh channels per slot and the per-AP interference
//!   spaces.
//! - [`phy`]: leakage-minimizing transmit beams, projection and ZF receive.
//! - [`mac`]: p-persistent and CDF-threshold access.
//! - [`protocols`]: MPR, IN, OIA and its two ablations, slot by slot.
//! - [`analytic`]: closed-form throughput from success-probability tables.
//! - [`harness`]: sweeps, table estimation, figure presets, CSV output.

pub mod analytic;
pub mod channel;
pub mod config;
pub mod harness;
pub mod mac;
pub mod matkernels;
pub mod phy;
pub mod protocols;
pub mod rng;

pub use config::{ConfigError, NetworkConfig, UserId};
pub use protocols::ProtocolKind;
