//! Uplink NR-U / WiFi coexistence over a shared 20 MHz unlicensed channel.
//!
//! The crate is split into a deterministic microsecond-tick simulator
//! (`scenario`, `channel`, `traffic`, `mac`, `phy`, `metrics`, `simcore`)
//! and a learning stack that tunes the energy-detection thresholds of both
//! networks (`rl`, `federated`). The `experiment` module wires everything
//! into runnable experiments that write CSV artifacts.

pub mod channel;
pub mod constructions;
pub mod error;
pub mod experiment;
pub mod federated;
pub mod mac;
pub mod metrics;
pub mod phy;
pub mod rl;
pub mod scenario;
pub mod simcore;
pub mod traffic;
pub mod units;

pub use error::{Error, Result};
