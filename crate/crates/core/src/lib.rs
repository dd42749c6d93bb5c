//! Simulation and learning toolkit for UAV-mounted mmWave access points with
//! integrated access and backhaul.

pub mod config;
pub mod error;
pub mod federation;
pub mod harness;
pub mod network;
pub mod placement;
pub mod radio;
pub mod scenario;
pub mod tradeoff;

pub use error::{Error, Result};
