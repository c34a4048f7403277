//! Simulation, fitting and error budgets for coherent ground-state-depletion
//! imaging of trapped-ion wave packets.
//!
//! Positions are in metres, times in seconds, powers in watts and angular
//! frequencies in rad/s throughout.

pub mod beam;
pub mod budget;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod frames;
pub mod imaging;
pub mod io;
pub mod noise;
pub mod units;
pub mod wavepacket;

pub use error::{GsdError, Result};
