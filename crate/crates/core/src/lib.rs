//! Event-driven simulation of a spiking irrigation controller on a
//! mixed-signal neuromorphic fabric.

pub mod data;
pub mod encoder;
pub mod error;
pub mod exec;
pub mod fabric;
pub mod neuron;
pub mod oracle;
pub mod pipeline;
pub mod power;
pub mod state_machine;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
