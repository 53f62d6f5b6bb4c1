use std::path::PathBuf;

use thiserror::Error;

use crate::neuron::NeuronId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("integration diverged at neuron {} t={t_us}us (i_mem={i_mem:e})", fmt_neuron(.neuron))]
    Divergence {
        neuron: Option<NeuronId>,
        t_us: u64,
        i_mem: f64,
    },

    #[error(
        "window too short: {spikes} spikes in {window_ms} ms at the top of the range (need >= 10)"
    )]
    WindowTooShort { spikes: u64, window_ms: f64 },

    #[error("network violates fabric limits:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Fabric(Vec<crate::fabric::Violation>),

    #[error("unknown neuron: {0}")]
    UnknownNeuron(String),

    #[error("calibration failed for band {band}: {reason}")]
    Calibration { band: usize, reason: String },

    #[error("attractor tuning failed: best candidate persisted {best_persistence_s:.1} s at {best_rate_hz:.1} Hz")]
    Tuning {
        best_persistence_s: f64,
        best_rate_hz: f64,
    },

    #[error("exclusivity violated: {0}")]
    Exclusivity(String),

    #[error("{path}:{line}: {msg}")]
    Data {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0}")]
    Series(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_neuron(n: &Option<NeuronId>) -> String {
    n.map_or_else(|| "<unnamed>".to_string(), |id| id.to_string())
}

impl Error {
    /// True for data/IO problems as opposed to numerical failures.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Data { .. } | Error::Series(_) | Error::Config(_) | Error::Io(_)
        )
    }
}
