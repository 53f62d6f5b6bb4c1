//! Spike event log and its two interchange formats.
//!
//! CSV: header `neuron_id,t_us`, one event per row.
//!
//! Binary: a flat sequence of 12-byte records, each a little-endian `u32`
//! neuron id followed by a little-endian `u64` timestamp in microseconds.
//! There is no header; the record count is `file_len / 12`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PopRange;
use crate::error::{Error, Result};
use crate::neuron::NeuronId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpikeEvent {
    #[serde(rename = "neuron_id")]
    pub neuron: NeuronId,
    pub t_us: u64,
}

pub const BINARY_RECORD_LEN: usize = 12;

/// Time-ordered spikes of one run, plus the population table needed to
/// decode them.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventLog {
    pub events: Vec<SpikeEvent>,
    pub pops: Vec<PopRange>,
    pub duration_us: u64,
}

impl EventLog {
    pub fn from_events(mut events: Vec<SpikeEvent>) -> Self {
        events.sort_by_key(|e| (e.t_us, e.neuron));
        let duration_us = events.last().map_or(0, |e| e.t_us);
        Self {
            events,
            pops: Vec::new(),
            duration_us,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn pop(&self, name: &str) -> Option<&PopRange> {
        self.pops.iter().find(|p| p.name == name)
    }

    /// Events with `t0 <= t < t1`.
    pub fn window(&self, t0: u64, t1: u64) -> &[SpikeEvent] {
        let a = self.events.partition_point(|e| e.t_us < t0);
        let b = self.events.partition_point(|e| e.t_us < t1);
        &self.events[a..b.max(a)]
    }

    /// Mean per-neuron rate (Hz) of population `name` over `[t0, t1)`.
    pub fn rate(&self, name: &str, t0: u64, t1: u64) -> Result<f64> {
        let pop = self
            .pop(name)
            .ok_or_else(|| Error::UnknownNeuron(format!("population {name}")))?;
        Ok(self.range_rate(pop, t0, t1))
    }

    pub(crate) fn range_rate(&self, pop: &PopRange, t0: u64, t1: u64) -> f64 {
        if t1 <= t0 || pop.len == 0 {
            return 0.0;
        }
        let n = self
            .window(t0, t1)
            .iter()
            .filter(|e| pop.contains(e.neuron))
            .count();
        n as f64 / pop.len as f64 / ((t1 - t0) as f64 * 1e-6)
    }

    /// Population rate in consecutive bins of `bin_us` starting at `t0`.
    pub fn binned_rates(&self, name: &str, t0: u64, t1: u64, bin_us: u64) -> Result<Vec<f64>> {
        let pop = self
            .pop(name)
            .ok_or_else(|| Error::UnknownNeuron(format!("population {name}")))?;
        let n_bins = ((t1.saturating_sub(t0)) / bin_us) as usize;
        let mut counts = vec![0u64; n_bins];
        for e in self.window(t0, t0 + n_bins as u64 * bin_us) {
            if pop.contains(e.neuron) {
                counts[((e.t_us - t0) / bin_us) as usize] += 1;
            }
        }
        let scale = 1.0 / pop.len.max(1) as f64 / (bin_us as f64 * 1e-6);
        Ok(counts.into_iter().map(|c| c as f64 * scale).collect())
    }

    /// Concatenate a later log; timestamps of `other` must not precede ours.
    pub fn append(&mut self, other: &EventLog) {
        self.events.extend_from_slice(&other.events);
        self.duration_us = self.duration_us.max(other.duration_us);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for e in &self.events {
            wr.serialize(e).map_err(csv_io)?;
        }
        if self.events.is_empty() {
            wr.write_record(["neuron_id", "t_us"]).map_err(csv_io)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, path: &Path) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut events = Vec::new();
        for (i, row) in rd.deserialize::<SpikeEvent>().enumerate() {
            events.push(row.map_err(|e| Error::Data {
                path: path.to_path_buf(),
                line: i + 2,
                msg: e.to_string(),
            })?);
        }
        if events.windows(2).any(|w| w[1].t_us < w[0].t_us) {
            return Err(Error::Data {
                path: path.to_path_buf(),
                line: 0,
                msg: "event timestamps must be non-decreasing".into(),
            });
        }
        Ok(Self::from_events(events))
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(self.events.len() * BINARY_RECORD_LEN);
        for e in &self.events {
            buf.extend_from_slice(&e.neuron.to_le_bytes());
            buf.extend_from_slice(&e.t_us.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        if buf.len() % BINARY_RECORD_LEN != 0 {
            return Err(Error::Series(format!(
                "binary log length {} is not a multiple of {BINARY_RECORD_LEN}",
                buf.len()
            )));
        }
        let events = buf
            .chunks_exact(BINARY_RECORD_LEN)
            .map(|c| SpikeEvent {
                neuron: u32::from_le_bytes(c[..4].try_into().unwrap()),
                t_us: u64::from_le_bytes(c[4..].try_into().unwrap()),
            })
            .collect();
        Ok(Self::from_events(events))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, path)
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
