//! End-to-end controller: encoder, state machine and readout on one
//! fabric, driven by a presentation schedule derived from a sensor series.
//!
//! Sample `k` is presented during `[k*cycle, k*cycle + drive)` and the
//! network then runs free until the next presentation. The decision for
//! sample `k` is read from the last `decision` window of its cycle and is
//! stamped with the sample's own timestamp.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, SmpSeries, SynthParams};
use crate::encoder::{
    build_encoder, calibrate_encoder, rescale_smp, Bands, Calibration, CropProfile, EncoderSpec,
};
use crate::error::Result;
use crate::exec::Exec;
use crate::fabric::{
    run_simulation, EventLog, FabricLimits, MismatchModel, NetworkSpec, SimConfig, Stimulus,
};
use crate::neuron::{FiSettings, Sign, Speed};
use crate::oracle::{
    alternates, compare_commands, hysteresis_oracle, EvalReport, DEFAULT_HORIZON_INTERVALS,
};
use crate::state_machine::{
    build_readout, build_wta, decide, read_state, Action, Command, ReadoutSpec, WtaSpec, CLOSE,
    OPEN, STATE_LABELS,
};

/// Presentation timing of one sensor sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub drive_ms: f64,
    pub hold_ms: f64,
    pub decision_ms: f64,
    /// Multiplies every interval; 1 is the compressed protocol.
    pub time_scale: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            drive_ms: 200.0,
            hold_ms: 800.0,
            decision_ms: 200.0,
            time_scale: 1.0,
        }
    }
}

impl Schedule {
    pub fn cycle_us(&self) -> u64 {
        ((self.drive_ms + self.hold_ms) * self.time_scale * 1000.0).round() as u64
    }

    pub fn drive_us(&self) -> u64 {
        (self.drive_ms * self.time_scale * 1000.0).round() as u64
    }

    pub fn decision_us(&self) -> u64 {
        (self.decision_ms * self.time_scale * 1000.0).round() as u64
    }

    /// Decision window of cycle `k`.
    pub fn window(&self, k: usize) -> (u64, u64) {
        let end = (k as u64 + 1) * self.cycle_us();
        (end - self.decision_us(), end)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.drive_ms > 0.0
            && self.hold_ms >= 0.0
            && self.time_scale > 0.0
            && self.decision_ms > 0.0
            && self.decision_ms <= self.drive_ms + self.hold_ms;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidParams(format!(
                "bad schedule {self:?}"
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub encoder: EncoderSpec,
    pub wta: WtaSpec,
    pub readout: ReadoutSpec,
    /// Encoder group `i` onto state group `i` (slow excitation).
    pub w_enc: f64,
    pub schedule: Schedule,
    pub dt_ms: f64,
    pub active_rate_hz: f64,
}

impl PipelineSpec {
    pub fn for_profile(profile: &CropProfile) -> Result<Self> {
        Ok(Self {
            encoder: EncoderSpec::for_profile(profile)?,
            wta: WtaSpec::default(),
            readout: ReadoutSpec::default(),
            w_enc: 0.03,
            schedule: Schedule::default(),
            dt_ms: 0.1,
            active_rate_hz: 10.0,
        })
    }
}

/// A calibrated, ready-to-run controller.
#[derive(Clone, Debug)]
pub struct Controller {
    pub spec: PipelineSpec,
    pub calibration: Calibration,
    pub network: NetworkSpec,
}

impl Controller {
    pub fn new(spec: PipelineSpec) -> Result<Self> {
        let calibration = calibrate_encoder(&spec.encoder, &FiSettings::default())?;
        Ok(Self::with_calibration(spec, calibration))
    }

    pub fn with_calibration(spec: PipelineSpec, calibration: Calibration) -> Self {
        let network = build_network(&spec, &calibration);
        Self {
            spec,
            calibration,
            network,
        }
    }

    /// Simulate the presentation of `currents` (rescaled values).
    pub fn run(&self, currents: &[f64], mismatch: MismatchModel) -> Result<ControllerRun> {
        self.spec.schedule.validate()?;
        let sched = &self.spec.schedule;
        let stimuli = presentation(&self.spec, currents);
        let n = currents.len();
        if n == 0 {
            return Ok(ControllerRun {
                log: EventLog::default(),
                cycles: Vec::new(),
            });
        }
        let cfg = SimConfig {
            dt_ms: self.spec.dt_ms,
            duration_ms: n as f64 * sched.cycle_us() as f64 / 1000.0,
            mismatch,
            limits: FabricLimits::default(),
        };
        let log = run_simulation(&self.network, &stimuli, &cfg)?;

        let mut prev = Action::Close;
        let mut cycles = Vec::with_capacity(n);
        for k in 0..n {
            let w = sched.window(k);
            let state = match read_state(&log, &STATE_LABELS, w, self.spec.active_rate_hz) {
                Ok(s) => StateReading::from(s),
                Err(crate::Error::Exclusivity(msg)) => StateReading::Conflict(msg),
                Err(e) => return Err(e),
            };
            let command = decide(&log, (OPEN, CLOSE), w, prev)?;
            if let Some(c) = command {
                prev = c.action;
            }
            cycles.push(Cycle {
                sample: k,
                open_hz: log.rate(OPEN, w.0, w.1)?,
                close_hz: log.rate(CLOSE, w.0, w.1)?,
                state,
                command,
            });
        }
        Ok(ControllerRun { log, cycles })
    }

    /// Rescale, simulate and stamp commands with sensor time.
    pub fn run_series(
        &self,
        series: &SmpSeries,
        profile: &CropProfile,
        mismatch: MismatchModel,
    ) -> Result<(ControllerRun, Vec<TimedCommand>)> {
        let rescaled = rescale_smp(series, profile, self.spec.encoder.bands.c_max)?;
        let run = self.run(&rescaled.currents, mismatch)?;
        let commands = run
            .cycles
            .iter()
            .filter_map(|c| {
                c.command.map(|cmd| TimedCommand {
                    t: series.samples[c.sample].t,
                    action: cmd.action,
                })
            })
            .collect();
        Ok((run, commands))
    }
}

pub fn build_network(spec: &PipelineSpec, cal: &Calibration) -> NetworkSpec {
    let mut net = build_encoder(&spec.encoder, cal)
        .merge(build_wta(&spec.wta))
        .merge(build_readout(&spec.readout));
    for (b, l) in STATE_LABELS.iter().enumerate() {
        net.connect_all(
            &EncoderSpec::group(b),
            l,
            Sign::Excitatory,
            Speed::Slow,
            spec.w_enc,
        );
    }
    net
}

/// Current injections presenting each sample to all three encoder groups.
pub fn presentation(spec: &PipelineSpec, currents: &[f64]) -> Vec<Stimulus> {
    let sched = &spec.schedule;
    let mut out = Vec::with_capacity(currents.len() * 3);
    for (k, &c) in currents.iter().enumerate() {
        let start = (k as u64 * sched.cycle_us()) as f64 / 1000.0;
        let end = start + sched.drive_us() as f64 / 1000.0;
        for b in 0..3 {
            out.push(Stimulus::current(
                &EncoderSpec::group(b),
                c + spec.encoder.pedestal,
                start,
                end,
            ));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StateReading {
    None,
    State(usize),
    Conflict(String),
}

impl From<Option<String>> for StateReading {
    fn from(s: Option<String>) -> Self {
        match s {
            None => StateReading::None,
            Some(l) => StateReading::State(
                STATE_LABELS
                    .iter()
                    .position(|x| *x == l)
                    .expect("label comes from STATE_LABELS"),
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cycle {
    pub sample: usize,
    pub state: StateReading,
    pub open_hz: f64,
    pub close_hz: f64,
    pub command: Option<Command>,
}

#[derive(Clone, Debug)]
pub struct ControllerRun {
    pub log: EventLog,
    pub cycles: Vec<Cycle>,
}

impl ControllerRun {
    pub fn commands(&self) -> Vec<Command> {
        self.cycles.iter().filter_map(|c| c.command).collect()
    }
}

/// A decision in sensor time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedCommand {
    pub t: DateTime<Utc>,
    pub action: Action,
}

impl ControllerRun {
    /// Decision windows in which more than one state group was active.
    pub fn conflicts(&self) -> usize {
        self.cycles
            .iter()
            .filter(|c| matches!(c.state, StateReading::Conflict(_)))
            .count()
    }
}

/// Rescaled values walking up through every band and back down,
/// `per_band` evenly spaced points inside each band.
pub fn staircase(bands: &Bands, per_band: usize) -> Vec<f64> {
    let edges = [0.0, bands.c_off, bands.c_on, bands.c_max];
    let mut up = Vec::with_capacity(3 * per_band);
    for b in 0..3 {
        let (lo, hi) = (edges[b], edges[b + 1]);
        for j in 0..per_band {
            up.push(lo + (hi - lo) * (j as f64 + 0.5) / per_band as f64);
        }
    }
    let mut out = up.clone();
    out.extend(up.iter().rev().skip(1));
    out
}

/// One synthetic closed-loop trace scored against the oracle.
#[derive(Clone, Debug)]
pub struct TraceOutcome {
    pub seed: u64,
    pub samples: usize,
    pub oracle: Vec<TimedCommand>,
    pub network: Vec<TimedCommand>,
    pub report: EvalReport,
    pub conflicts: usize,
}

impl TraceOutcome {
    pub fn alternates(&self) -> bool {
        alternates(&self.network)
    }
}

/// Generate one evaluation trace per seed, run it through the controller
/// with mismatch seeded by the same seed, and compare with the oracle.
pub fn evaluate_traces(
    ctl: &Controller,
    profile: &CropProfile,
    seeds: &[u64],
    cv: f64,
    exec: Exec,
) -> Result<Vec<TraceOutcome>> {
    exec.try_map(seeds, |&seed| {
        let params = SynthParams::evaluation(profile, seed);
        let series = generate_synthetic(&params, profile)?;
        let oracle = hysteresis_oracle(&series, profile);
        let (run, network) = ctl.run_series(&series, profile, MismatchModel { cv, seed })?;
        let report = compare_commands(
            &oracle,
            &network,
            series.interval_s,
            DEFAULT_HORIZON_INTERVALS,
        );
        Ok(TraceOutcome {
            seed,
            samples: series.len(),
            oracle,
            network,
            report,
            conflicts: run.conflicts(),
        })
    })
}
