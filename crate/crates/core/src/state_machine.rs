//! Attractor memory, three-state winner-take-all and the open/close readout.
//!
//! Each excitatory group `e0..e2` sustains itself through slow recurrent
//! excitation. A shared inhibitory pool is recruited mainly when more than
//! one group is active and suppresses the group without external support.
//! The readout has a persistent `close` group switched on by `e0` and off by `e2`, and
//! an `open` group driven by `e2` through a fast-excitation / slow-inhibition
//! pair, which responds most strongly right after `e2` turns on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fabric::{
    run_simulation, CoreConfig, EventLog, MismatchModel, NetworkSpec, SimConfig, Stimulus,
};
use crate::neuron::{NeuronParams, Sign, Speed};

pub const STATE_LABELS: [&str; 3] = ["e0", "e1", "e2"];
pub const INH: &str = "inh";
pub const OPEN: &str = "open";
pub const CLOSE: &str = "close";

/// Core hosting the state machine and readout.
pub const STATE_CORE: usize = 3;

pub fn stimulus_channel(state: usize) -> String {
    format!("stim{state}")
}

/// Neuron and synapse parameters of the state-machine core.
pub fn state_core_config() -> CoreConfig {
    CoreConfig {
        neuron: NeuronParams {
            tau_ms: 20.0,
            i_gain: 1.0,
            i_tau: 1.0,
            i_a: 0.5,
            i_spike_threshold: 1.0,
            i_reset: 0.0,
            refractory_ms: 10.0,
            i_dc: 0.0,
        },
        tau_fast_ms: 5.0,
        tau_slow_ms: 100.0,
        i_syn_max: 50.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WtaSpec {
    pub exc_size: u32,
    pub inh_size: u32,
    /// Recurrent excitation within each group (slow).
    pub w_ee: f64,
    /// Excitatory groups onto the inhibitory pool (slow).
    pub w_ei: f64,
    /// Inhibitory pool onto every excitatory group (slow).
    pub w_ie: f64,
    /// External stimulus channels onto their group (slow).
    pub w_in: f64,
    pub speeds: WtaSpeeds,
    pub core: usize,
    pub config: CoreConfig,
}

/// Synapse speed of each edge class of the state machine.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WtaSpeeds {
    pub ee: Speed,
    pub ei: Speed,
    pub ie: Speed,
    pub input: Speed,
}

impl Default for WtaSpeeds {
    fn default() -> Self {
        Self {
            ee: Speed::Slow,
            ei: Speed::Slow,
            ie: Speed::Slow,
            input: Speed::Slow,
        }
    }
}

impl Default for WtaSpec {
    fn default() -> Self {
        Self {
            exc_size: 16,
            inh_size: 4,
            w_ee: 0.031,
            w_ei: 0.005,
            w_ie: 0.3,
            w_in: 0.2,
            speeds: WtaSpeeds::default(),
            core: STATE_CORE,
            config: state_core_config(),
        }
    }
}

impl WtaSpec {
    pub fn validate(&self) -> Result<()> {
        if [self.w_ee, self.w_ei, self.w_ie, self.w_in]
            .iter()
            .all(|w| *w > 0.0)
        {
            Ok(())
        } else {
            Err(Error::InvalidParams(
                "state machine weights must be > 0".into(),
            ))
        }
    }
}

pub fn build_wta(spec: &WtaSpec) -> NetworkSpec {
    let mut net = NetworkSpec::new().with_core(spec.core, spec.config);
    for l in STATE_LABELS {
        net.add_population(l, spec.core, spec.exc_size);
    }
    net.add_population(INH, spec.core, spec.inh_size);
    for (k, l) in STATE_LABELS.iter().enumerate() {
        let sp = &spec.speeds;
        net.connect_all(l, l, Sign::Excitatory, sp.ee, spec.w_ee);
        net.connect_all(l, INH, Sign::Excitatory, sp.ei, spec.w_ei);
        net.connect_all(INH, l, Sign::Inhibitory, sp.ie, spec.w_ie);
        net.connect_channel(
            &stimulus_channel(k),
            l,
            Sign::Excitatory,
            sp.input,
            spec.w_in,
        );
    }
    net
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutSpec {
    pub size: u32,
    /// Size of each state group feeding the readout.
    pub state_size: u32,
    /// `close` recurrent excitation (slow).
    pub w_close_rec: f64,
    /// `e0` onto `close` (slow).
    pub w_set_close: f64,
    /// `e2` onto `close` (fast, inhibitory).
    pub w_reset_close: f64,
    /// `e2` onto `open`, fast excitatory half of the differentiator.
    pub w_open_fast: f64,
    /// `e2` onto `open`, slow inhibitory half of the differentiator.
    pub w_open_slow: f64,
    /// `close` onto `open` (fast, inhibitory).
    pub w_close_open: f64,
    pub core: usize,
    pub config: CoreConfig,
}

impl Default for ReadoutSpec {
    fn default() -> Self {
        Self {
            size: 8,
            state_size: 16,
            w_close_rec: 0.064,
            w_set_close: 0.02,
            w_reset_close: 1.0,
            w_open_fast: 0.6,
            w_open_slow: 0.016,
            w_close_open: 1.0,
            core: STATE_CORE,
            config: state_core_config(),
        }
    }
}

pub fn build_readout(spec: &ReadoutSpec) -> NetworkSpec {
    let mut net = NetworkSpec::new().with_core(spec.core, spec.config);
    net.add_population(OPEN, spec.core, spec.size);
    net.add_population(CLOSE, spec.core, spec.size);
    let mut link = |pre: &str, post: &str, sign, speed, w: f64| {
        net.synapses.extend(all_to_all(
            pre,
            pre_size(pre, spec),
            post,
            spec.size,
            sign,
            speed,
            w,
        ));
    };
    link(
        CLOSE,
        CLOSE,
        Sign::Excitatory,
        Speed::Slow,
        spec.w_close_rec,
    );
    link("e0", CLOSE, Sign::Excitatory, Speed::Slow, spec.w_set_close);
    link(
        "e2",
        CLOSE,
        Sign::Inhibitory,
        Speed::Fast,
        spec.w_reset_close,
    );
    link("e2", OPEN, Sign::Excitatory, Speed::Fast, spec.w_open_fast);
    link("e2", OPEN, Sign::Inhibitory, Speed::Slow, spec.w_open_slow);
    link(
        CLOSE,
        OPEN,
        Sign::Inhibitory,
        Speed::Fast,
        spec.w_close_open,
    );
    net
}

fn pre_size(pop: &str, spec: &ReadoutSpec) -> u32 {
    if pop == OPEN || pop == CLOSE {
        spec.size
    } else {
        spec.state_size
    }
}

fn all_to_all(
    pre: &str,
    n_pre: u32,
    post: &str,
    n_post: u32,
    sign: Sign,
    speed: Speed,
    weight: f64,
) -> Vec<crate::fabric::Synapse> {
    use crate::fabric::{NeuronRef, Source, Synapse};
    let mut out = Vec::with_capacity((n_pre * n_post) as usize);
    for i in 0..n_pre {
        for j in 0..n_post {
            out.push(Synapse {
                pre: Source::Neuron(NeuronRef::new(pre, i)),
                post: NeuronRef::new(post, j),
                sign,
                speed,
                weight,
            });
        }
    }
    out
}

/// Label of the single population above `threshold_hz` over `[t0, t1)`.
pub fn read_state(
    log: &EventLog,
    labels: &[&str],
    window: (u64, u64),
    threshold_hz: f64,
) -> Result<Option<String>> {
    let (t0, t1) = window;
    if t1 <= t0 {
        return Err(Error::InvalidParams(
            "decoding window must be non-empty".into(),
        ));
    }
    let mut active = Vec::new();
    for l in labels {
        let r = log.rate(l, t0, t1)?;
        if r > threshold_hz {
            active.push((*l, r));
        }
    }
    match active.len() {
        0 => Ok(None),
        1 => Ok(Some(active[0].0.to_string())),
        _ => Err(Error::Exclusivity(format!(
            "{} active in [{t0}, {t1}) us",
            active
                .iter()
                .map(|(l, r)| format!("{l} at {r:.1} Hz"))
                .collect::<Vec<_>>()
                .join(", ")
        ))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    Open,
    Close,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Open => "OPEN",
            Action::Close => "CLOSE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "OPEN" => Some(Action::Open),
            "CLOSE" => Some(Action::Close),
            _ => None,
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A decision in simulation time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Command {
    pub t_us: u64,
    pub action: Action,
}

/// Compare the `open` and `close` rates over the window; a change of
/// action is emitted at the window end, ties hold.
pub fn decide(
    log: &EventLog,
    readout: (&str, &str),
    window: (u64, u64),
    prev: Action,
) -> Result<Option<Command>> {
    let (t0, t1) = window;
    if t1 <= t0 {
        return Err(Error::InvalidParams(
            "decision window must be non-empty".into(),
        ));
    }
    let open = log.rate(readout.0, t0, t1)?;
    let close = log.rate(readout.1, t0, t1)?;
    let action = if open > close {
        Action::Open
    } else if close > open {
        Action::Close
    } else {
        return Ok(None);
    };
    Ok((action != prev).then_some(Command { t_us: t1, action }))
}

/// Settings of the persistence search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneSettings {
    pub w_ee_grid: Vec<f64>,
    pub target_hz: (f64, f64),
    /// Simulated time after the stimulus.
    pub horizon_s: f64,
    pub stimulus_hz: f64,
    pub stimulus_ms: f64,
    pub tolerance: f64,
    pub mismatch: MismatchModel,
}

impl Default for TuneSettings {
    fn default() -> Self {
        Self {
            w_ee_grid: (0..=16).map(|k| 0.024 + 0.001 * k as f64).collect(),
            target_hz: (30.0, 80.0),
            horizon_s: 10.0,
            stimulus_hz: 200.0,
            stimulus_ms: 1000.0,
            tolerance: 0.3,
            mismatch: MismatchModel::none(0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Persistence {
    /// Mean rate of the stimulated group over the post-stimulus horizon.
    pub mean_hz: f64,
    /// Time after stimulus offset during which every 1 s bin stays within
    /// the tolerance band around the mean.
    pub persisted_s: f64,
    pub bins: Vec<f64>,
}

/// Stimulate `e0` and measure how long its rate stays near its mean.
pub fn measure_persistence(
    spec: &WtaSpec,
    settings: &TuneSettings,
    reference_s: f64,
) -> Result<Persistence> {
    let net = build_wta(spec);
    let stim = [Stimulus::poisson(
        &stimulus_channel(0),
        settings.stimulus_hz,
        0.0,
        settings.stimulus_ms,
    )];
    let cfg = SimConfig {
        duration_ms: settings.stimulus_ms + settings.horizon_s * 1000.0,
        mismatch: settings.mismatch,
        ..SimConfig::default()
    };
    let log = run_simulation(&net, &stim, &cfg)?;
    Ok(persistence_of(&log, STATE_LABELS[0], settings, reference_s))
}

/// Persistence of `label` after the stimulus, relative to its mean rate
/// over the first `reference_s` seconds of the hold.
pub fn persistence_of(
    log: &EventLog,
    label: &str,
    settings: &TuneSettings,
    reference_s: f64,
) -> Persistence {
    let t0 = (settings.stimulus_ms * 1000.0) as u64;
    let t1 = t0 + (settings.horizon_s * 1e6) as u64;
    let bins = log
        .binned_rates(label, t0, t1, 1_000_000)
        .unwrap_or_default();
    let n_ref = (reference_s.round() as usize).clamp(1, bins.len().max(1));
    let mean_hz = bins.iter().take(n_ref).sum::<f64>() / n_ref as f64;
    let lo = mean_hz * (1.0 - settings.tolerance);
    let hi = mean_hz * (1.0 + settings.tolerance);
    let ok = bins
        .iter()
        .take_while(|&&r| mean_hz > 0.0 && r >= lo && r <= hi)
        .count();
    Persistence {
        mean_hz,
        persisted_s: ok as f64,
        bins,
    }
}

/// Grid search over the recurrent weight for a sustained rate inside the
/// target band that persists over the whole horizon; among those, the one
/// closest to the centre of the band.
pub fn tune_attractor(spec: &WtaSpec, settings: &TuneSettings) -> Result<(WtaSpec, Persistence)> {
    let candidates: Vec<WtaSpec> = settings
        .w_ee_grid
        .iter()
        .map(|&w_ee| WtaSpec {
            w_ee,
            ..spec.clone()
        })
        .collect();
    let reference = settings.horizon_s.min(60.0);
    let results =
        crate::exec::try_map(&candidates, |c| measure_persistence(c, settings, reference))?;
    let centre = 0.5 * (settings.target_hz.0 + settings.target_hz.1);
    let in_band =
        |p: &Persistence| p.mean_hz >= settings.target_hz.0 && p.mean_hz <= settings.target_hz.1;
    let best = candidates
        .iter()
        .zip(&results)
        .filter(|(_, p)| in_band(p) && p.persisted_s >= settings.horizon_s.floor())
        .min_by(|a, b| {
            (a.1.mean_hz - centre)
                .abs()
                .total_cmp(&(b.1.mean_hz - centre).abs())
        });
    match best {
        Some((s, p)) => Ok((s.clone(), p.clone())),
        None => {
            let near = results
                .iter()
                .max_by(|a, b| a.persisted_s.total_cmp(&b.persisted_s))
                .cloned()
                .unwrap_or(Persistence {
                    mean_hz: 0.0,
                    persisted_s: 0.0,
                    bins: Vec::new(),
                });
            Err(Error::Tuning {
                best_persistence_s: near.persisted_s,
                best_rate_hz: near.mean_hz,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::{validate_network, SpikeEvent};

    fn log_with(rates: &[(&str, u32)]) -> EventLog {
        // each population of 1 neuron firing `n` times in [0, 1 s)
        let mut events = Vec::new();
        let mut pops = Vec::new();
        for (k, (name, n)) in rates.iter().enumerate() {
            pops.push(crate::fabric::PopRange {
                name: name.to_string(),
                start: k as u32,
                len: 1,
                core: 0,
            });
            for s in 0..*n {
                events.push(SpikeEvent {
                    neuron: k as u32,
                    t_us: s as u64 * 1_000_000 / *n as u64,
                });
            }
        }
        let mut log = EventLog::from_events(events);
        log.pops = pops;
        log
    }

    #[test]
    fn read_state_cases() {
        let w = (0, 1_000_000);
        let silent = log_with(&[("e0", 0), ("e1", 0), ("e2", 0)]);
        assert_eq!(read_state(&silent, &STATE_LABELS, w, 10.0).unwrap(), None);
        let e2 = log_with(&[("e0", 1), ("e1", 0), ("e2", 50)]);
        assert_eq!(
            read_state(&e2, &STATE_LABELS, w, 10.0).unwrap().as_deref(),
            Some("e2")
        );
        let clash = log_with(&[("e0", 12), ("e1", 11), ("e2", 0)]);
        assert!(matches!(
            read_state(&clash, &STATE_LABELS, w, 10.0),
            Err(Error::Exclusivity(_))
        ));
    }

    #[test]
    fn decide_cases() {
        let w = (0, 1_000_000);
        let log = log_with(&[(OPEN, 40), (CLOSE, 5)]);
        assert_eq!(
            decide(&log, (OPEN, CLOSE), w, Action::Close).unwrap(),
            Some(Command {
                t_us: 1_000_000,
                action: Action::Open
            })
        );
        assert_eq!(decide(&log, (OPEN, CLOSE), w, Action::Open).unwrap(), None);
        let tie = log_with(&[(OPEN, 7), (CLOSE, 7)]);
        assert_eq!(decide(&tie, (OPEN, CLOSE), w, Action::Close).unwrap(), None);
        assert_eq!(decide(&tie, (OPEN, CLOSE), w, Action::Open).unwrap(), None);
    }

    #[test]
    fn fragments_fit_the_fabric() {
        let net = build_wta(&WtaSpec::default()).merge(build_readout(&ReadoutSpec::default()));
        assert!(validate_network(&net, &Default::default()).is_empty());
    }
}
