//! Fixed-step global simulation loop.
//!
//! Per step `k` (start time `t_k = k * dt`):
//! 1. synaptic accumulators decay by their per-core factor;
//! 2. spikes emitted during step `k-1` are delivered (one-step axonal delay),
//!    external channel events falling in `[t_k, t_k + dt)` are delivered
//!    without delay;
//! 3. every neuron integrates its rectified net input and may spike; the
//!    spike is stamped `t_k + dt`.
//!
//! Neurons are visited in id order and the only randomness is the seeded
//! Poisson generator, so a run is a pure function of its inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::compiled::Edge;
use super::{
    apply_mismatch, CompiledNetwork, EventLog, FabricLimits, MismatchModel, NetworkSpec, SpikeEvent,
};
use crate::error::{Error, Result};
use crate::neuron::{dt_us, MembraneStep, NeuronId, DIVERGENCE_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StimulusKind {
    /// Constant current injected into every neuron of the target population.
    Current { amplitude: f64 },
    /// Poisson spike train on the target channel.
    Poisson { rate_hz: f64 },
    /// Periodic spike train on the target channel, first spike at `start`.
    Regular { rate_hz: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    /// Population name for currents, channel name for spike trains.
    pub target: String,
    pub kind: StimulusKind,
    pub start_ms: f64,
    pub end_ms: f64,
}

impl Stimulus {
    pub fn current(pop: &str, amplitude: f64, start_ms: f64, end_ms: f64) -> Self {
        Self {
            target: pop.into(),
            kind: StimulusKind::Current { amplitude },
            start_ms,
            end_ms,
        }
    }

    pub fn poisson(channel: &str, rate_hz: f64, start_ms: f64, end_ms: f64) -> Self {
        Self {
            target: channel.into(),
            kind: StimulusKind::Poisson { rate_hz },
            start_ms,
            end_ms,
        }
    }

    pub fn regular(channel: &str, rate_hz: f64, start_ms: f64, end_ms: f64) -> Self {
        Self {
            target: channel.into(),
            kind: StimulusKind::Regular { rate_hz },
            start_ms,
            end_ms,
        }
    }

    fn span_us(&self) -> (u64, u64) {
        (ms_to_us(self.start_ms), ms_to_us(self.end_ms))
    }
}

fn ms_to_us(ms: f64) -> u64 {
    (ms * 1000.0).round().max(0.0) as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt_ms: f64,
    pub duration_ms: f64,
    pub mismatch: MismatchModel,
    #[serde(default)]
    pub limits: FabricLimits,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_ms: 0.1,
            duration_ms: 1000.0,
            mismatch: MismatchModel::default(),
            limits: FabricLimits::default(),
        }
    }
}

/// Validate, apply mismatch, compile and run.
pub fn run_simulation(
    spec: &NetworkSpec,
    stimuli: &[Stimulus],
    cfg: &SimConfig,
) -> Result<EventLog> {
    if !(cfg.duration_ms > 0.0) {
        return Err(Error::InvalidParams(format!(
            "duration must be > 0, got {}",
            cfg.duration_ms
        )));
    }
    super::ensure_valid(spec, &cfg.limits)?;
    let spec = apply_mismatch(spec, &cfg.mismatch)?;
    let net = CompiledNetwork::compile(&spec, &cfg.limits)?;
    Simulator::new(&net, stimuli, cfg.dt_ms, cfg.mismatch.seed)?.run(ms_to_us(cfg.duration_ms))
}

/// Change point of the injected current of one population.
#[derive(Clone, Copy, Debug)]
struct CurrentSegment {
    pop: usize,
    start: u64,
    end: u64,
    amplitude: f64,
}

/// Values this small are zero for every purpose here; keeping them would
/// leave long decays in subnormal arithmetic.
const FLUSH_BELOW: f64 = 1e-30;

#[inline]
fn flush(x: f64) -> f64 {
    if x.abs() < FLUSH_BELOW {
        0.0
    } else {
        x
    }
}

pub struct Simulator<'a> {
    net: &'a CompiledNetwork,
    dt_us: u64,
    step: Vec<MembraneStep>,
    decay: Vec<[f64; 4]>,
    pop_of: Vec<u32>,
    currents: Vec<CurrentSegment>,
    boundaries: Vec<u64>,
    channel_events: Vec<(u64, usize)>,
}

impl<'a> Simulator<'a> {
    pub fn new(
        net: &'a CompiledNetwork,
        stimuli: &[Stimulus],
        dt_ms: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(dt_ms > 0.0) {
            return Err(Error::InvalidParams(format!("dt must be > 0, got {dt_ms}")));
        }
        let dt = dt_us(dt_ms);
        if dt == 0 {
            return Err(Error::InvalidParams("dt must be at least 1 us".into()));
        }
        let step = net
            .params
            .iter()
            .map(|p| MembraneStep::new(p, dt_ms))
            .collect();
        let decay = net
            .tau_syn
            .iter()
            .map(|&[fast, slow]| {
                let (f, s) = ((-dt_ms / fast).exp(), (-dt_ms / slow).exp());
                [f, s, f, s]
            })
            .collect();
        let mut pop_of = vec![0u32; net.n_neurons()];
        for (k, p) in net.pops.iter().enumerate() {
            for id in p.ids() {
                pop_of[id as usize] = k as u32;
            }
        }

        let mut currents = Vec::new();
        let mut channel_events = Vec::new();
        for (idx, s) in stimuli.iter().enumerate() {
            let (start, end) = s.span_us();
            match s.kind {
                StimulusKind::Current { amplitude } => {
                    let pop = net
                        .pops
                        .iter()
                        .position(|p| p.name == s.target)
                        .ok_or_else(|| {
                            Error::UnknownNeuron(format!("stimulus population {}", s.target))
                        })?;
                    currents.push(CurrentSegment {
                        pop,
                        start,
                        end,
                        amplitude,
                    });
                }
                StimulusKind::Poisson { rate_hz } | StimulusKind::Regular { rate_hz } => {
                    let ch = net.channel_index(&s.target).ok_or_else(|| {
                        Error::UnknownNeuron(format!("stimulus channel {}", s.target))
                    })?;
                    if rate_hz <= 0.0 {
                        continue;
                    }
                    if matches!(s.kind, StimulusKind::Regular { .. }) {
                        let period = 1e6 / rate_hz;
                        let mut k = 0u64;
                        loop {
                            let t = start + (k as f64 * period).round() as u64;
                            if t >= end {
                                break;
                            }
                            channel_events.push((t, ch));
                            k += 1;
                        }
                    } else {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream(1 + idx as u64);
                        let exp = Exp::new(rate_hz).expect("positive rate");
                        let mut t = start as f64;
                        loop {
                            t += exp.sample(&mut rng) * 1e6;
                            if t >= end as f64 {
                                break;
                            }
                            channel_events.push((t as u64, ch));
                        }
                    }
                }
            }
        }
        channel_events.sort_unstable();
        let mut boundaries: Vec<u64> = currents.iter().flat_map(|c| [c.start, c.end]).collect();
        boundaries.sort_unstable();
        boundaries.dedup();

        Ok(Self {
            net,
            dt_us: dt,
            step,
            decay,
            pop_of,
            currents,
            boundaries,
            channel_events,
        })
    }

    fn injection_at(&self, t: u64, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for c in &self.currents {
            if c.start <= t && t < c.end {
                out[c.pop] += c.amplitude;
            }
        }
    }

    pub fn run(&self, duration_us: u64) -> Result<EventLog> {
        let net = self.net;
        let n = net.n_neurons();
        let dt = self.dt_us;
        let n_steps = duration_us.div_ceil(dt);

        let mut acc = vec![[0.0f64; 4]; n];
        let mut i_mem = vec![0.0f64; n];
        let mut refr_until = vec![0u64; n];
        let refr_us: Vec<u64> = net.params.iter().map(|p| p.refractory_us()).collect();
        let mut inj_pop = vec![0.0f64; net.pops.len()];
        let mut fired: Vec<NeuronId> = Vec::new();
        let mut fired_next: Vec<NeuronId> = Vec::new();
        let mut events = Vec::new();
        let mut next_boundary = 0usize;
        let mut next_chan = 0usize;

        let deliver = |acc: &mut [[f64; 4]], edges: &[Edge]| {
            for e in edges {
                let post = e.post as usize;
                let a = &mut acc[post][e.slot as usize];
                *a = (*a + e.weight).min(net.i_syn_max[post]);
            }
        };

        for k in 0..n_steps {
            let t = k * dt;
            for (a, d) in acc.iter_mut().zip(&self.decay) {
                for j in 0..4 {
                    a[j] = flush(a[j] * d[j]);
                }
            }
            for &src in &fired {
                deliver(&mut acc, net.out_edges(src));
            }
            while next_chan < self.channel_events.len() && self.channel_events[next_chan].0 < t + dt
            {
                deliver(
                    &mut acc,
                    net.channel_edges(self.channel_events[next_chan].1),
                );
                next_chan += 1;
            }
            if next_boundary < self.boundaries.len() && self.boundaries[next_boundary] <= t {
                while next_boundary < self.boundaries.len() && self.boundaries[next_boundary] <= t {
                    next_boundary += 1;
                }
                self.injection_at(t, &mut inj_pop);
            }

            fired_next.clear();
            for i in 0..n {
                if t < refr_until[i] {
                    i_mem[i] = net.params[i].i_reset;
                    continue;
                }
                let p = &net.params[i];
                let a = &acc[i];
                let i_in = a[0] + a[1] - a[2] - a[3] + inj_pop[self.pop_of[i] as usize];
                let drive = (i_in + p.i_dc).max(0.0);
                let s = &self.step[i];
                let v = s.decay * i_mem[i] + s.coef * drive;
                if !(v <= DIVERGENCE_CAP) {
                    return Err(Error::Divergence {
                        neuron: Some(i as NeuronId),
                        t_us: t,
                        i_mem: v,
                    });
                }
                if v >= p.i_spike_threshold {
                    i_mem[i] = p.i_reset;
                    refr_until[i] = t + dt + refr_us[i];
                    fired_next.push(i as NeuronId);
                    events.push(SpikeEvent {
                        neuron: i as NeuronId,
                        t_us: t + dt,
                    });
                } else {
                    i_mem[i] = flush(v.max(0.0));
                }
            }
            std::mem::swap(&mut fired, &mut fired_next);
        }

        Ok(EventLog {
            events,
            pops: net.pops.clone(),
            duration_us: n_steps * dt,
        })
    }
}
