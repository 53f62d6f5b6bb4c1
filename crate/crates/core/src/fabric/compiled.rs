use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ensure_valid, FabricLimits, NetworkSpec, Source, SpikeEvent};
use crate::error::{Error, Result};
use crate::neuron::{NeuronId, NeuronParams, Sign, Speed, SynapseParams};

/// Contiguous id range of one population in a compiled network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopRange {
    pub name: String,
    pub start: NeuronId,
    pub len: u32,
    pub core: usize,
}

impl PopRange {
    pub fn contains(&self, id: NeuronId) -> bool {
        id >= self.start && id < self.start + self.len
    }

    pub fn ids(&self) -> std::ops::Range<NeuronId> {
        self.start..self.start + self.len
    }
}

/// Accumulator slot of a synapse: excitatory/inhibitory x fast/slow.
pub(crate) fn slot(sign: Sign, speed: Speed) -> u8 {
    match (sign, speed) {
        (Sign::Excitatory, Speed::Fast) => 0,
        (Sign::Excitatory, Speed::Slow) => 1,
        (Sign::Inhibitory, Speed::Fast) => 2,
        (Sign::Inhibitory, Speed::Slow) => 3,
    }
}

fn slot_kind(slot: u8) -> (Sign, Speed) {
    match slot {
        0 => (Sign::Excitatory, Speed::Fast),
        1 => (Sign::Excitatory, Speed::Slow),
        2 => (Sign::Inhibitory, Speed::Fast),
        _ => (Sign::Inhibitory, Speed::Slow),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Edge {
    pub post: NeuronId,
    pub slot: u8,
    pub weight: f64,
}

/// Dense, index-based form of a validated [`NetworkSpec`].
#[derive(Clone, Debug)]
pub struct CompiledNetwork {
    pub pops: Vec<PopRange>,
    pub channels: Vec<String>,
    pub(crate) core_of: Vec<usize>,
    pub(crate) params: Vec<NeuronParams>,
    pub(crate) tau_syn: Vec<[f64; 2]>,
    pub(crate) i_syn_max: Vec<f64>,
    pub(crate) out_offsets: Vec<usize>,
    pub(crate) out_edges: Vec<Edge>,
    pub(crate) chan_offsets: Vec<usize>,
    pub(crate) chan_edges: Vec<Edge>,
}

impl CompiledNetwork {
    pub fn compile(spec: &NetworkSpec, limits: &FabricLimits) -> Result<Self> {
        ensure_valid(spec, limits)?;

        let mut pops = Vec::with_capacity(spec.populations.len());
        let mut index: HashMap<&str, (NeuronId, u32)> = HashMap::new();
        let mut next: NeuronId = 0;
        for p in &spec.populations {
            pops.push(PopRange {
                name: p.name.clone(),
                start: next,
                len: p.size,
                core: p.core,
            });
            index.insert(&p.name, (next, p.size));
            next += p.size;
        }
        let n = next as usize;

        let mut core_of = Vec::with_capacity(n);
        let mut params = Vec::with_capacity(n);
        let mut tau_syn = Vec::with_capacity(n);
        let mut i_syn_max = Vec::with_capacity(n);
        for p in &spec.populations {
            let cfg = spec
                .core_config(p.core)
                .expect("validated: every population's core is configured");
            for _ in 0..p.size {
                core_of.push(p.core);
                params.push(cfg.neuron);
                tau_syn.push([cfg.tau_fast_ms, cfg.tau_slow_ms]);
                i_syn_max.push(cfg.i_syn_max);
            }
        }
        if let Some(eff) = &spec.effective_params {
            if eff.len() != n {
                return Err(Error::InvalidParams(format!(
                    "effective parameter table has {} entries for {n} neurons",
                    eff.len()
                )));
            }
            params.clone_from(eff);
        }

        let resolve = |pop: &str, idx: u32| -> NeuronId { index[pop].0 + idx };
        let chan_index: HashMap<&str, usize> = spec
            .channels
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();

        let mut out: Vec<Vec<Edge>> = vec![Vec::new(); n];
        let mut chan: Vec<Vec<Edge>> = vec![Vec::new(); spec.channels.len()];
        for s in &spec.synapses {
            let edge = Edge {
                post: resolve(&s.post.pop, s.post.idx),
                slot: slot(s.sign, s.speed),
                weight: s.weight,
            };
            match &s.pre {
                Source::Neuron(r) => out[resolve(&r.pop, r.idx) as usize].push(edge),
                Source::Channel { channel } => chan[chan_index[channel.as_str()]].push(edge),
            }
        }
        let (out_offsets, out_edges) = flatten(out);
        let (chan_offsets, chan_edges) = flatten(chan);

        Ok(Self {
            pops,
            channels: spec.channels.clone(),
            core_of,
            params,
            tau_syn,
            i_syn_max,
            out_offsets,
            out_edges,
            chan_offsets,
            chan_edges,
        })
    }

    pub fn n_neurons(&self) -> usize {
        self.core_of.len()
    }

    pub fn pop(&self, name: &str) -> Option<&PopRange> {
        self.pops.iter().find(|p| p.name == name)
    }

    pub fn params(&self, id: NeuronId) -> &NeuronParams {
        &self.params[id as usize]
    }

    pub fn core_of(&self, id: NeuronId) -> usize {
        self.core_of[id as usize]
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    pub(crate) fn out_edges(&self, id: NeuronId) -> &[Edge] {
        let i = id as usize;
        &self.out_edges[self.out_offsets[i]..self.out_offsets[i + 1]]
    }

    pub(crate) fn channel_edges(&self, ch: usize) -> &[Edge] {
        &self.chan_edges[self.chan_offsets[ch]..self.chan_offsets[ch + 1]]
    }

    pub fn out_degree(&self, id: NeuronId) -> usize {
        self.out_edges(id).len()
    }

    /// Number of distinct cores reached by a neuron's outgoing synapses.
    pub fn cores_touched(&self, id: NeuronId) -> usize {
        let mut seen = [false; 64];
        let mut extra: Vec<usize> = Vec::new();
        let mut count = 0;
        for e in self.out_edges(id) {
            let c = self.core_of[e.post as usize];
            if c < seen.len() {
                if !seen[c] {
                    seen[c] = true;
                    count += 1;
                }
            } else if !extra.contains(&c) {
                extra.push(c);
                count += 1;
            }
        }
        count
    }

    /// The AER routing of one spike: every outgoing synapse of the source,
    /// and the number of distinct destination cores.
    pub fn route(&self, spike: &SpikeEvent) -> Result<Routing> {
        if spike.neuron as usize >= self.n_neurons() {
            return Err(Error::UnknownNeuron(spike.neuron.to_string()));
        }
        let deliveries = self
            .out_edges(spike.neuron)
            .iter()
            .map(|e| {
                let (sign, speed) = slot_kind(e.slot);
                let taus = self.tau_syn[e.post as usize];
                Delivery {
                    post: e.post,
                    params: SynapseParams {
                        sign,
                        speed,
                        weight: e.weight,
                        tau_syn_ms: match speed {
                            Speed::Fast => taus[0],
                            Speed::Slow => taus[1],
                        },
                    },
                }
            })
            .collect();
        Ok(Routing {
            deliveries,
            cores_touched: self.cores_touched(spike.neuron),
        })
    }

    /// Per-neuron routing counts used by the energy model.
    pub fn fanout_profile(&self) -> FanoutProfile {
        let n = self.n_neurons() as NeuronId;
        FanoutProfile {
            out_degree: (0..n).map(|i| self.out_degree(i) as u64).collect(),
            cores_touched: (0..n).map(|i| self.cores_touched(i) as u64).collect(),
        }
    }
}

fn flatten(lists: Vec<Vec<Edge>>) -> (Vec<usize>, Vec<Edge>) {
    let mut offsets = Vec::with_capacity(lists.len() + 1);
    let mut edges = Vec::new();
    offsets.push(0);
    for l in lists {
        edges.extend(l);
        offsets.push(edges.len());
    }
    (offsets, edges)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Delivery {
    pub post: NeuronId,
    pub params: SynapseParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Routing {
    pub deliveries: Vec<Delivery>,
    pub cores_touched: usize,
}

/// Out-degree (CAM matches) and destination-core count per neuron id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FanoutProfile {
    pub out_degree: Vec<u64>,
    pub cores_touched: Vec<u64>,
}

/// Route one spike against a symbolic spec (compiles it first).
pub fn route_event(
    spike: &SpikeEvent,
    spec: &NetworkSpec,
    limits: &FabricLimits,
) -> Result<Routing> {
    CompiledNetwork::compile(spec, limits)?.route(spike)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::{CoreConfig, NeuronRef};

    fn spec() -> NetworkSpec {
        let mut s = NetworkSpec::new()
            .with_core(0, CoreConfig::default())
            .with_core(1, CoreConfig::default());
        s.add_population("a", 0, 2);
        s.add_population("b", 1, 2);
        s.add_population("lonely", 0, 1);
        // a[0] -> a[1], b[0], b[1]
        s.connect(
            Source::Neuron(NeuronRef::new("a", 0)),
            NeuronRef::new("a", 1),
            Sign::Excitatory,
            Speed::Fast,
            1.0,
        );
        s.connect_all("a", "b", Sign::Inhibitory, Speed::Slow, 0.5);
        s.connect(
            Source::Neuron(NeuronRef::new("b", 1)),
            NeuronRef::new("b", 1),
            Sign::Excitatory,
            Speed::Slow,
            0.2,
        );
        s
    }

    fn limits() -> FabricLimits {
        FabricLimits::default()
    }

    #[test]
    fn routing_counts() {
        let net = CompiledNetwork::compile(&spec(), &limits()).unwrap();
        let r = net.route(&SpikeEvent { neuron: 0, t_us: 0 }).unwrap();
        assert_eq!(r.deliveries.len(), 3);
        assert_eq!(r.cores_touched, 2);
        assert_eq!(
            r.deliveries[1].params.tau_syn_ms,
            CoreConfig::default().tau_slow_ms
        );

        let lonely = net.pop("lonely").unwrap().start;
        let r = net
            .route(&SpikeEvent {
                neuron: lonely,
                t_us: 0,
            })
            .unwrap();
        assert!(r.deliveries.is_empty());
        assert_eq!(r.cores_touched, 0);

        let b1 = net.pop("b").unwrap().start + 1;
        let r = net
            .route(&SpikeEvent {
                neuron: b1,
                t_us: 0,
            })
            .unwrap();
        assert_eq!(r.deliveries.len(), 1);
        assert_eq!(r.deliveries[0].post, b1);
        assert_eq!(r.cores_touched, 1);
    }

    #[test]
    fn unknown_id_is_an_error() {
        let net = CompiledNetwork::compile(&spec(), &limits()).unwrap();
        assert!(matches!(
            net.route(&SpikeEvent {
                neuron: 99,
                t_us: 0
            }),
            Err(Error::UnknownNeuron(_))
        ));
    }

    #[test]
    fn symbolic_route_matches_compiled() {
        let r = route_event(&SpikeEvent { neuron: 0, t_us: 5 }, &spec(), &limits()).unwrap();
        assert_eq!(r.deliveries.len(), 3);
    }
}
