//! Chip-level organization: cores with shared parameters, populations,
//! CAM-limited fan-in, bounded fan-out, and the global simulation loop.

mod compiled;
mod log;
mod mismatch;
mod sim;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use compiled::{route_event, CompiledNetwork, Delivery, FanoutProfile, PopRange, Routing};
pub use log::{EventLog, SpikeEvent};
pub use mismatch::{apply_mismatch, MismatchModel};
pub use sim::{run_simulation, SimConfig, Stimulus, StimulusKind};

use crate::error::{Error, Result};
use crate::neuron::{NeuronParams, Sign, Speed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FabricLimits {
    pub n_cores: usize,
    pub neurons_per_core: usize,
    pub cam_slots_per_neuron: usize,
    pub max_fanout: usize,
}

impl Default for FabricLimits {
    fn default() -> Self {
        Self {
            n_cores: 4,
            neurons_per_core: 256,
            cam_slots_per_neuron: 64,
            max_fanout: 1024,
        }
    }
}

/// Parameters shared by every neuron and synapse of one core.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreConfig {
    pub neuron: NeuronParams,
    pub tau_fast_ms: f64,
    pub tau_slow_ms: f64,
    /// Saturation level of each synaptic current.
    pub i_syn_max: f64,
}

impl Default for CoreConfig {
    fn default() -> Self {
        Self {
            neuron: NeuronParams::default(),
            tau_fast_ms: 5.0,
            tau_slow_ms: 100.0,
            i_syn_max: 50.0,
        }
    }
}

impl CoreConfig {
    pub fn tau_syn_ms(&self, speed: Speed) -> f64 {
        match speed {
            Speed::Fast => self.tau_fast_ms,
            Speed::Slow => self.tau_slow_ms,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreEntry {
    pub id: usize,
    #[serde(flatten)]
    pub config: CoreConfig,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Population {
    pub name: String,
    pub core: usize,
    pub size: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeuronRef {
    pub pop: String,
    pub idx: u32,
}

impl NeuronRef {
    pub fn new(pop: impl Into<String>, idx: u32) -> Self {
        Self {
            pop: pop.into(),
            idx,
        }
    }
}

impl fmt::Display for NeuronRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.pop, self.idx)
    }
}

/// Presynaptic endpoint: an on-fabric neuron or an external input channel.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source {
    Neuron(NeuronRef),
    Channel { channel: String },
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Neuron(n) => n.fmt(f),
            Source::Channel { channel } => write!(f, "channel:{channel}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Synapse {
    pub pre: Source,
    pub post: NeuronRef,
    pub sign: Sign,
    pub speed: Speed,
    pub weight: f64,
}

/// Symbolic network description; neurons are addressed by population name
/// and index so fragments can be merged before compilation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    #[serde(default)]
    pub cores: Vec<CoreEntry>,
    #[serde(default)]
    pub populations: Vec<Population>,
    #[serde(default)]
    pub channels: Vec<String>,
    #[serde(default)]
    pub synapses: Vec<Synapse>,
    /// Per-neuron parameters after mismatch, in compiled id order.
    #[serde(skip)]
    pub effective_params: Option<Vec<NeuronParams>>,
}

impl NetworkSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_core(mut self, id: usize, config: CoreConfig) -> Self {
        self.set_core(id, config);
        self
    }

    pub fn set_core(&mut self, id: usize, config: CoreConfig) {
        self.cores.push(CoreEntry { id, config });
    }

    pub fn add_population(&mut self, name: impl Into<String>, core: usize, size: u32) {
        self.populations.push(Population {
            name: name.into(),
            core,
            size,
        });
    }

    pub fn add_channel(&mut self, name: impl Into<String>) {
        let name = name.into();
        if !self.channels.contains(&name) {
            self.channels.push(name);
        }
    }

    pub fn population(&self, name: &str) -> Option<&Population> {
        self.populations.iter().find(|p| p.name == name)
    }

    pub fn core_config(&self, id: usize) -> Option<&CoreConfig> {
        self.cores.iter().find(|c| c.id == id).map(|c| &c.config)
    }

    pub fn n_neurons(&self) -> usize {
        self.populations.iter().map(|p| p.size as usize).sum()
    }

    pub fn connect(&mut self, pre: Source, post: NeuronRef, sign: Sign, speed: Speed, weight: f64) {
        self.synapses.push(Synapse {
            pre,
            post,
            sign,
            speed,
            weight,
        });
    }

    /// All-to-all projection between two populations (self-pairs included
    /// when `pre == post`).
    pub fn connect_all(&mut self, pre: &str, post: &str, sign: Sign, speed: Speed, weight: f64) {
        let (n_pre, n_post) = (self.size_of(pre), self.size_of(post));
        for i in 0..n_pre {
            for j in 0..n_post {
                self.connect(
                    Source::Neuron(NeuronRef::new(pre, i)),
                    NeuronRef::new(post, j),
                    sign,
                    speed,
                    weight,
                );
            }
        }
    }

    /// Every neuron of `post` receives the channel once.
    pub fn connect_channel(
        &mut self,
        channel: &str,
        post: &str,
        sign: Sign,
        speed: Speed,
        weight: f64,
    ) {
        self.add_channel(channel);
        for j in 0..self.size_of(post) {
            self.connect(
                Source::Channel {
                    channel: channel.to_string(),
                },
                NeuronRef::new(post, j),
                sign,
                speed,
                weight,
            );
        }
    }

    fn size_of(&self, pop: &str) -> u32 {
        self.population(pop).map_or(0, |p| p.size)
    }

    /// Concatenate another fragment. Core entries are kept side by side so
    /// that [`validate_network`] can flag conflicting core parameters.
    pub fn merge(mut self, other: NetworkSpec) -> NetworkSpec {
        for c in other.cores {
            if !self.cores.contains(&c) {
                self.cores.push(c);
            }
        }
        self.populations.extend(other.populations);
        for ch in other.channels {
            self.add_channel(ch);
        }
        self.synapses.extend(other.synapses);
        self.effective_params = None;
        self
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

/// One structural problem found by [`validate_network`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    CamOverflow {
        neuron: String,
        count: usize,
        limit: usize,
    },
    FanoutOverflow {
        source: String,
        count: usize,
        limit: usize,
    },
    CoreParamDivergence {
        core: usize,
    },
    MissingCoreConfig {
        core: usize,
    },
    CoreOutOfRange {
        population: String,
        core: usize,
        n_cores: usize,
    },
    CoreCapacity {
        core: usize,
        count: usize,
        limit: usize,
    },
    DuplicatePopulation {
        name: String,
    },
    UnknownPopulation {
        name: String,
    },
    IndexOutOfRange {
        neuron: String,
        size: u32,
    },
    UnknownChannel {
        name: String,
    },
    InvalidParams {
        what: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::CamOverflow {
                neuron,
                count,
                limit,
            } => {
                write!(f, "{neuron}: cam_overflow, {count} > {limit}")
            }
            Violation::FanoutOverflow {
                source,
                count,
                limit,
            } => {
                write!(f, "{source}: fanout_overflow, {count} > {limit}")
            }
            Violation::CoreParamDivergence { core } => {
                write!(f, "core {core}: conflicting shared parameters")
            }
            Violation::MissingCoreConfig { core } => write!(f, "core {core}: no parameters"),
            Violation::CoreOutOfRange {
                population,
                core,
                n_cores,
            } => write!(
                f,
                "{population}: core {core} out of range (n_cores={n_cores})"
            ),
            Violation::CoreCapacity { core, count, limit } => {
                write!(f, "core {core}: {count} neurons > {limit}")
            }
            Violation::DuplicatePopulation { name } => write!(f, "{name}: duplicate population"),
            Violation::UnknownPopulation { name } => write!(f, "{name}: unknown population"),
            Violation::IndexOutOfRange { neuron, size } => {
                write!(f, "{neuron}: index out of range (size {size})")
            }
            Violation::UnknownChannel { name } => write!(f, "{name}: unknown channel"),
            Violation::InvalidParams { what } => write!(f, "invalid parameters: {what}"),
        }
    }
}

/// Collect every violation of the fabric limits; an empty vector means the
/// spec can be compiled and simulated.
pub fn validate_network(spec: &NetworkSpec, limits: &FabricLimits) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut by_core: BTreeMap<usize, Vec<&CoreConfig>> = BTreeMap::new();
    for c in &spec.cores {
        by_core.entry(c.id).or_default().push(&c.config);
    }
    for (&core, configs) in &by_core {
        if configs.windows(2).any(|w| w[0] != w[1]) {
            out.push(Violation::CoreParamDivergence { core });
        }
        if let Err(e) = configs[0].neuron.validate() {
            out.push(Violation::InvalidParams {
                what: e.to_string(),
            });
        }
        let c = configs[0];
        if !(c.tau_fast_ms > 0.0 && c.tau_fast_ms < c.tau_slow_ms && c.i_syn_max > 0.0) {
            out.push(Violation::InvalidParams {
                what: format!("core {core}: need 0 < tau_fast < tau_slow and i_syn_max > 0"),
            });
        }
    }

    let mut sizes: HashMap<&str, u32> = HashMap::new();
    let mut per_core: BTreeMap<usize, usize> = BTreeMap::new();
    for p in &spec.populations {
        if sizes.insert(&p.name, p.size).is_some() {
            out.push(Violation::DuplicatePopulation {
                name: p.name.clone(),
            });
        }
        if p.core >= limits.n_cores {
            out.push(Violation::CoreOutOfRange {
                population: p.name.clone(),
                core: p.core,
                n_cores: limits.n_cores,
            });
        }
        if !by_core.contains_key(&p.core) {
            out.push(Violation::MissingCoreConfig { core: p.core });
        }
        *per_core.entry(p.core).or_default() += p.size as usize;
    }
    for (&core, &count) in &per_core {
        if count > limits.neurons_per_core {
            out.push(Violation::CoreCapacity {
                core,
                count,
                limit: limits.neurons_per_core,
            });
        }
    }

    let channels: BTreeSet<&str> = spec.channels.iter().map(String::as_str).collect();
    let mut unknown: BTreeSet<String> = BTreeSet::new();
    let mut check_ref = |r: &NeuronRef, out: &mut Vec<Violation>| match sizes.get(r.pop.as_str()) {
        None => {
            if unknown.insert(r.pop.clone()) {
                out.push(Violation::UnknownPopulation {
                    name: r.pop.clone(),
                });
            }
            false
        }
        Some(&size) if r.idx >= size => {
            out.push(Violation::IndexOutOfRange {
                neuron: r.to_string(),
                size,
            });
            false
        }
        Some(_) => true,
    };

    let mut fan_in: BTreeMap<&NeuronRef, usize> = BTreeMap::new();
    let mut fan_out: BTreeMap<&NeuronRef, usize> = BTreeMap::new();
    for s in &spec.synapses {
        if !(s.weight > 0.0 && s.weight.is_finite()) {
            out.push(Violation::InvalidParams {
                what: format!("{} -> {}: weight must be > 0", s.pre, s.post),
            });
        }
        if check_ref(&s.post, &mut out) {
            *fan_in.entry(&s.post).or_default() += 1;
        }
        match &s.pre {
            Source::Neuron(r) => {
                if check_ref(r, &mut out) {
                    *fan_out.entry(r).or_default() += 1;
                }
            }
            Source::Channel { channel } => {
                if !channels.contains(channel.as_str()) {
                    out.push(Violation::UnknownChannel {
                        name: channel.clone(),
                    });
                }
            }
        }
    }
    for (n, &count) in &fan_in {
        if count > limits.cam_slots_per_neuron {
            out.push(Violation::CamOverflow {
                neuron: n.to_string(),
                count,
                limit: limits.cam_slots_per_neuron,
            });
        }
    }
    for (n, &count) in &fan_out {
        if count > limits.max_fanout {
            out.push(Violation::FanoutOverflow {
                source: n.to_string(),
                count,
                limit: limits.max_fanout,
            });
        }
    }
    out
}

pub fn ensure_valid(spec: &NetworkSpec, limits: &FabricLimits) -> Result<()> {
    let v = validate_network(spec, limits);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Fabric(v))
    }
}
