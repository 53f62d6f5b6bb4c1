//! Run configuration: built-in defaults, then the `--config` file, then
//! command-line flags. The resolved configuration is written back as the
//! run manifest, which is itself a valid `--config` file.

use std::path::{Path, PathBuf};

use irrisim_core::data::{IrrigationMode, SynthParams};
use irrisim_core::encoder::CropProfile;
use irrisim_core::pipeline::PipelineSpec;
use irrisim_core::power::{BudgetAssumption, EnergyConstants};
use irrisim_core::Error;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One second of network time per sensor sample.
    #[default]
    Compressed,
    /// One sensor interval of network time per sample.
    Realtime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    #[serde(with = "seed_repr")]
    pub seed: u64,
    pub cv: f64,
    pub crop: String,
    pub mode: Mode,
    pub dt_ms: f64,
    pub stride: usize,
    pub fill_gaps: bool,
    pub input: Option<PathBuf>,
    pub network: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub commands: Option<PathBuf>,
    pub self_compare: bool,
    pub traces: usize,
    pub eval_crops: Vec<String>,
    pub horizon_intervals: f64,
    pub versions: Versions,
    pub fi: FiConfig,
    pub profile: Option<CropProfile>,
    pub synth: Option<SynthSection>,
    pub pipeline: Option<PipelineSpec>,
    pub energy: EnergyConstants,
    pub budget: BudgetAssumption,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            seed: 0,
            cv: 0.1,
            crop: "apple".into(),
            mode: Mode::Compressed,
            dt_ms: 0.1,
            stride: 1,
            fill_gaps: false,
            input: None,
            network: None,
            events: None,
            commands: None,
            self_compare: false,
            traces: 20,
            eval_crops: vec!["apple".into(), "kiwi".into()],
            horizon_intervals: irrisim_core::oracle::DEFAULT_HORIZON_INTERVALS,
            versions: Versions::default(),
            fi: FiConfig::default(),
            profile: None,
            synth: None,
            pipeline: None,
            energy: EnergyConstants::default(),
            budget: BudgetAssumption::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Versions {
    pub irrisim: String,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            irrisim: irrisim_core::VERSION.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiConfig {
    pub points: usize,
    /// Upper end of the encoder sweep; the state neuron is swept to
    /// three times its rheobase.
    pub i_max: f64,
    pub warmup_ms: f64,
    pub window_ms: f64,
}

impl Default for FiConfig {
    fn default() -> Self {
        Self {
            points: 121,
            i_max: 1.2,
            warmup_ms: 100.0,
            window_ms: 2000.0,
        }
    }
}

/// Synthetic trace parameters; the seed is the run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub drydown_rate_kpa_per_day: f64,
    pub irrigation_jump_kpa: f64,
    pub noise_sd_kpa: f64,
    pub diurnal_amp_kpa: f64,
    pub days: f64,
    pub start_kpa: f64,
    pub interval_s: i64,
    pub start_unix_s: i64,
    pub mode: IrrigationMode,
}

impl SynthSection {
    pub fn from_params(p: &SynthParams) -> Self {
        Self {
            drydown_rate_kpa_per_day: p.drydown_rate_kpa_per_day,
            irrigation_jump_kpa: p.irrigation_jump_kpa,
            noise_sd_kpa: p.noise_sd_kpa,
            diurnal_amp_kpa: p.diurnal_amp_kpa,
            days: p.days,
            start_kpa: p.start_kpa,
            interval_s: p.interval_s,
            start_unix_s: p.start_unix_s,
            mode: p.mode,
        }
    }

    pub fn params(&self, seed: u64) -> SynthParams {
        SynthParams {
            drydown_rate_kpa_per_day: self.drydown_rate_kpa_per_day,
            irrigation_jump_kpa: self.irrigation_jump_kpa,
            noise_sd_kpa: self.noise_sd_kpa,
            diurnal_amp_kpa: self.diurnal_amp_kpa,
            seed,
            days: self.days,
            start_kpa: self.start_kpa,
            interval_s: self.interval_s,
            mode: self.mode,
            start_unix_s: self.start_unix_s,
        }
    }
}

/// Values given on the command line; `None` leaves the config alone.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub cv: Option<f64>,
    pub crop: Option<String>,
    pub stride: Option<usize>,
    pub mode: Option<Mode>,
    pub dt_ms: Option<f64>,
    pub fill_gaps: bool,
    pub input: Option<PathBuf>,
    pub network: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub commands: Option<PathBuf>,
    pub self_compare: bool,
    pub traces: Option<usize>,
    pub e_spike_pj: Option<u64>,
    pub e_enc_pj: Option<u64>,
    pub e_br_pj: Option<u64>,
    pub e_rt_pj: Option<u64>,
    pub e_pulse_pj: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())).into())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(crop) = &o.crop {
            if *crop != self.crop {
                // crop-derived sections no longer apply
                self.pipeline = None;
                self.synth = None;
                if crop != "custom" {
                    self.profile = None;
                }
            }
            self.crop = crop.clone();
        }
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = &o.$field { self.$field = v.clone().into(); } )* };
        }
        set!(seed, cv, stride, mode, dt_ms, traces);
        if o.input.is_some() {
            self.input = o.input.clone();
        }
        if o.network.is_some() {
            self.network = o.network.clone();
        }
        if o.events.is_some() {
            self.events = o.events.clone();
        }
        if o.commands.is_some() {
            self.commands = o.commands.clone();
        }
        self.fill_gaps |= o.fill_gaps;
        self.self_compare |= o.self_compare;
        let e = &mut self.energy;
        for (dst, src) in [
            (&mut e.e_spike_pj, o.e_spike_pj),
            (&mut e.e_enc_pj, o.e_enc_pj),
            (&mut e.e_br_pj, o.e_br_pj),
            (&mut e.e_rt_pj, o.e_rt_pj),
            (&mut e.e_pulse_pj, o.e_pulse_pj),
        ] {
            if let Some(v) = src {
                *dst = v;
            }
        }
        self.versions = Versions::default();
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.dt_ms > 0.0) {
            return Err(CliError::usage(format!(
                "dt must be > 0 ms, got {}",
                self.dt_ms
            )));
        }
        if self.stride == 0 {
            return Err(CliError::usage("stride must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.cv) {
            return Err(CliError::usage(format!(
                "cv must be in [0, 1), got {}",
                self.cv
            )));
        }
        for p in [&self.input, &self.network, &self.events, &self.commands]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())).into());
            }
        }
        Ok(())
    }

    /// The crop profile named by `name`, taking `custom` from the config.
    pub fn profile_named(&self, name: &str) -> Result<CropProfile, CliError> {
        let p = if name == "custom" {
            self.profile.clone().ok_or_else(|| {
                CliError::usage("--crop custom needs a [profile] table in the config file")
            })?
        } else {
            CropProfile::by_name(name).ok_or_else(|| {
                CliError::usage(format!("unknown crop `{name}` (apple, kiwi or custom)"))
            })?
        };
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self)
            .map_err(|e| Error::Config(format!("cannot encode manifest: {e}")).into())
    }
}

/// Seeds are written as TOML integers when they fit, as strings otherwise.
mod seed_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*v) {
            Ok(i) => s.serialize_i64(i),
            Err(_) => s.serialize_str(&v.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(v),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}
