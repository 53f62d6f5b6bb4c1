//! Analog-to-spike conversion: three level-selective populations whose FI
//! curves are shifted so that each one switches on at a band boundary, with
//! backward inhibition from higher-level groups onto lower-level groups.
//!
//! Soil matric potential is mapped affinely and order-reversingly onto
//! `[0, c_max]`: wetter soil gives a smaller current. During a presentation
//! every encoder group receives `current + pedestal`; the pedestal keeps a
//! fully wet reading distinguishable from "no presentation".

use serde::{Deserialize, Serialize};

use crate::data::SmpSeries;
use crate::error::{Error, Result};
use crate::fabric::{CoreConfig, NetworkSpec};
use crate::neuron::{measure_rate, FiSettings, NeuronParams, Sign, Speed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropProfile {
    pub name: String,
    /// Irrigation starts when the reading drops below this (kPa).
    pub th_on: f64,
    /// Irrigation stops when the reading rises above this (kPa).
    pub th_off: f64,
    pub smp_floor: f64,
    pub smp_ceil: f64,
}

impl CropProfile {
    pub fn apple() -> Self {
        Self {
            name: "apple".into(),
            th_on: -60.0,
            th_off: -50.0,
            smp_floor: -100.0,
            smp_ceil: 0.0,
        }
    }

    pub fn kiwi() -> Self {
        Self {
            name: "kiwi".into(),
            th_on: -12.0,
            th_off: -5.0,
            smp_floor: -40.0,
            smp_ceil: 0.0,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "apple" => Some(Self::apple()),
            "kiwi" => Some(Self::kiwi()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = self.smp_floor < self.th_on
            && self.th_on < self.th_off
            && self.th_off <= self.smp_ceil
            && self.smp_ceil <= 0.0;
        if ordered {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "crop profile {}: need floor < th_on < th_off <= ceil <= 0, got {} / {} / {} / {}",
                self.name, self.smp_floor, self.th_on, self.th_off, self.smp_ceil
            )))
        }
    }
}

/// The affine map from kPa to input current.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rescale {
    floor: f64,
    ceil: f64,
    c_max: f64,
}

impl Rescale {
    pub fn new(profile: &CropProfile, c_max: f64) -> Result<Self> {
        profile.validate()?;
        if !(c_max > 0.0 && c_max.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "c_max must be > 0, got {c_max}"
            )));
        }
        Ok(Self {
            floor: profile.smp_floor,
            ceil: profile.smp_ceil,
            c_max,
        })
    }

    /// Unclamped image of `smp`.
    pub fn map(&self, smp: f64) -> f64 {
        self.c_max * (self.ceil - smp) / (self.ceil - self.floor)
    }

    /// Image of `smp` clamped into `[0, c_max]`, and whether clamping
    /// happened.
    pub fn apply(&self, smp: f64) -> (f64, bool) {
        let clamped = smp.clamp(self.floor, self.ceil);
        (self.map(clamped), clamped != smp)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RescaledSeries {
    pub currents: Vec<f64>,
    /// Indices of samples that fell outside the mapped range.
    pub clamped: Vec<usize>,
}

pub fn rescale_smp(
    series: &SmpSeries,
    profile: &CropProfile,
    c_max: f64,
) -> Result<RescaledSeries> {
    let map = Rescale::new(profile, c_max)?;
    let mut currents = Vec::with_capacity(series.len());
    let mut clamped = Vec::new();
    for (k, s) in series.samples.iter().enumerate() {
        let (c, was) = map.apply(s.smp_kpa);
        currents.push(c);
        if was {
            clamped.push(k);
        }
    }
    Ok(RescaledSeries { currents, clamped })
}

/// Band boundaries in current space: `[0, c_off)`, `[c_off, c_on)`,
/// `[c_on, c_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub c_off: f64,
    pub c_on: f64,
    pub c_max: f64,
}

impl Bands {
    pub fn from_profile(profile: &CropProfile, c_max: f64) -> Result<Self> {
        let map = Rescale::new(profile, c_max)?;
        Ok(Self {
            c_off: map.map(profile.th_off),
            c_on: map.map(profile.th_on),
            c_max,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if 0.0 <= self.c_off && self.c_off < self.c_on && self.c_on <= self.c_max {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("degenerate bands {self:?}")))
        }
    }

    /// Lower boundary of each band.
    pub fn lower(&self) -> [f64; 3] {
        [0.0, self.c_off, self.c_on]
    }

    /// Band index of a current; a value on a boundary belongs to the
    /// higher band.
    pub fn band_of(&self, c: f64) -> usize {
        if c >= self.c_on {
            2
        } else if c >= self.c_off {
            1
        } else {
            0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub bands: Bands,
    pub pop_size: u32,
    pub inh_size: u32,
    /// Added to the rescaled current during a presentation.
    pub pedestal: f64,
    /// Uncalibrated neuron parameters shared by the three encoder cores.
    pub base: NeuronParams,
    pub tau_fast_ms: f64,
    pub tau_slow_ms: f64,
    pub i_syn_max: f64,
    /// Group -> own interneurons (fast excitation).
    pub w_group_inh: f64,
    /// Interneurons -> every lower-level group (slow inhibition).
    pub w_backward: f64,
    /// Top interneurons -> middle interneurons (fast inhibition).
    pub w_disinhibit: f64,
    pub cores: [usize; 3],
    pub active_rate_hz: f64,
}

impl EncoderSpec {
    pub fn new(bands: Bands) -> Self {
        Self {
            bands,
            pop_size: 8,
            inh_size: 4,
            pedestal: 0.1,
            base: NeuronParams {
                tau_ms: 5.0,
                i_gain: 10_000.0,
                i_tau: 1.0,
                i_a: 0.0,
                i_spike_threshold: 1.0,
                i_reset: 0.0,
                refractory_ms: 5.0,
                i_dc: 0.0,
            },
            tau_fast_ms: 5.0,
            tau_slow_ms: 50.0,
            i_syn_max: 50.0,
            w_group_inh: 2.0,
            w_backward: 0.5,
            w_disinhibit: 2.0,
            cores: [0, 1, 2],
            active_rate_hz: 10.0,
        }
    }

    pub fn for_profile(profile: &CropProfile) -> Result<Self> {
        Ok(Self::new(Bands::from_profile(profile, 1.0)?))
    }

    /// Input current (rescaled value plus pedestal) at which group `band`
    /// should reach the active rate. The lowest group's boundary sits
    /// halfway up the pedestal so that any presentation activates it.
    pub fn targets(&self) -> [f64; 3] {
        let lower = self.bands.lower();
        [
            0.5 * self.pedestal,
            lower[1] + self.pedestal,
            lower[2] + self.pedestal,
        ]
    }

    pub fn group(band: usize) -> String {
        format!("enc{band}")
    }

    pub fn interneurons(band: usize) -> String {
        format!("enc{band}_inh")
    }

    pub fn core_config(&self, neuron: NeuronParams) -> CoreConfig {
        CoreConfig {
            neuron,
            tau_fast_ms: self.tau_fast_ms,
            tau_slow_ms: self.tau_slow_ms,
            i_syn_max: self.i_syn_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bands.validate()?;
        self.base.validate()?;
        if !(self.pedestal > 0.0) {
            return Err(Error::InvalidParams("encoder pedestal must be > 0".into()));
        }
        if self.pop_size == 0 || self.inh_size == 0 {
            return Err(Error::InvalidParams(
                "encoder groups must be non-empty".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub band: usize,
    /// Input current at which the group should become active.
    pub target: f64,
    pub i_dc: f64,
    /// First grid current at which the tuned group reaches the active rate.
    pub achieved: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub params: [NeuronParams; 3],
    pub entries: Vec<CalibrationEntry>,
}

impl Calibration {
    pub fn report(&self) -> String {
        let mut out = String::from("band  target      i_dc         achieved    rel_error\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{:<5} {:<11.6} {:<12.8} {:<11.6} {:+.4}%\n",
                e.band,
                e.target,
                e.i_dc,
                e.achieved,
                100.0 * e.rel_error
            ));
        }
        out
    }
}

/// Calibration tolerance on the crossing current, relative to the target.
pub const CALIBRATION_TOL: f64 = 0.02;

/// Tune each group's tonic offset so that its FI curve crosses the active
/// rate at its band's lower boundary.
///
/// The offset is found by bisection on `rate(target; i_dc) >= active`,
/// then checked on a grid spanning `target * (1 +- 2%)`.
pub fn calibrate_encoder(spec: &EncoderSpec, fi: &FiSettings) -> Result<Calibration> {
    spec.validate()?;
    let targets = spec.targets();
    let bands: Vec<usize> = (0..3).collect();
    let tuned = crate::exec::try_map(&bands, |&b| calibrate_band(spec, b, targets[b], fi))?;
    let mut params = [spec.base; 3];
    let mut entries = Vec::with_capacity(3);
    for (b, (p, entry)) in tuned.into_iter().enumerate() {
        params[b] = p;
        entries.push(entry);
    }
    Ok(Calibration { params, entries })
}

fn calibrate_band(
    spec: &EncoderSpec,
    band: usize,
    target: f64,
    fi: &FiSettings,
) -> Result<(NeuronParams, CalibrationEntry)> {
    let active = spec.active_rate_hz;
    let with = |i_dc: f64| NeuronParams { i_dc, ..spec.base };
    let fails = |reason: String| Error::Calibration { band, reason };

    // i_dc = 0 must already be active at the target, a large negative
    // offset must silence it.
    let mut hi = 0.0;
    let mut lo = -(target + 1.0);
    if measure_rate(&with(hi), target, fi)? < active {
        return Err(fails(format!(
            "base parameters reach only {:.2} Hz at {target}",
            measure_rate(&with(hi), target, fi)?
        )));
    }
    if measure_rate(&with(lo), target, fi)? >= active {
        return Err(fails(format!("offset {lo} does not silence the group")));
    }
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if measure_rate(&with(mid), target, fi)? >= active {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let tuned = with(hi);

    let n = 81;
    let span = (
        target * (1.0 - CALIBRATION_TOL),
        target * (1.0 + CALIBRATION_TOL),
    );
    let mut achieved = None;
    for k in 0..n {
        let i = span.0 + (span.1 - span.0) * k as f64 / (n - 1) as f64;
        if measure_rate(&tuned, i, fi)? >= active {
            achieved = Some(i);
            break;
        }
    }
    let achieved = achieved.ok_or_else(|| {
        fails(format!(
            "tuned group stays below {active} Hz up to {:.6}",
            span.1
        ))
    })?;
    let rel_error = (achieved - target) / target;
    if rel_error.abs() > CALIBRATION_TOL {
        return Err(fails(format!(
            "crossing at {achieved:.6}, target {target:.6} ({:+.2}%)",
            100.0 * rel_error
        )));
    }
    Ok((
        tuned,
        CalibrationEntry {
            band,
            target,
            i_dc: hi,
            achieved,
            rel_error,
        },
    ))
}

/// Three groups on their own cores, each with a pool of interneurons that
/// inhibits every lower-level group; the top pool also silences the middle
/// pool.
pub fn build_encoder(spec: &EncoderSpec, cal: &Calibration) -> NetworkSpec {
    let mut net = NetworkSpec::new();
    for b in 0..3 {
        net.set_core(spec.cores[b], spec.core_config(cal.params[b]));
        net.add_population(EncoderSpec::group(b), spec.cores[b], spec.pop_size);
    }
    for b in 1..3 {
        net.add_population(EncoderSpec::interneurons(b), spec.cores[b], spec.inh_size);
    }
    for b in 1..3 {
        let inh = EncoderSpec::interneurons(b);
        net.connect_all(
            &EncoderSpec::group(b),
            &inh,
            Sign::Excitatory,
            Speed::Fast,
            spec.w_group_inh,
        );
        for lower in 0..b {
            net.connect_all(
                &inh,
                &EncoderSpec::group(lower),
                Sign::Inhibitory,
                Speed::Slow,
                spec.w_backward,
            );
        }
    }
    net.connect_all(
        &EncoderSpec::interneurons(2),
        &EncoderSpec::interneurons(1),
        Sign::Inhibitory,
        Speed::Fast,
        spec.w_disinhibit,
    );
    net
}
