//! Soil-matric-potential series: CSV ingestion with validation and gap
//! detection, subsampling, and a seeded synthetic drydown generator.
//!
//! CSV schema (header required): `timestamp_iso8601,smp_kpa`, timestamps in
//! RFC 3339 / ISO-8601 UTC.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, SecondsFormat, TimeZone, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoder::CropProfile;
use crate::error::{Error, Result};

pub const DEFAULT_INTERVAL_S: i64 = 15 * 60;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmpSample {
    pub t: DateTime<Utc>,
    pub smp_kpa: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    #[serde(default)]
    pub crop: String,
    #[serde(default)]
    pub depth_cm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmpSeries {
    pub samples: Vec<SmpSample>,
    /// Nominal sampling period in seconds.
    pub interval_s: i64,
    pub meta: SeriesMeta,
}

impl SmpSeries {
    pub fn new(samples: Vec<SmpSample>, interval_s: i64, meta: SeriesMeta) -> Result<Self> {
        let s = Self {
            samples,
            interval_s,
            meta,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn from_values(start: DateTime<Utc>, interval_s: i64, values: &[f64]) -> Result<Self> {
        let samples = values
            .iter()
            .enumerate()
            .map(|(k, &v)| SmpSample {
                t: start + Duration::seconds(interval_s * k as i64),
                smp_kpa: v,
            })
            .collect();
        Self::new(samples, interval_s, SeriesMeta::default())
    }

    pub fn validate(&self) -> Result<()> {
        if self.interval_s <= 0 {
            return Err(Error::Series(format!(
                "interval must be > 0 s, got {}",
                self.interval_s
            )));
        }
        for (k, w) in self.samples.windows(2).enumerate() {
            if w[1].t <= w[0].t {
                return Err(Error::Series(format!(
                    "timestamps must be strictly increasing (sample {})",
                    k + 1
                )));
            }
        }
        if let Some((k, s)) = self
            .samples
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.smp_kpa <= 0.0))
        {
            return Err(Error::Series(format!(
                "smp must be <= 0 kPa, sample {k} has {}",
                s.smp_kpa
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.smp_kpa).collect()
    }

    /// Expected sample slots that have no reading.
    pub fn gaps(&self) -> GapReport {
        let step = Duration::seconds(self.interval_s);
        let mut missing = Vec::new();
        for w in self.samples.windows(2) {
            let mut t = w[0].t + step;
            while t < w[1].t {
                missing.push(t);
                t += step;
            }
        }
        GapReport { missing }
    }

    /// Insert the previous value into every missing slot.
    pub fn fill_gaps_hold_last(&self) -> SmpSeries {
        let step = Duration::seconds(self.interval_s);
        let mut out = Vec::with_capacity(self.samples.len());
        for w in self.samples.windows(2) {
            out.push(w[0]);
            let mut t = w[0].t + step;
            while t < w[1].t {
                out.push(SmpSample {
                    t,
                    smp_kpa: w[0].smp_kpa,
                });
                t += step;
            }
        }
        out.extend(self.samples.last().copied());
        SmpSeries {
            samples: out,
            ..self.clone()
        }
    }

    pub fn read_csv<R: Read>(r: R, path: &Path) -> Result<SmpSeries> {
        let data_err = |line: usize, msg: String| Error::Data {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut rd = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(r);
        let header = rd
            .headers()
            .map_err(|e| data_err(1, e.to_string()))?
            .clone();
        if header.len() != 2 || &header[0] != "timestamp_iso8601" || &header[1] != "smp_kpa" {
            return Err(data_err(
                1,
                format!(
                    "expected header `timestamp_iso8601,smp_kpa`, got `{}`",
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            ));
        }
        let mut samples: Vec<SmpSample> = Vec::new();
        for (k, rec) in rd.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| data_err(line, e.to_string()))?;
            if rec.len() != 2 {
                return Err(data_err(
                    line,
                    format!("expected 2 fields, got {}", rec.len()),
                ));
            }
            let t = DateTime::parse_from_rfc3339(&rec[0])
                .map_err(|e| data_err(line, format!("bad timestamp `{}`: {e}", &rec[0])))?
                .with_timezone(&Utc);
            let smp_kpa: f64 = rec[1]
                .parse()
                .map_err(|e| data_err(line, format!("bad smp `{}`: {e}", &rec[1])))?;
            if !(smp_kpa <= 0.0) {
                return Err(data_err(
                    line,
                    format!("smp must be <= 0 kPa, got {smp_kpa}"),
                ));
            }
            if let Some(prev) = samples.last() {
                if t <= prev.t {
                    return Err(data_err(
                        line,
                        "timestamps must be strictly increasing".into(),
                    ));
                }
            }
            samples.push(SmpSample { t, smp_kpa });
        }
        let interval_s = infer_interval(&samples);
        Ok(SmpSeries {
            samples,
            interval_s,
            meta: SeriesMeta::default(),
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        wr.write_record(["timestamp_iso8601", "smp_kpa"])
            .map_err(io)?;
        for s in &self.samples {
            wr.write_record([iso8601(s.t), format!("{}", s.smp_kpa)])
                .map_err(io)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// The most common positive spacing, or the default 15 minutes.
fn infer_interval(samples: &[SmpSample]) -> i64 {
    let mut diffs: Vec<i64> = samples
        .windows(2)
        .map(|w| (w[1].t - w[0].t).num_seconds())
        .collect();
    if diffs.is_empty() {
        return DEFAULT_INTERVAL_S;
    }
    diffs.sort_unstable();
    let mut best = (diffs[0], 0usize);
    let mut k = 0;
    while k < diffs.len() {
        let run = diffs[k..].iter().take_while(|&&d| d == diffs[k]).count();
        if run > best.1 {
            best = (diffs[k], run);
        }
        k += run;
    }
    best.0
}

pub fn iso8601(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Missing sample slots found by [`SmpSeries::gaps`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GapReport {
    pub missing: Vec<DateTime<Utc>>,
}

impl GapReport {
    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
    }
}

/// Parse, validate and gap-check a series file.
pub fn load_csv(path: &Path) -> Result<(SmpSeries, GapReport)> {
    let series = SmpSeries::read_csv(std::fs::File::open(path)?, path)?;
    let gaps = series.gaps();
    Ok((series, gaps))
}

/// Keep every `stride`-th sample starting with the first.
pub fn subsample(series: &SmpSeries, stride: usize) -> Result<SmpSeries> {
    if stride == 0 {
        return Err(Error::Series("stride must be >= 1".into()));
    }
    Ok(SmpSeries {
        samples: series.samples.iter().step_by(stride).copied().collect(),
        interval_s: series.interval_s * stride as i64,
        meta: series.meta.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum IrrigationMode {
    /// No irrigation; pure drydown.
    None,
    /// Irrigate whenever the observed value drops below the crop's `th_on`.
    ClosedLoop,
    /// Irrigate every `every_samples` samples.
    Scheduled { every_samples: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Drift per day; negative means drying.
    pub drydown_rate_kpa_per_day: f64,
    pub irrigation_jump_kpa: f64,
    pub noise_sd_kpa: f64,
    pub diurnal_amp_kpa: f64,
    pub seed: u64,
    pub days: f64,
    pub start_kpa: f64,
    pub interval_s: i64,
    pub mode: IrrigationMode,
    /// Unix timestamp of the first sample.
    #[serde(default)]
    pub start_unix_s: i64,
}

impl SynthParams {
    /// Closed-loop defaults tuned to the crop's threshold band.
    pub fn closed_loop(profile: &CropProfile, seed: u64) -> Self {
        let band = profile.th_off - profile.th_on;
        Self {
            drydown_rate_kpa_per_day: -band * 0.57,
            irrigation_jump_kpa: band * 1.73,
            noise_sd_kpa: band * 0.03,
            diurnal_amp_kpa: band * 0.05,
            seed,
            days: 60.0,
            start_kpa: profile.th_off + 0.21 * band,
            interval_s: DEFAULT_INTERVAL_S,
            mode: IrrigationMode::ClosedLoop,
            start_unix_s: 1_688_169_600, // 2023-07-01T00:00:00Z
        }
    }

    /// Closed-loop traces for end-to-end evaluation: one sample every six
    /// hours over 25 days, so each trace runs through about eight cycles.
    pub fn evaluation(profile: &CropProfile, seed: u64) -> Self {
        Self {
            days: 25.0,
            interval_s: 6 * 3600,
            ..Self::closed_loop(profile, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(format!("synthetic params: {m}")));
        if !(self.drydown_rate_kpa_per_day <= 0.0) {
            return bad("drydown rate must be <= 0 (toward dryness)");
        }
        if !(self.irrigation_jump_kpa > 0.0) {
            return bad("irrigation jump must be > 0 (toward wetness)");
        }
        if !(self.noise_sd_kpa >= 0.0 && self.diurnal_amp_kpa >= 0.0) {
            return bad("noise and diurnal amplitude must be >= 0");
        }
        if !(self.days >= 0.0) || self.interval_s <= 0 {
            return bad("need days >= 0 and interval > 0");
        }
        Ok(())
    }
}

/// Sawtooth drydown with irrigation rebounds, clamped to the profile's
/// mapped range. Deterministic in `params.seed`.
pub fn generate_synthetic(params: &SynthParams, profile: &CropProfile) -> Result<SmpSeries> {
    params.validate()?;
    profile.validate()?;
    let n = (params.days * 86_400.0 / params.interval_s as f64).round() as usize + 1;
    let per_step = params.drydown_rate_kpa_per_day * params.interval_s as f64 / 86_400.0;
    let noise = Normal::new(0.0, params.noise_sd_kpa).expect("sd >= 0");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let start = Utc
        .timestamp_opt(params.start_unix_s, 0)
        .single()
        .ok_or_else(|| Error::InvalidParams("bad start timestamp".into()))?;

    let mut level = params.start_kpa;
    let mut pending = false;
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        if k > 0 {
            level += per_step;
            let irrigate = match params.mode {
                IrrigationMode::None => false,
                IrrigationMode::ClosedLoop => pending,
                IrrigationMode::Scheduled { every_samples } => {
                    every_samples > 0 && k % every_samples == 0
                }
            };
            if irrigate {
                level += params.irrigation_jump_kpa;
                pending = false;
            }
            level = level.clamp(profile.smp_floor, profile.smp_ceil);
        }
        let t = start + Duration::seconds(params.interval_s * k as i64);
        let phase =
            2.0 * std::f64::consts::PI * (params.interval_s * k as i64 % 86_400) as f64 / 86_400.0;
        let observed = if params.noise_sd_kpa > 0.0 {
            level + params.diurnal_amp_kpa * phase.sin() + noise.sample(&mut rng)
        } else {
            level + params.diurnal_amp_kpa * phase.sin()
        };
        let observed = observed.clamp(profile.smp_floor, profile.smp_ceil);
        if params.mode == IrrigationMode::ClosedLoop && observed < profile.th_on {
            pending = true;
        }
        samples.push(SmpSample {
            t,
            smp_kpa: observed,
        });
    }
    SmpSeries::new(
        samples,
        params.interval_s,
        SeriesMeta {
            crop: profile.name.clone(),
            depth_cm: None,
        },
    )
}
