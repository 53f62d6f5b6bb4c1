//! Current-mode adaptive-exponential neuron (adaptation disabled) and
//! first-order synapse, both integrated with exponential Euler on a fixed
//! step.
//!
//! The membrane variable obeys
//!
//! ```text
//! tau * dI_mem/dt = -I_mem + I_in * I_gain / I_tau + I_a * I_mem / I_tau
//! ```
//!
//! which is linear in `I_mem` with effective leak `(1 - I_a/I_tau) / tau`.
//! Exponential Euler is therefore exact for piecewise-constant input and
//! unconditionally stable whenever `I_a < I_tau`. The exponential term of
//! the full model is not represented: in the high-input limit it is
//! subsumed into the positive-feedback term.
//!
//! All currents are in arbitrary current units (a.c.u.); only ratios are
//! meaningful.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Membrane values beyond this are treated as numerical runaway.
pub const DIVERGENCE_CAP: f64 = 1.0e6;

/// Neuron identifier within a compiled network.
pub type NeuronId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    /// Membrane time constant (ms).
    pub tau_ms: f64,
    pub i_gain: f64,
    pub i_tau: f64,
    /// Positive-feedback current; must stay below `i_tau` for a stable leak.
    pub i_a: f64,
    pub i_spike_threshold: f64,
    pub i_reset: f64,
    pub refractory_ms: f64,
    /// Tonic current added to the synaptic input before rectification.
    /// Negative values shift the FI curve to the right.
    #[serde(default)]
    pub i_dc: f64,
}

impl Default for NeuronParams {
    fn default() -> Self {
        Self {
            tau_ms: 20.0,
            i_gain: 1.0,
            i_tau: 1.0,
            i_a: 0.5,
            i_spike_threshold: 1.0,
            i_reset: 0.0,
            refractory_ms: 2.0,
            i_dc: 0.0,
        }
    }
}

impl NeuronParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.tau_ms,
            self.i_gain,
            self.i_tau,
            self.i_a,
            self.i_spike_threshold,
            self.i_reset,
            self.refractory_ms,
            self.i_dc,
        ]
        .iter()
        .all(|v| v.is_finite());
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!(
                    "neuron params: {what} ({self:?})"
                )))
            }
        };
        check(finite, "non-finite value")?;
        check(self.tau_ms > 0.0, "tau must be > 0")?;
        check(self.i_tau > 0.0, "i_tau must be > 0")?;
        check(self.i_gain > 0.0, "i_gain must be > 0")?;
        check(self.i_a >= 0.0, "i_a must be >= 0")?;
        check(self.i_reset >= 0.0, "i_reset must be >= 0")?;
        check(
            self.i_spike_threshold > self.i_reset,
            "i_spike_threshold must exceed i_reset",
        )?;
        check(self.refractory_ms >= 0.0, "refractory must be >= 0")
    }

    /// `I_a / I_tau`; values >= 1 make the resting state unstable.
    pub fn feedback_ratio(&self) -> f64 {
        self.i_a / self.i_tau
    }

    /// Input-to-membrane gain at steady state, `I_gain / (I_tau - I_a)`.
    /// `None` when the feedback is strong enough that no fixed point exists.
    pub fn steady_state_gain(&self) -> Option<f64> {
        (self.i_a < self.i_tau).then(|| self.i_gain / (self.i_tau - self.i_a))
    }

    /// Closed-form fixed point of the membrane equation for a constant,
    /// already rectified drive.
    pub fn steady_state(&self, drive: f64) -> Option<f64> {
        self.steady_state_gain().map(|g| g * drive)
    }

    /// Smallest constant input (before the tonic offset) that eventually
    /// reaches threshold.
    pub fn rheobase(&self) -> Option<f64> {
        self.steady_state_gain()
            .map(|g| self.i_spike_threshold / g - self.i_dc)
    }

    pub fn refractory_us(&self) -> u64 {
        (self.refractory_ms * 1000.0).round().max(0.0) as u64
    }

    /// Rectified drive seen by the membrane for a signed synaptic input.
    #[inline]
    pub fn drive(&self, i_in: f64) -> f64 {
        (i_in + self.i_dc).max(0.0)
    }
}

/// Per-step update coefficients for one neuron at a fixed `dt`:
/// `I' = decay * I + coef * drive`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MembraneStep {
    pub decay: f64,
    pub coef: f64,
}

impl MembraneStep {
    pub fn new(params: &NeuronParams, dt_ms: f64) -> Self {
        let leak = 1.0 - params.feedback_ratio();
        let g = params.i_gain / params.i_tau;
        if leak == 0.0 {
            // Pure integrator.
            return Self {
                decay: 1.0,
                coef: g * dt_ms / params.tau_ms,
            };
        }
        let decay = (-leak * dt_ms / params.tau_ms).exp();
        Self {
            decay,
            coef: g / leak * (1.0 - decay),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NeuronState {
    pub i_mem: f64,
    pub refractory_until_us: u64,
}

/// A spike emitted by [`step_neuron`]; the timestamp is the end of the step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Spike {
    pub t_us: u64,
}

/// Advance one neuron by `dt_ms`, starting at `now_us`.
///
/// `i_in` is the signed net synaptic current (inhibition already
/// subtracted); it is offset by `i_dc` and rectified here. While refractory
/// the membrane is clamped to `i_reset`.
pub fn step_neuron(
    state: NeuronState,
    params: &NeuronParams,
    i_in: f64,
    now_us: u64,
    dt_ms: f64,
) -> Result<(NeuronState, Option<Spike>)> {
    if !(dt_ms > 0.0) {
        return Err(Error::InvalidParams(format!("dt must be > 0, got {dt_ms}")));
    }
    let step = MembraneStep::new(params, dt_ms);
    advance(
        state,
        params,
        &step,
        params.drive(i_in),
        now_us,
        dt_us(dt_ms),
        None,
    )
}

pub(crate) fn dt_us(dt_ms: f64) -> u64 {
    (dt_ms * 1000.0).round() as u64
}

/// Shared kernel for [`step_neuron`] and the fabric loop.
#[inline]
pub(crate) fn advance(
    state: NeuronState,
    params: &NeuronParams,
    step: &MembraneStep,
    drive: f64,
    now_us: u64,
    dt_us: u64,
    neuron: Option<NeuronId>,
) -> Result<(NeuronState, Option<Spike>)> {
    if now_us < state.refractory_until_us {
        return Ok((
            NeuronState {
                i_mem: params.i_reset,
                ..state
            },
            None,
        ));
    }
    let i_mem = step.decay * state.i_mem + step.coef * drive;
    if !i_mem.is_finite() || i_mem > DIVERGENCE_CAP {
        return Err(Error::Divergence {
            neuron,
            t_us: now_us,
            i_mem,
        });
    }
    let t_end = now_us + dt_us;
    if i_mem >= params.i_spike_threshold {
        let next = NeuronState {
            i_mem: params.i_reset,
            refractory_until_us: t_end + params.refractory_us(),
        };
        return Ok((next, Some(Spike { t_us: t_end })));
    }
    Ok((
        NeuronState {
            i_mem: i_mem.max(0.0),
            ..state
        },
        None,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Excitatory,
    Inhibitory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speed {
    Fast,
    Slow,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynapseParams {
    pub sign: Sign,
    pub speed: Speed,
    /// Current increment per presynaptic spike; the sign is carried by `sign`.
    pub weight: f64,
    pub tau_syn_ms: f64,
}

impl SynapseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "synapse weight must be > 0, got {}",
                self.weight
            )));
        }
        if !(self.tau_syn_ms > 0.0 && self.tau_syn_ms.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "synapse tau must be > 0, got {}",
                self.tau_syn_ms
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SynapseState {
    pub i_syn: f64,
}

/// Decay the synaptic current over `dt_ms`, then add `weight` per incoming
/// spike, saturating at `i_syn_max`.
pub fn step_synapse(
    state: SynapseState,
    params: &SynapseParams,
    spikes_in: u32,
    dt_ms: f64,
    i_syn_max: f64,
) -> SynapseState {
    let decay = (-dt_ms / params.tau_syn_ms).exp();
    let i_syn = state.i_syn * decay + params.weight * f64::from(spikes_in);
    SynapseState {
        i_syn: i_syn.clamp(0.0, i_syn_max),
    }
}

/// One point of an FI curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiPoint {
    pub i_in: f64,
    pub rate_hz: f64,
}

/// Settings for FI measurement by spike counting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiSettings {
    pub dt_ms: f64,
    pub warmup_ms: f64,
    pub window_ms: f64,
}

impl Default for FiSettings {
    fn default() -> Self {
        Self {
            dt_ms: 0.1,
            warmup_ms: 100.0,
            window_ms: 2000.0,
        }
    }
}

/// Rate (Hz) of an isolated neuron under constant input, measured by
/// counting spikes over `window_ms` after a discarded warm-up.
pub fn measure_rate(params: &NeuronParams, i_in: f64, settings: &FiSettings) -> Result<f64> {
    Ok(count_spikes(params, i_in, settings)? as f64 / (settings.window_ms / 1000.0))
}

fn count_spikes(params: &NeuronParams, i_in: f64, settings: &FiSettings) -> Result<u64> {
    let step = MembraneStep::new(params, settings.dt_ms);
    let dt = dt_us(settings.dt_ms);
    let warm = (settings.warmup_ms * 1000.0).round() as u64;
    let end = warm + (settings.window_ms * 1000.0).round() as u64;
    let drive = params.drive(i_in);
    let mut state = NeuronState::default();
    let mut count = 0;
    let mut now = 0;
    while now < end {
        let (next, spike) = advance(state, params, &step, drive, now, dt, None)?;
        if let Some(s) = spike {
            if s.t_us > warm && s.t_us <= end {
                count += 1;
            }
        }
        state = next;
        now += dt;
    }
    Ok(count)
}

/// FI curve over `n_points` evenly spaced constant inputs in `[lo, hi]`.
///
/// Fails if the window is too short to resolve the rate at `hi` (fewer than
/// 10 spikes), or the grid is degenerate.
pub fn fi_curve(
    params: &NeuronParams,
    range: (f64, f64),
    n_points: usize,
    settings: &FiSettings,
) -> Result<Vec<FiPoint>> {
    let (lo, hi) = range;
    if !(lo >= 0.0 && hi > lo) || n_points < 2 {
        return Err(Error::InvalidParams(format!(
            "fi curve needs 0 <= lo < hi and >= 2 points, got [{lo}, {hi}] x {n_points}"
        )));
    }
    params.validate()?;
    let top = count_spikes(params, hi, settings)?;
    if top < 10 {
        return Err(Error::WindowTooShort {
            spikes: top,
            window_ms: settings.window_ms,
        });
    }
    let inputs: Vec<f64> = (0..n_points)
        .map(|k| lo + (hi - lo) * k as f64 / (n_points - 1) as f64)
        .collect();
    let rates = crate::exec::try_map(&inputs, |&i| measure_rate(params, i, settings))?;
    Ok(inputs
        .into_iter()
        .zip(rates)
        .map(|(i_in, rate_hz)| FiPoint { i_in, rate_hz })
        .collect())
}

/// Analytic firing rate of the continuous-time model, used as a reference
/// for discretization error.
pub fn analytic_rate(params: &NeuronParams, i_in: f64) -> f64 {
    let drive = params.drive(i_in);
    let leak = 1.0 - params.feedback_ratio();
    let theta = params.i_spike_threshold;
    let r = params.i_reset;
    let tau_s = params.tau_ms / 1000.0;
    let g = params.i_gain / params.i_tau;
    let t_up = if leak > 0.0 {
        let inf = g * drive / leak;
        if inf <= theta {
            return 0.0;
        }
        tau_s / leak * ((inf - r) / (inf - theta)).ln()
    } else if drive > 0.0 || r > 0.0 {
        // leak <= 0: solve r*e^{ct} + (g*d/leak)(1 - e^{ct}) = theta, c = -leak/tau
        if leak == 0.0 {
            (theta - r) * tau_s / (g * drive)
        } else {
            let inf = g * drive / leak; // negative
            tau_s / leak * ((inf - r) / (inf - theta)).ln()
        }
    } else {
        return 0.0;
    };
    1.0 / (t_up + params.refractory_ms / 1000.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_threshold() -> NeuronParams {
        NeuronParams {
            i_spike_threshold: 1.0e9,
            ..NeuronParams::default()
        }
    }

    #[test]
    fn zero_input_is_a_fixed_point() {
        let p = NeuronParams::default();
        let mut s = NeuronState::default();
        for k in 0..1000 {
            let (next, spike) = step_neuron(s, &p, 0.0, k * 100, 0.1).unwrap();
            assert!(spike.is_none());
            s = next;
        }
        assert_eq!(s.i_mem, 0.0);
    }

    #[test]
    fn converges_to_closed_form_fixed_point() {
        let p = no_threshold();
        let dt = p.tau_ms / 100.0;
        let i_in = 0.7;
        let mut s = NeuronState::default();
        for k in 0..20_000u64 {
            s = step_neuron(s, &p, i_in, k * 200, dt).unwrap().0;
        }
        let expected = i_in * p.i_gain / (p.i_tau - p.i_a);
        assert!(
            (s.i_mem - expected).abs() / expected < 1e-3,
            "{} vs {expected}",
            s.i_mem
        );
    }

    #[test]
    fn strong_feedback_diverges() {
        let p = NeuronParams {
            i_a: 1.2,
            ..no_threshold()
        };
        let mut s = NeuronState::default();
        let mut prev = 0.0;
        let mut k = 0u64;
        let err = loop {
            match step_neuron(s, &p, 0.5, k * 100, 0.1) {
                Ok((next, _)) => {
                    assert!(next.i_mem > prev, "growth must be monotone");
                    prev = next.i_mem;
                    s = next;
                }
                Err(e) => break e,
            }
            k += 1;
            assert!(k < 10_000_000, "no divergence detected");
        };
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn refractory_holds_reset() {
        let p = NeuronParams {
            refractory_ms: 5.0,
            ..NeuronParams::default()
        };
        let mut s = NeuronState::default();
        let mut spikes = Vec::new();
        for k in 0..5000u64 {
            let (next, spike) = step_neuron(s, &p, 3.0, k * 100, 0.1).unwrap();
            if let Some(sp) = spike {
                spikes.push(sp.t_us);
            }
            if k * 100 < s.refractory_until_us {
                assert_eq!(next.i_mem, p.i_reset);
            }
            s = next;
        }
        assert!(spikes.len() > 10);
        for w in spikes.windows(2) {
            assert!(w[1] - w[0] >= 5000);
        }
    }

    #[test]
    fn synapse_pure_decay_and_linear_jumps() {
        let sp = SynapseParams {
            sign: Sign::Excitatory,
            speed: Speed::Fast,
            weight: 0.3,
            tau_syn_ms: 10.0,
        };
        let s = step_synapse(SynapseState::default(), &sp, 2, 0.1, 100.0);
        assert!((s.i_syn - 0.6).abs() < 1e-12);

        let mut s = step_synapse(SynapseState::default(), &sp, 1, 0.1, 100.0);
        for _ in 0..250 {
            s = step_synapse(s, &sp, 0, 0.1, 100.0);
        }
        let expected = 0.3 * (-25.0f64 / 10.0).exp();
        assert!((s.i_syn - expected).abs() < 1e-12);
    }

    #[test]
    fn synapse_saturates() {
        let sp = SynapseParams {
            sign: Sign::Excitatory,
            speed: Speed::Slow,
            weight: 5.0,
            tau_syn_ms: 100.0,
        };
        let s = step_synapse(SynapseState::default(), &sp, 10, 0.1, 20.0);
        assert_eq!(s.i_syn, 20.0);
    }

    #[test]
    fn periodic_input_mean_matches_linear_filter() {
        // Brute-force time average vs w * r * tau.
        let sp = SynapseParams {
            sign: Sign::Excitatory,
            speed: Speed::Slow,
            weight: 0.05,
            tau_syn_ms: 100.0,
        };
        let rate_hz = 200.0;
        let period_steps = (1000.0 / rate_hz / 0.1) as u64;
        let mut s = SynapseState::default();
        let (mut sum, mut n) = (0.0, 0u64);
        for k in 0..200_000u64 {
            let spikes = u32::from(k % period_steps == 0);
            s = step_synapse(s, &sp, spikes, 0.1, 1e9);
            if k >= 20_000 {
                sum += s.i_syn;
                n += 1;
            }
        }
        let mean = sum / n as f64;
        let expected = sp.weight * rate_hz * sp.tau_syn_ms / 1000.0;
        assert!(
            (mean - expected).abs() / expected < 0.05,
            "{mean} vs {expected}"
        );
    }

    #[test]
    fn fi_curve_zero_and_monotone() {
        let p = NeuronParams::default();
        let curve = fi_curve(&p, (0.0, 2.0), 21, &FiSettings::default()).unwrap();
        assert_eq!(curve[0].rate_hz, 0.0);
        for w in curve.windows(2) {
            assert!(w[1].rate_hz >= w[0].rate_hz);
        }
    }

    #[test]
    fn fi_curve_rejects_short_window() {
        let p = NeuronParams::default();
        let settings = FiSettings {
            window_ms: 5.0,
            ..FiSettings::default()
        };
        let err = fi_curve(&p, (0.0, 1.0), 5, &settings).unwrap_err();
        assert!(matches!(err, Error::WindowTooShort { .. }));
    }

    #[test]
    fn discrete_rate_tracks_analytic_rate() {
        let p = NeuronParams::default();
        for i_in in [0.6, 0.8, 1.0, 1.5] {
            let sim = measure_rate(&p, i_in, &FiSettings::default()).unwrap();
            let exact = analytic_rate(&p, i_in);
            assert!(
                (sim - exact).abs() / exact < 0.03,
                "i={i_in}: {sim} vs {exact}"
            );
        }
    }

    #[test]
    fn params_validation() {
        assert!(NeuronParams::default().validate().is_ok());
        let bad = NeuronParams {
            i_reset: 2.0,
            ..NeuronParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = NeuronParams {
            tau_ms: 0.0,
            ..NeuronParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
