use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::NetworkSpec;
use crate::error::{Error, Result};
use crate::neuron::NeuronParams;

/// Multiplicative lognormal device mismatch, independent per neuron and per
/// parameter. The tonic offset `i_dc` is a calibrated input shift and is
/// left untouched.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MismatchModel {
    pub cv: f64,
    pub seed: u64,
}

impl Default for MismatchModel {
    fn default() -> Self {
        Self { cv: 0.1, seed: 0 }
    }
}

impl MismatchModel {
    pub fn none(seed: u64) -> Self {
        Self { cv: 0.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if (0.0..1.0).contains(&self.cv) {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "mismatch cv must be in [0, 1), got {}",
                self.cv
            )))
        }
    }

    /// Lognormal with unit mean and the requested coefficient of variation.
    fn distribution(&self) -> LogNormal<f64> {
        let sigma2 = (1.0 + self.cv * self.cv).ln();
        LogNormal::new(-sigma2 / 2.0, sigma2.sqrt()).expect("finite sigma")
    }
}

/// Per-neuron effective parameters, in compiled id order.
pub fn apply_mismatch(spec: &NetworkSpec, model: &MismatchModel) -> Result<NetworkSpec> {
    model.validate()?;
    let mut base = Vec::with_capacity(spec.n_neurons());
    for p in &spec.populations {
        let cfg = spec.core_config(p.core).ok_or_else(|| {
            Error::InvalidParams(format!(
                "population {} sits on unconfigured core {}",
                p.name, p.core
            ))
        })?;
        base.extend(std::iter::repeat(cfg.neuron).take(p.size as usize));
    }
    let effective = if model.cv == 0.0 {
        base
    } else {
        let dist = model.distribution();
        let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
        base.into_iter()
            .map(|p| {
                let mut f = || dist.sample(&mut rng);
                let mut q = NeuronParams {
                    tau_ms: p.tau_ms * f(),
                    i_gain: p.i_gain * f(),
                    i_tau: p.i_tau * f(),
                    i_a: p.i_a * f(),
                    i_spike_threshold: p.i_spike_threshold * f(),
                    i_reset: p.i_reset * f(),
                    refractory_ms: p.refractory_ms * f(),
                    i_dc: p.i_dc,
                };
                if q.i_reset >= q.i_spike_threshold {
                    q.i_reset = 0.5 * q.i_spike_threshold;
                }
                q
            })
            .collect()
    };
    let mut out = spec.clone();
    out.effective_params = Some(effective);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::CoreConfig;

    fn spec(n: u32) -> NetworkSpec {
        let mut s = NetworkSpec::new().with_core(0, CoreConfig::default());
        s.add_population("p", 0, n);
        s
    }

    #[test]
    fn zero_cv_is_identity() {
        let s = apply_mismatch(&spec(10), &MismatchModel::none(3)).unwrap();
        assert!(s
            .effective_params
            .unwrap()
            .iter()
            .all(|p| *p == CoreConfig::default().neuron));
    }

    #[test]
    fn deterministic_in_seed() {
        let m = MismatchModel { cv: 0.1, seed: 42 };
        let a = apply_mismatch(&spec(50), &m).unwrap();
        let b = apply_mismatch(&spec(50), &m).unwrap();
        assert_eq!(a.effective_params, b.effective_params);
        let c = apply_mismatch(&spec(50), &MismatchModel { seed: 43, ..m }).unwrap();
        assert_ne!(a.effective_params, c.effective_params);
    }

    #[test]
    fn sample_cv_of_tau() {
        let m = MismatchModel { cv: 0.1, seed: 7 };
        let s = apply_mismatch(&spec(1000), &m).unwrap();
        let taus: Vec<f64> = s
            .effective_params
            .unwrap()
            .iter()
            .map(|p| p.tau_ms)
            .collect();
        let mean = taus.iter().sum::<f64>() / taus.len() as f64;
        let var = taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (taus.len() - 1) as f64;
        let cv = var.sqrt() / mean;
        assert!((cv - 0.1).abs() <= 0.02, "cv = {cv}");
        assert!((mean / 20.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn rejects_bad_cv() {
        assert!(apply_mismatch(&spec(1), &MismatchModel { cv: 1.0, seed: 0 }).is_err());
        assert!(apply_mismatch(&spec(1), &MismatchModel { cv: -0.1, seed: 0 }).is_err());
    }
}
