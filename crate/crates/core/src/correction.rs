//! Importance-sampling correction from the approximate to the exact
//! posterior.

use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{ApproxMode, DatasetContext};
use crate::error::{Error, Result};
use crate::kernels::{ApproxLikelihood, ExactLikelihood, LogLikelihood};
use crate::model::{PriorConfig, ThetaParams};
use crate::smc::ess;

/// Default largest series length for which the O(n³) correction runs.
pub const DEFAULT_MAX_N: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionConfig {
    pub enabled: bool,
    /// Number of particles drawn without replacement; all when unset.
    pub subsample: Option<usize>,
    /// Refuse series longer than this; `None` lifts the guard.
    pub max_n: Option<usize>,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            subsample: None,
            max_n: Some(DEFAULT_MAX_N),
        }
    }
}

/// Reweighted (sub)sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectedSample {
    /// Positions of the retained particles in the input population.
    pub indices: Vec<usize>,
    pub particles: Vec<ThetaParams>,
    /// `ln p(x|θ) − ln p̃(x|θ)`.
    pub log_w: Vec<f64>,
    pub weights: Vec<f64>,
    pub ess: f64,
    pub ess_fraction: f64,
    pub seconds: f64,
}

impl CorrectedSample {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }
}

/// Corrects an equally weighted population targeting the approximate
/// posterior of `data`.
pub fn correction_weights<R: Rng + ?Sized>(
    particles: &[ThetaParams],
    data: &DatasetContext,
    prior: &PriorConfig,
    mode: ApproxMode,
    cfg: &CorrectionConfig,
    rng: &mut R,
) -> Result<CorrectedSample> {
    if let Some(max) = cfg.max_n {
        if data.n() > max {
            return Err(Error::Size(format!(
                "correction refused for n = {} above {max}; raise correction.max_n to force it",
                data.n()
            )));
        }
    }
    let exact = ExactLikelihood { data, prior };
    let approx = ApproxLikelihood { data, prior, mode };
    correction_weights_with(particles, &exact, &approx, cfg.subsample, rng)
}

/// Same with arbitrary evaluators.
pub fn correction_weights_with<E, A, R>(
    particles: &[ThetaParams],
    exact: &E,
    approx: &A,
    subsample: Option<usize>,
    rng: &mut R,
) -> Result<CorrectedSample>
where
    E: LogLikelihood + ?Sized,
    A: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    let start = Instant::now();
    let total = particles.len();
    if total == 0 {
        return Err(Error::InvalidState("no particles to correct".into()));
    }
    let indices: Vec<usize> = match subsample {
        Some(m) if m > total => {
            return Err(Error::Size(format!("subsample {m} exceeds {total} particles")))
        }
        Some(0) => return Err(Error::Size("subsample of zero particles".into())),
        Some(m) if m < total => {
            let mut picked = index::sample(rng, total, m).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..total).collect(),
    };
    let chosen: Vec<ThetaParams> = indices.iter().map(|&i| particles[i].clone()).collect();
    let log_w: Vec<f64> = chosen
        .par_iter()
        .map(|theta| {
            let e = exact.log_lik(theta);
            if e == f64::NEG_INFINITY {
                log::warn!("exact likelihood unavailable at {theta:?}; weight set to zero");
                return f64::NEG_INFINITY;
            }
            e - approx.log_lik(theta)
        })
        .collect();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Degenerate { iteration: 0 });
    }
    let raw: Vec<f64> = log_w.iter().map(|w| (w - max).exp()).collect();
    let sum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
    let ess = ess(&log_w)?;
    Ok(CorrectedSample {
        ess_fraction: ess / chosen.len() as f64,
        indices,
        particles: chosen,
        log_w,
        weights,
        ess,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// `Σ W_j stat(θ_j)`.
pub fn corrected_estimate<F: Fn(&ThetaParams) -> f64>(sample: &CorrectedSample, stat: F) -> f64 {
    sample
        .particles
        .iter()
        .zip(&sample.weights)
        .map(|(th, w)| w * stat(th))
        .sum()
}

/// Monte Carlo standard error of [`corrected_estimate`] by the delta method.
pub fn corrected_std_error<F: Fn(&ThetaParams) -> f64>(sample: &CorrectedSample, stat: F) -> f64 {
    let mean = corrected_estimate(sample, &stat);
    sample
        .particles
        .iter()
        .zip(&sample.weights)
        .map(|(th, w)| (w * (stat(th) - mean)).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::prepare_dataset;
    use crate::model::sample_prior;
    use crate::smc::rng_stream;

    fn draws(count: usize, seed: u64) -> Vec<ThetaParams> {
        let prior = PriorConfig::default();
        let mut rng = rng_stream(seed, 0);
        (0..count).map(|_| sample_prior(&prior, &mut rng)).collect()
    }

    #[test]
    fn identical_evaluators_give_uniform_weights() {
        let f = |th: &ThetaParams| -(th.t * th.t) - th.k() as f64;
        let ps = draws(50, 1);
        let s = correction_weights_with(&ps, &f, &f, None, &mut rng_stream(1, 1)).unwrap();
        for w in &s.weights {
            assert!((w - 1.0 / 50.0).abs() < 1e-15);
        }
        assert!((s.ess_fraction - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shift_invariance() {
        let exact = |th: &ThetaParams| -(th.t - 0.5).powi(2);
        let approx = |th: &ThetaParams| -0.8 * (th.t - 0.4).powi(2);
        let exact_shift = |th: &ThetaParams| exact(th) + 1234.5;
        let approx_shift = |th: &ThetaParams| approx(th) - 77.0;
        let ps = draws(40, 2);
        let a = correction_weights_with(&ps, &exact, &approx, None, &mut rng_stream(0, 0)).unwrap();
        let b = correction_weights_with(&ps, &exact_shift, &approx_shift, None, &mut rng_stream(0, 0))
            .unwrap();
        for (u, v) in a.weights.iter().zip(&b.weights) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!((a.ess - b.ess).abs() < 1e-9);
    }

    #[test]
    fn failed_exact_gets_zero_weight() {
        let exact = |th: &ThetaParams| if th.t > 0.0 { f64::NEG_INFINITY } else { 0.0 };
        let approx = |_: &ThetaParams| 0.0;
        let ps = draws(100, 3);
        let s = correction_weights_with(&ps, &exact, &approx, None, &mut rng_stream(0, 0)).unwrap();
        for (th, w) in s.particles.iter().zip(&s.weights) {
            if th.t > 0.0 {
                assert_eq!(*w, 0.0);
            }
        }
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.ess_fraction > 0.0 && s.ess_fraction <= 1.0);
    }

    #[test]
    fn estimates() {
        let s = CorrectedSample {
            indices: vec![0, 1],
            particles: vec![
                ThetaParams::from_d(0.1, vec![]).unwrap(),
                ThetaParams::from_d(0.3, vec![]).unwrap(),
            ],
            log_w: vec![3f64.ln(), 0.0],
            weights: vec![0.75, 0.25],
            ess: 1.6,
            ess_fraction: 0.8,
            seconds: 0.0,
        };
        assert!((corrected_estimate(&s, |th| th.d()) - 0.15).abs() < 1e-12);
        assert_eq!(corrected_estimate(&s, |_| 1.0), 1.0);
        let uniform = CorrectedSample {
            weights: vec![0.5, 0.5],
            ..s
        };
        assert!((corrected_estimate(&uniform, |th| th.d()) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn subsampling() {
        let f = |th: &ThetaParams| -th.t.powi(2);
        let ps = draws(30, 4);
        let s = correction_weights_with(&ps, &f, &|_: &ThetaParams| 0.0, Some(10), &mut rng_stream(5, 0))
            .unwrap();
        assert_eq!(s.len(), 10);
        let mut seen = s.indices.clone();
        seen.dedup();
        assert_eq!(seen.len(), 10);
        for (i, th) in s.indices.iter().zip(&s.particles) {
            assert_eq!(&ps[*i], th);
        }
        assert!(correction_weights_with(&ps, &f, &f, Some(31), &mut rng_stream(5, 0)).is_err());
    }

    #[test]
    fn size_guard() {
        let x: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        let data = prepare_dataset(&x).unwrap();
        let prior = PriorConfig::default();
        let cfg = CorrectionConfig {
            max_n: Some(32),
            ..Default::default()
        };
        let ps = draws(4, 6);
        assert!(matches!(
            correction_weights(&ps, &data, &prior, ApproxMode::Whittle, &cfg, &mut rng_stream(0, 0)),
            Err(Error::Size(_))
        ));
        let open = CorrectionConfig {
            max_n: None,
            ..Default::default()
        };
        let s = correction_weights(&ps, &data, &prior, ApproxMode::Whittle, &open, &mut rng_stream(0, 0)).unwrap();
        assert_eq!(s.len(), 4);
    }
}
