//! Tempered sequential Monte Carlo from the prior to the approximate
//! posterior.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use roots::{find_root_brent, Convergency};
use serde::{Deserialize, Serialize};

use crate::approx::{ApproxMode, DatasetContext};
use crate::error::{Error, Result};
use crate::kernels::{
    calibrate_scales, mcmc_cycle, ApproxLikelihood, KernelConfig, LogLikelihood, MoveStats, Particle,
};
use crate::model::{sample_prior, sample_prior_given_k, PriorConfig, ThetaParams};

const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmcConfig {
    /// Number of particles.
    #[serde(rename = "N")]
    pub n_particles: usize,
    /// MCMC cycles per move step. Zero turns the sampler into plain
    /// importance sampling from the prior.
    #[serde(rename = "M")]
    pub m_cycles: usize,
    /// Target ESS fraction for the tempering schedule.
    pub c: f64,
    pub seed: u64,
    pub k_max: usize,
    /// Freezes the order at this value when set.
    pub fixed_k: Option<usize>,
    pub mode: ApproxMode,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            n_particles: 1000,
            m_cycles: 20,
            c: 0.5,
            seed: 0,
            k_max: 50,
            fixed_k: None,
            mode: ApproxMode::Whittle,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        self.check()?;
        if self.m_cycles == 0 {
            return Err(Error::Domain("smc.M must be at least 1".into()));
        }
        Ok(())
    }

    /// Validation without the `M ≥ 1` rule.
    fn check(&self) -> Result<()> {
        if self.n_particles < 10 {
            return Err(Error::Domain(format!(
                "smc.N = {} below the minimum of 10",
                self.n_particles
            )));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::Domain(format!("smc.c = {} outside (0, 1)", self.c)));
        }
        if let Some(k) = self.fixed_k {
            if k > self.k_max {
                return Err(Error::Domain(format!("fixed order {k} above k_max")));
            }
        }
        Ok(())
    }
}

/// Diagnostics of one SMC iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub gamma: f64,
    pub alpha: f64,
    /// ESS of the incremental weights, before resampling.
    pub ess: f64,
    /// `ln` of the mean incremental weight.
    pub log_mean_weight: f64,
    pub stats: MoveStats,
}

/// Particle population with its full history.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    pub particles: Vec<Particle>,
    /// Unnormalised log-weights; all zero after a resampling step.
    pub log_weights: Vec<f64>,
    pub gamma: f64,
    pub history: Vec<IterationRecord>,
    /// Estimate of `ln ∫ p(θ) p̃(x|θ) dθ`.
    pub log_evidence: f64,
}

impl ParticleSystem {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn normalized_weights(&self) -> Result<Vec<f64>> {
        normalize(&self.log_weights, self.history.len())
    }

    /// Self-normalised estimate of `E[stat(θ)]`.
    pub fn weighted_mean<F: Fn(&ThetaParams) -> f64>(&self, stat: F) -> Result<f64> {
        let w = self.normalized_weights()?;
        Ok(self
            .particles
            .iter()
            .zip(&w)
            .map(|(p, w)| w * stat(&p.theta))
            .sum())
    }

    pub fn gamma_schedule(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.gamma).collect()
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn normalize(log_weights: &[f64], iteration: usize) -> Result<Vec<f64>> {
    let total = log_sum_exp(log_weights);
    if !total.is_finite() {
        return Err(Error::Degenerate { iteration });
    }
    Ok(log_weights.iter().map(|w| (w - total).exp()).collect())
}

/// `(Σ w)² / Σ w²` from log-weights.
pub fn ess(log_weights: &[f64]) -> Result<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Degenerate { iteration: 0 });
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    for w in log_weights {
        let e = (w - max).exp();
        s1 += e;
        s2 += e * e;
    }
    Ok(s1 * s1 / s2)
}

fn tempered_weights(base: &[f64], logliks: &[f64], alpha: f64) -> Vec<f64> {
    base.iter()
        .zip(logliks)
        .map(|(b, l)| if alpha == 0.0 { *b } else { b + alpha * l })
        .collect()
}

struct AlphaTolerance;

impl Convergency<f64> for AlphaTolerance {
    fn is_root_found(&mut self, y: f64) -> bool {
        y == 0.0
    }

    fn is_converged(&mut self, x1: f64, x2: f64) -> bool {
        (x1 - x2).abs() < 1e-10
    }

    fn is_iteration_limit_reached(&mut self, iter: usize) -> bool {
        iter >= 100
    }
}

/// Next exponent `γ_t = γ_{t−1} + α` with `ESS(base + α ℓ) = cN`, or 1 when
/// the full remaining step keeps the ESS above `cN`.
pub fn solve_next_gamma(base: &[f64], logliks: &[f64], gamma_prev: f64, c: f64) -> Result<f64> {
    if !(gamma_prev < 1.0) {
        return Err(Error::Schedule(format!("already at γ = {gamma_prev}")));
    }
    let target = c * base.len() as f64;
    let ess_at = |alpha: f64| ess(&tempered_weights(base, logliks, alpha));
    let room = 1.0 - gamma_prev;
    if ess_at(room)? >= target {
        return Ok(1.0);
    }
    let f = |alpha: f64| ess_at(alpha).unwrap_or(0.0) - target;
    let alpha = find_root_brent(0.0, room, f, &mut AlphaTolerance)
        .map_err(|e| Error::Schedule(format!("tempering root-find failed: {e}")))?;
    Ok((gamma_prev + alpha).min(1.0))
}

/// `N` independent categorical draws from normalised weights.
pub fn multinomial_resample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(weights)
        .map_err(|e| Error::InvalidState(format!("resampling weights: {e}")))?;
    Ok((0..weights.len()).map(|_| dist.sample(rng)).collect())
}

/// Stream 0 drives the schedule and resampling; stream `i + 1` belongs to
/// particle slot `i`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs the sampler on the approximate likelihood of `data`.
pub fn run_smc(data: &DatasetContext, prior: &PriorConfig, cfg: &SmcConfig) -> Result<ParticleSystem> {
    let target = ApproxLikelihood {
        data,
        prior,
        mode: cfg.mode,
    };
    run_smc_with(&target, prior, cfg)
}

/// Runs the sampler on any likelihood.
pub fn run_smc_with<L: LogLikelihood>(
    target: &L,
    prior: &PriorConfig,
    cfg: &SmcConfig,
) -> Result<ParticleSystem> {
    cfg.check()?;
    prior.validate()?;
    let n = cfg.n_particles;
    let mut master = rng_stream(cfg.seed, 0);
    let mut streams: Vec<ChaCha8Rng> = (1..=n as u64).map(|i| rng_stream(cfg.seed, i)).collect();

    let mut particles: Vec<Particle> = streams
        .par_iter_mut()
        .map(|rng| {
            let theta = match cfg.fixed_k {
                Some(k) => sample_prior_given_k(k, prior, rng),
                None => sample_prior(prior, rng),
            };
            Particle::new(theta, target)
        })
        .collect();

    let mut system = ParticleSystem {
        particles: Vec::new(),
        log_weights: vec![0.0; n],
        gamma: 0.0,
        history: Vec::new(),
        log_evidence: 0.0,
    };

    while system.gamma < 1.0 {
        let iteration = system.history.len() + 1;
        if iteration > MAX_ITERATIONS {
            return Err(Error::Schedule(format!(
                "no convergence to γ = 1 after {MAX_ITERATIONS} iterations"
            )));
        }
        let logliks: Vec<f64> = particles.iter().map(|p| p.loglik).collect();
        if logliks.iter().all(|l| *l == f64::NEG_INFINITY) {
            return Err(Error::Degenerate { iteration });
        }
        let gamma = if cfg.m_cycles == 0 {
            1.0
        } else {
            solve_next_gamma(&system.log_weights, &logliks, system.gamma, cfg.c)?
        };
        let alpha = gamma - system.gamma;
        let increments = tempered_weights(&vec![0.0; n], &logliks, alpha);
        let log_mean_weight = log_sum_exp(&increments) - (n as f64).ln();
        let new_weights = tempered_weights(&system.log_weights, &logliks, alpha);
        let ess_now = ess(&new_weights).map_err(|_| Error::Degenerate { iteration })?;
        system.log_evidence += log_mean_weight;
        system.gamma = gamma;

        let mut stats = MoveStats::default();
        if cfg.m_cycles == 0 {
            system.log_weights = new_weights;
        } else {
            let weights = normalize(&new_weights, iteration)?;
            let picks = multinomial_resample(&weights, &mut master)?;
            particles = picks.iter().map(|&i| particles[i].clone()).collect();
            system.log_weights = vec![0.0; n];

            let kernel = KernelConfig {
                gamma,
                scales: calibrate_scales(particles.iter().map(|p| &p.theta)),
                k_max: cfg.k_max,
                freeze_k: cfg.fixed_k.is_some(),
                ..Default::default()
            };
            let moved: Vec<Result<(Particle, MoveStats)>> = particles
                .par_iter()
                .zip(streams.par_iter_mut())
                .map(|(p, rng)| {
                    let mut local = MoveStats::default();
                    let mut current = p.clone();
                    for _ in 0..cfg.m_cycles {
                        current = mcmc_cycle(&current, &kernel, prior, target, rng, &mut local)?;
                    }
                    Ok((current, local))
                })
                .collect();
            particles = Vec::with_capacity(n);
            for r in moved {
                let (p, s) = r?;
                stats.merge(&s);
                particles.push(p);
            }
            debug_assert!({
                let p = &particles[0];
                let fresh = target.log_lik(&p.theta);
                fresh == p.loglik || (fresh - p.loglik).abs() <= 1e-9 * fresh.abs()
            });
        }
        log::info!(
            "iteration {iteration}: gamma = {gamma:.6}, ess = {ess_now:.1}, rw = {:.3}, bd = {:.3}",
            stats.rw_rate(),
            stats.bd_rate()
        );
        system.history.push(IterationRecord {
            gamma,
            alpha,
            ess: ess_now,
            log_mean_weight,
            stats,
        });
    }
    system.particles = particles;
    Ok(system)
}
