//! Metropolis kernels targeting `η_γ(θ) ∝ p(θ) p̃(x|θ)^γ`: a Gaussian
//! random walk at fixed order and a birth/death move on the order.

use std::collections::BTreeMap;

use faer::Mat;
use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::approx::{approx_log_lik, ApproxMode, DatasetContext};
use crate::error::{Error, Result};
use crate::exact::{cholesky, exact_log_marglik};
use crate::model::{
    log_prior_given_k, sample_conditional_birth, PriorConfig, ThetaParams,
};

/// Optimal random-walk scaling constant.
const RW_SCALE: f64 = 2.38;

/// Log-likelihood evaluator; `−∞` marks an impossible parameter.
pub trait LogLikelihood: Sync {
    fn log_lik(&self, theta: &ThetaParams) -> f64;
}

impl<F> LogLikelihood for F
where
    F: Fn(&ThetaParams) -> f64 + Sync,
{
    fn log_lik(&self, theta: &ThetaParams) -> f64 {
        self(theta)
    }
}

/// The O(n) approximate marginal likelihood.
#[derive(Debug, Clone, Copy)]
pub struct ApproxLikelihood<'a> {
    pub data: &'a DatasetContext,
    pub prior: &'a PriorConfig,
    pub mode: ApproxMode,
}

impl LogLikelihood for ApproxLikelihood<'_> {
    fn log_lik(&self, theta: &ThetaParams) -> f64 {
        approx_log_lik(theta, self.data, self.prior, self.mode).unwrap_or_else(|e| {
            log::debug!("approximate likelihood failed at {theta:?}: {e}");
            f64::NEG_INFINITY
        })
    }
}

/// The exact marginal likelihood through a dense Cholesky factor.
#[derive(Debug, Clone, Copy)]
pub struct ExactLikelihood<'a> {
    pub data: &'a DatasetContext,
    pub prior: &'a PriorConfig,
}

impl LogLikelihood for ExactLikelihood<'_> {
    fn log_lik(&self, theta: &ThetaParams) -> f64 {
        exact_log_marglik(theta, self.data, self.prior).unwrap_or_else(|e| {
            log::debug!("exact likelihood failed at {theta:?}: {e}");
            f64::NEG_INFINITY
        })
    }
}

/// A parameter with its cached untempered log-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub theta: ThetaParams,
    pub loglik: f64,
}

impl Particle {
    pub fn new<L: LogLikelihood + ?Sized>(theta: ThetaParams, target: &L) -> Self {
        let loglik = target.log_lik(&theta);
        Self { theta, loglik }
    }
}

/// `γ ℓ`, with `0 · (−∞)` read as 0 so the prior is a valid target.
fn tempered(gamma: f64, loglik: f64) -> f64 {
    if gamma == 0.0 {
        0.0
    } else {
        gamma * loglik
    }
}

/// Random-walk covariance for one order together with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct ProposalScale {
    cov: Mat<f64>,
    lower: Mat<f64>,
}

impl ProposalScale {
    pub fn new(cov: Mat<f64>) -> Result<Self> {
        let lower = cholesky(cov.clone())?.lower().clone();
        Ok(Self { cov, lower })
    }

    /// `(2.38²/(k+1)) · I_{k+1}`.
    pub fn identity(k: usize) -> Self {
        Self::isotropic(k, RW_SCALE * RW_SCALE / (k + 1) as f64)
    }

    /// `τ · I_{k+1}`.
    pub fn isotropic(k: usize, tau: f64) -> Self {
        let dim = k + 1;
        let cov = Mat::from_fn(dim, dim, |i, j| if i == j { tau } else { 0.0 });
        let lower = Mat::from_fn(dim, dim, |i, j| if i == j { tau.sqrt() } else { 0.0 });
        Self { cov, lower }
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn cov(&self) -> &Mat<f64> {
        &self.cov
    }

    fn perturb<R: Rng + ?Sized>(&self, block: &mut [f64], rng: &mut R) {
        let z: Vec<f64> = (0..block.len()).map(|_| rng.sample(StandardNormal)).collect();
        for (i, b) in block.iter_mut().enumerate() {
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                *b += self.lower[(i, j)] * zj;
            }
        }
    }
}

/// Parameters of both kernels at one tempering level.
#[derive(Debug, Clone)]
pub struct KernelConfig {
    /// Tempering exponent `γ ∈ [0, 1]`.
    pub gamma: f64,
    /// Per-order random-walk covariance; missing orders use the identity rule.
    pub scales: BTreeMap<usize, ProposalScale>,
    /// Birth probability for `k ≥ 1`; from `k = 0` a birth is always proposed.
    pub rho_up: f64,
    /// Births beyond this order are rejected.
    pub k_max: usize,
    /// Fixed isotropic scale overriding `scales` when set.
    pub fixed_tau: Option<f64>,
    /// Disables the birth/death move, freezing the order.
    pub freeze_k: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            scales: BTreeMap::new(),
            rho_up: 0.5,
            k_max: 50,
            fixed_tau: None,
            freeze_k: false,
        }
    }
}

impl KernelConfig {
    pub fn rho_up(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            self.rho_up
        }
    }

    pub fn rho_down(&self, k: usize) -> f64 {
        1.0 - self.rho_up(k)
    }

    pub fn scale_for(&self, k: usize) -> ProposalScale {
        if let Some(tau) = self.fixed_tau {
            return ProposalScale::isotropic(k, tau);
        }
        self.scales
            .get(&k)
            .cloned()
            .unwrap_or_else(|| ProposalScale::identity(k))
    }
}

/// Acceptance counters for both move types.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats {
    pub rw_proposed: u64,
    pub rw_accepted: u64,
    pub bd_proposed: u64,
    pub bd_accepted: u64,
}

impl MoveStats {
    pub fn merge(&mut self, other: &MoveStats) {
        self.rw_proposed += other.rw_proposed;
        self.rw_accepted += other.rw_accepted;
        self.bd_proposed += other.bd_proposed;
        self.bd_accepted += other.bd_accepted;
    }

    pub fn rw_rate(&self) -> f64 {
        ratio(self.rw_accepted, self.rw_proposed)
    }

    pub fn bd_rate(&self) -> f64 {
        ratio(self.bd_accepted, self.bd_proposed)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

fn accept<R: Rng + ?Sized>(log_r: f64, rng: &mut R) -> bool {
    let u: f64 = Open01.sample(rng);
    u.ln() < log_r
}

fn check_current(value: f64, theta: &ThetaParams) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidState(format!(
            "current point has non-finite target {value} at {theta:?}"
        )))
    }
}

/// One Gaussian random-walk Metropolis step on `(t, ξ₁, …, ξ_k)` at fixed `k`.
pub fn rw_metropolis_step<L, R>(
    current: &Particle,
    cfg: &KernelConfig,
    prior: &PriorConfig,
    target: &L,
    rng: &mut R,
    stats: &mut MoveStats,
) -> Result<Particle>
where
    L: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    let k = current.theta.k();
    let here = log_prior_given_k(&current.theta, prior) + tempered(cfg.gamma, current.loglik);
    check_current(here, &current.theta)?;

    let mut block = current.theta.block();
    cfg.scale_for(k).perturb(&mut block, rng);
    let theta = ThetaParams::from_block(&block);
    stats.rw_proposed += 1;

    let prior_there = log_prior_given_k(&theta, prior);
    if !prior_there.is_finite() {
        return Ok(current.clone());
    }
    let proposal = Particle::new(theta, target);
    let there = prior_there + tempered(cfg.gamma, proposal.loglik);
    if accept(there - here, rng) {
        stats.rw_accepted += 1;
        Ok(proposal)
    } else {
        Ok(current.clone())
    }
}

/// `ln r` of a birth or death from `current` to `proposal`. The new
/// coordinate's prior density cancels against its proposal density.
pub fn birth_death_log_ratio(
    current: &Particle,
    proposal: &Particle,
    cfg: &KernelConfig,
    prior: &PriorConfig,
) -> f64 {
    let (k, k_new) = (current.theta.k(), proposal.theta.k());
    let forward = if k_new > k { cfg.rho_up(k) } else { cfg.rho_down(k) };
    let backward = if k_new > k { cfg.rho_down(k_new) } else { cfg.rho_up(k_new) };
    backward.ln() + prior.log_k_mass(k_new) + tempered(cfg.gamma, proposal.loglik)
        - forward.ln()
        - prior.log_k_mass(k)
        - tempered(cfg.gamma, current.loglik)
}

/// One birth/death step: append `ξ_{k+1}` drawn from its conditional prior,
/// or drop `ξ_k`.
pub fn birth_death_step<L, R>(
    current: &Particle,
    cfg: &KernelConfig,
    prior: &PriorConfig,
    target: &L,
    rng: &mut R,
    stats: &mut MoveStats,
) -> Result<Particle>
where
    L: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    let k = current.theta.k();
    check_current(tempered(cfg.gamma, current.loglik), &current.theta)?;
    stats.bd_proposed += 1;

    let birth = rng.random::<f64>() < cfg.rho_up(k);
    let mut theta = current.theta.clone();
    if birth {
        if k >= cfg.k_max {
            log::warn!("birth above k_max = {} rejected", cfg.k_max);
            return Ok(current.clone());
        }
        let xi_new = sample_conditional_birth(&theta, prior, rng);
        theta.xi.push(xi_new);
    } else {
        theta.xi.pop();
    }
    let proposal = Particle::new(theta, target);
    let log_r = birth_death_log_ratio(current, &proposal, cfg, prior);
    if accept(log_r, rng) {
        stats.bd_accepted += 1;
        Ok(proposal)
    } else {
        Ok(current.clone())
    }
}

/// One full cycle: random walk, then birth/death unless the order is frozen.
pub fn mcmc_cycle<L, R>(
    current: &Particle,
    cfg: &KernelConfig,
    prior: &PriorConfig,
    target: &L,
    rng: &mut R,
    stats: &mut MoveStats,
) -> Result<Particle>
where
    L: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    let moved = rw_metropolis_step(current, cfg, prior, target, rng, stats)?;
    if cfg.freeze_k {
        return Ok(moved);
    }
    birth_death_step(&moved, cfg, prior, target, rng, stats)
}

/// `Σ_k = (2.38²/(k+1)) (S_k + εI)` from the particles at each order, with
/// `ε = 1e−8 · tr(S_k)/(k+1)` (floored at 1e−12). Orders with fewer than
/// `2(k+2)` particles get `(2.38²/(k+1)) I`.
pub fn calibrate_scales<'a, I>(particles: I) -> BTreeMap<usize, ProposalScale>
where
    I: IntoIterator<Item = &'a ThetaParams>,
{
    let mut groups: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for theta in particles {
        groups.entry(theta.k()).or_default().push(theta.block());
    }
    groups
        .into_iter()
        .map(|(k, blocks)| {
            let scale = if blocks.len() >= 2 * (k + 2) {
                empirical_scale(k, &blocks).unwrap_or_else(|| ProposalScale::identity(k))
            } else {
                ProposalScale::identity(k)
            };
            (k, scale)
        })
        .collect()
}

fn empirical_scale(k: usize, blocks: &[Vec<f64>]) -> Option<ProposalScale> {
    let dim = k + 1;
    let count = blocks.len() as f64;
    let mut mean = vec![0.0; dim];
    for b in blocks {
        for (m, v) in mean.iter_mut().zip(b) {
            *m += v / count;
        }
    }
    let mut cov = Mat::<f64>::zeros(dim, dim);
    for b in blocks {
        for i in 0..dim {
            for j in 0..=i {
                cov[(i, j)] += (b[i] - mean[i]) * (b[j] - mean[j]);
            }
        }
    }
    let trace: f64 = (0..dim).map(|i| cov[(i, i)]).sum::<f64>() / (count - 1.0);
    let jitter = (1e-8 * trace / dim as f64).max(1e-12);
    let tau = RW_SCALE * RW_SCALE / dim as f64;
    for i in 0..dim {
        for j in 0..=i {
            let mut v = cov[(i, j)] / (count - 1.0);
            if i == j {
                v += jitter;
            }
            cov[(i, j)] = tau * v;
            cov[(j, i)] = tau * v;
        }
    }
    ProposalScale::new(cov).ok()
}

/// Thinned output of a plain MCMC run.
#[derive(Debug, Clone, Default)]
pub struct ChainTrace {
    pub states: Vec<Particle>,
    pub stats: MoveStats,
}

/// Runs `steps` cycles from `init`, keeping every `thin`-th state.
pub fn run_chain<L, R>(
    init: Particle,
    cfg: &KernelConfig,
    prior: &PriorConfig,
    target: &L,
    steps: usize,
    thin: usize,
    rng: &mut R,
) -> Result<ChainTrace>
where
    L: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    let thin = thin.max(1);
    let mut out = ChainTrace {
        states: Vec::with_capacity(steps / thin),
        stats: MoveStats::default(),
    };
    let mut current = init;
    for step in 1..=steps {
        current = mcmc_cycle(&current, cfg, prior, target, rng, &mut out.stats)?;
        if step % thin == 0 {
            out.states.push(current.clone());
        }
    }
    Ok(out)
}
