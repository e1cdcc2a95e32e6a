//! FEXP parametrisation, ARFIMA densities and the prior on `(k, d, ξ)`.
//!
//! The scale `σ²` and the mean `μ` are integrated out analytically under a
//! conjugate prior, so the sampled parameter is only
//! `θ = (k, logit(2d), ξ₁, …, ξ_k)` and the normalised density is
//!
//! ```text
//! f̄_θ(λ) = (2π)⁻¹ |1 − e^{−iλ}|^{−2d} exp{ Σ_{j=1}^{k} ξ_j cos(jλ) }
//! ```

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Geometric, Normal, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{fourier_coeffs_longmemory, squared_gain, AutocovarianceSeq};

const LN_TWO_PI: f64 = 1.837_877_066_409_345_483_560_659_472_811;

/// Trans-dimensional FEXP parameter. The order `k` is the length of `xi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    /// `logit(2d)`.
    pub t: f64,
    /// Cosine coefficients `ξ₁, …, ξ_k`.
    pub xi: Vec<f64>,
}

impl ThetaParams {
    pub fn new(t: f64, xi: Vec<f64>) -> Self {
        Self { t, xi }
    }

    /// Parameter with long-memory exponent `d ∈ (0, 1/2)`.
    pub fn from_d(d: f64, xi: Vec<f64>) -> Result<Self> {
        if !(d > 0.0 && d < 0.5) {
            return Err(Error::Domain(format!("d = {d} outside (0, 1/2)")));
        }
        Ok(Self {
            t: logit(2.0 * d),
            xi,
        })
    }

    pub fn k(&self) -> usize {
        self.xi.len()
    }

    pub fn d(&self) -> f64 {
        0.5 * sigmoid(self.t)
    }

    /// Free coordinates `(t, ξ₁, …, ξ_k)`.
    pub fn block(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.k() + 1);
        v.push(self.t);
        v.extend_from_slice(&self.xi);
        v
    }

    pub fn from_block(block: &[f64]) -> Self {
        Self {
            t: block[0],
            xi: block[1..].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.xi.iter().all(|x| x.is_finite())
    }

    /// `Σ_j ξ_j cos(jλ)`.
    pub fn cosine_sum(&self, lambda: f64) -> f64 {
        cosine_series(&self.xi, lambda)
    }

    /// `ln f̄_θ(λ)` for `λ ≠ 0`.
    pub fn log_fbar(&self, lambda: f64) -> f64 {
        -self.d() * squared_gain(lambda).ln() + self.cosine_sum(lambda) - LN_TWO_PI
    }

    /// Bounded factor `ḡ_θ(λ)/2π` of `f̄_θ = |1 − e^{−iλ}|^{−2d} ḡ_θ/2π`.
    pub fn short_memory(&self, lambda: f64) -> f64 {
        self.cosine_sum(lambda).exp() / (2.0 * PI)
    }

    /// Autocovariances of `f̄_θ` at lags `0..n`.
    pub fn autocovariance(&self, n: usize) -> Result<AutocovarianceSeq> {
        fourier_coeffs_longmemory(self.d(), |x| self.short_memory(x), n)
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `Σ_{j=1}^{k} a_j cos(jλ)` by Clenshaw's recurrence.
pub fn cosine_series(coeffs: &[f64], lambda: f64) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    let x = lambda.cos();
    let (mut b1, mut b2) = (0.0, 0.0);
    for &a in coeffs.iter().rev() {
        let b0 = a + 2.0 * x * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    // b1 now holds b_1 and b2 holds b_2 for a_0 = 0
    x * b1 - b2
}

/// Hyperparameters of the prior on `θ`, `μ` and `σ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Success probability of the geometric prior on `k ∈ {0, 1, …}`.
    pub geom_p: f64,
    /// Smoothness exponent: `ξ_j ~ N(0, xi_var0 · j^{−2β})`.
    pub beta: f64,
    pub xi_var0: f64,
    /// `1/σ² ~ Gamma(a, b)`.
    pub a: f64,
    pub b: f64,
    /// `μ | σ² ~ N(m_mu, σ²/g_mu)`.
    pub g_mu: f64,
    pub m_mu: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            geom_p: 0.2,
            beta: 1.0,
            xi_var0: 100.0,
            a: 0.5,
            b: 0.5,
            g_mu: 0.1,
            m_mu: 0.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Domain(format!("prior: {what}")));
        if !(self.geom_p > 0.0 && self.geom_p < 1.0) {
            return bad("geom_p must lie in (0, 1)");
        }
        if !(self.a > 0.0 && self.b > 0.0) {
            return bad("a and b must be positive");
        }
        if !(self.g_mu > 0.0) {
            return bad("g_mu must be positive");
        }
        if !(self.xi_var0 > 0.0) {
            return bad("xi_var0 must be positive");
        }
        if !(self.beta >= 0.0) {
            return bad("beta must be nonnegative");
        }
        if !self.m_mu.is_finite() {
            return bad("m_mu must be finite");
        }
        Ok(())
    }

    /// Prior variance of `ξ_j`.
    pub fn xi_variance(&self, j: usize) -> f64 {
        self.xi_var0 * (j as f64).powf(-2.0 * self.beta)
    }

    /// `ln p(k)` under the geometric prior.
    pub fn log_k_mass(&self, k: usize) -> f64 {
        self.geom_p.ln() + k as f64 * (-self.geom_p).ln_1p()
    }
}

fn log_normal_density(x: f64, variance: f64) -> f64 {
    -0.5 * (LN_TWO_PI + variance.ln() + x * x / variance)
}

/// Density of `t = logit(2d)` when `d ~ Uniform[0, 1/2]`.
pub fn log_prior_t(t: f64) -> f64 {
    -softplus(-t) - softplus(t)
}

/// `ln p_k(θ_k)`: the prior of the free block given `k`.
pub fn log_prior_given_k(theta: &ThetaParams, cfg: &PriorConfig) -> f64 {
    let mut lp = log_prior_t(theta.t);
    for (j, &x) in theta.xi.iter().enumerate() {
        lp += log_normal_density(x, cfg.xi_variance(j + 1));
    }
    lp
}

/// `ln p(θ) = ln p(k) + ln p_k(θ_k)`.
pub fn log_prior(theta: &ThetaParams, cfg: &PriorConfig) -> f64 {
    cfg.log_k_mass(theta.k()) + log_prior_given_k(theta, cfg)
}

/// Conditional prior of the coordinate `ξ_{k+1}` appended by a birth move.
pub fn log_conditional_birth_density(theta: &ThetaParams, xi_new: f64, cfg: &PriorConfig) -> f64 {
    log_normal_density(xi_new, cfg.xi_variance(theta.k() + 1))
}

pub fn sample_conditional_birth<R: Rng + ?Sized>(
    theta: &ThetaParams,
    cfg: &PriorConfig,
    rng: &mut R,
) -> f64 {
    let sd = cfg.xi_variance(theta.k() + 1).sqrt();
    Normal::new(0.0, sd).expect("finite positive sd").sample(rng)
}

/// Draws `θ` from the prior.
pub fn sample_prior<R: Rng + ?Sized>(cfg: &PriorConfig, rng: &mut R) -> ThetaParams {
    let k = Geometric::new(cfg.geom_p)
        .expect("validated geometric probability")
        .sample(rng) as usize;
    sample_prior_given_k(k, cfg, rng)
}

/// Draws `θ_k` from the prior conditional on the order.
pub fn sample_prior_given_k<R: Rng + ?Sized>(
    k: usize,
    cfg: &PriorConfig,
    rng: &mut R,
) -> ThetaParams {
    let u: f64 = Open01.sample(rng);
    let xi = (1..=k)
        .map(|j| {
            Normal::new(0.0, cfg.xi_variance(j).sqrt())
                .expect("finite positive sd")
                .sample(rng)
        })
        .collect();
    ThetaParams { t: logit(u), xi }
}

/// Evaluable spectral density with the long-memory exponent split out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralModel {
    /// Normalised FEXP density `f̄_θ`.
    Fexp { theta: ThetaParams },
    /// `σ²/2π · |1 − e^{−iλ}|^{−2d} · |1 + Σ ma_j e^{−ijλ}|² / |1 − Σ ar_j e^{−ijλ}|²`.
    Arfima {
        d: f64,
        #[serde(default)]
        ar: Vec<f64>,
        #[serde(default)]
        ma: Vec<f64>,
        #[serde(default = "unit")]
        sigma2: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl SpectralModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            SpectralModel::Fexp { theta } => {
                if !theta.is_finite() {
                    return Err(Error::Domain("FEXP parameter is not finite".into()));
                }
            }
            SpectralModel::Arfima { d, ar, ma, sigma2 } => {
                if !(0.0..0.5).contains(d) {
                    return Err(Error::Domain(format!("ARFIMA d = {d} outside [0, 1/2)")));
                }
                if !(*sigma2 > 0.0 && sigma2.is_finite()) {
                    return Err(Error::Domain(format!("ARFIMA sigma2 = {sigma2} must be positive")));
                }
                if ar.iter().chain(ma).any(|c| !c.is_finite()) {
                    return Err(Error::Domain("ARFIMA coefficients must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn memory(&self) -> f64 {
        match self {
            SpectralModel::Fexp { theta } => theta.d(),
            SpectralModel::Arfima { d, .. } => *d,
        }
    }

    /// Bounded factor `g` with `f(λ) = |1 − e^{−iλ}|^{−2d} g(λ)`.
    pub fn short_memory(&self, lambda: f64) -> f64 {
        match self {
            SpectralModel::Fexp { theta } => theta.short_memory(lambda),
            SpectralModel::Arfima { ar, ma, sigma2, .. } => {
                let ma_gain = polynomial_gain(1.0, ma, lambda);
                let ar_gain = polynomial_gain(-1.0, ar, lambda);
                sigma2 / (2.0 * PI) * ma_gain / ar_gain
            }
        }
    }

    /// Spectral density at `λ`; symmetric in `λ`.
    pub fn eval(&self, lambda: f64) -> Result<f64> {
        let lambda = lambda.abs();
        let d = self.memory();
        if lambda == 0.0 && d > 0.0 {
            return Err(Error::Domain(
                "spectral density diverges at zero frequency".into(),
            ));
        }
        if lambda > PI * (1.0 + f64::EPSILON) {
            return Err(Error::Domain(format!("frequency {lambda} outside [-π, π]")));
        }
        let long = if d == 0.0 { 1.0 } else { squared_gain(lambda).powf(-d) };
        Ok(long * self.short_memory(lambda))
    }

    /// Autocovariances at lags `0..n`.
    pub fn autocovariance(&self, n: usize) -> Result<AutocovarianceSeq> {
        self.validate()?;
        fourier_coeffs_longmemory(self.memory(), |x| self.short_memory(x), n)
    }
}

/// `|1 + sign · Σ c_j e^{−ijλ}|²`.
fn polynomial_gain(sign: f64, coeffs: &[f64], lambda: f64) -> f64 {
    let (mut re, mut im) = (1.0, 0.0);
    for (j, c) in coeffs.iter().enumerate() {
        let angle = (j + 1) as f64 * lambda;
        re += sign * c * angle.cos();
        im -= sign * c * angle.sin();
    }
    re * re + im * im
}

/// Normalised FEXP density `f̄_θ(λ)`.
pub fn eval_fbar(model: &SpectralModel, lambda: f64) -> Result<f64> {
    model.eval(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rustfft::num_complex::Complex64;

    fn fexp(d: f64, xi: Vec<f64>) -> SpectralModel {
        SpectralModel::Fexp {
            theta: ThetaParams::from_d(d, xi).unwrap(),
        }
    }

    #[test]
    fn fbar_values() {
        let flat = SpectralModel::Fexp {
            theta: ThetaParams::new(-40.0, vec![]),
        };
        assert_relative_eq!(flat.eval(PI / 2.0).unwrap(), 1.0 / (2.0 * PI), max_relative = 1e-12);
        let m = fexp(0.25, vec![]);
        assert_relative_eq!(
            m.eval(PI).unwrap(),
            4f64.powf(-0.25) / (2.0 * PI),
            max_relative = 1e-14
        );
        assert!(m.eval(0.0).is_err());
    }

    #[test]
    fn arfima_matches_complex_arithmetic() {
        let m = SpectralModel::Arfima {
            d: 0.45,
            ar: vec![-0.9],
            ma: vec![-0.2],
            sigma2: 1.0,
        };
        for lambda in [PI, 0.3, 1.7] {
            let z = Complex64::from_polar(1.0, -lambda);
            let one = Complex64::new(1.0, 0.0);
            let oracle = (one - z).norm().powf(-0.9) * ((one - 0.2 * z) / (one + 0.9 * z)).norm_sqr()
                / (2.0 * PI);
            assert_relative_eq!(m.eval(lambda).unwrap(), oracle, max_relative = 1e-13);
        }
    }

    #[test]
    fn fbar_is_even() {
        let m = fexp(0.3, vec![0.4, -0.7, 0.2]);
        for i in 1..50 {
            let lambda = i as f64 * PI / 50.0;
            assert_eq!(m.eval(lambda).unwrap(), m.eval(-lambda).unwrap());
        }
    }

    #[test]
    fn clenshaw_matches_direct_sum() {
        let xi = [0.3, -1.2, 0.5, 2.0, -0.1];
        for i in 0..20 {
            let lambda = i as f64 * 0.17;
            let direct: f64 = xi
                .iter()
                .enumerate()
                .map(|(j, x)| x * ((j + 1) as f64 * lambda).cos())
                .sum();
            assert!((cosine_series(&xi, lambda) - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn prior_values() {
        let cfg = PriorConfig::default();
        let theta = ThetaParams::new(0.0, vec![]);
        assert_relative_eq!(theta.d(), 0.25);
        assert_relative_eq!(log_prior(&theta, &cfg), 0.2f64.ln() + 0.25f64.ln(), max_relative = 1e-14);

        let one = ThetaParams::new(0.0, vec![0.0]);
        let diff = log_prior(&one, &cfg) - log_prior(&theta, &cfg);
        assert_relative_eq!(diff, 0.8f64.ln() - 0.5 * (200.0 * PI).ln(), max_relative = 1e-14);

        assert_relative_eq!(cfg.log_k_mass(2), (0.2 * 0.8 * 0.8f64).ln(), max_relative = 1e-14);
    }

    #[test]
    fn birth_density() {
        let cfg = PriorConfig::default();
        let k0 = ThetaParams::new(0.3, vec![]);
        assert_relative_eq!(
            log_conditional_birth_density(&k0, 0.0, &cfg),
            -0.5 * (2.0 * PI * 100.0).ln(),
            max_relative = 1e-14
        );
        let k1 = ThetaParams::new(0.3, vec![1.0]);
        assert_relative_eq!(
            log_conditional_birth_density(&k1, 0.0, &cfg),
            -0.5 * (2.0 * PI * 25.0).ln(),
            max_relative = 1e-14
        );
        let cfg2 = PriorConfig {
            beta: 2.0,
            ..cfg
        };
        let k3 = ThetaParams::new(0.3, vec![1.0, 2.0, 3.0]);
        let var = 100.0 * 4f64.powi(-4);
        let want = -0.5 * (2.0 * PI * var).ln() - 1.5 * 1.5 / (2.0 * var);
        assert_relative_eq!(
            log_conditional_birth_density(&k3, 1.5, &cfg2),
            want,
            max_relative = 1e-13
        );
    }

    #[test]
    fn nested_structure_identity() {
        let cfg = PriorConfig::default();
        let full = ThetaParams::new(-0.4, vec![0.5, -1.0, 0.25]);
        let truncated = ThetaParams::new(-0.4, vec![0.5, -1.0]);
        let lhs = log_prior_given_k(&full, &cfg);
        let rhs = log_prior_given_k(&truncated, &cfg)
            + log_conditional_birth_density(&truncated, 0.25, &cfg);
        assert_relative_eq!(lhs, rhs, max_relative = 1e-14);
    }

    #[test]
    fn prior_sampling_moments() {
        let cfg = PriorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let (mut k0, mut sum_d, mut xi1) = (0usize, 0.0, Vec::new());
        for _ in 0..n {
            let th = sample_prior(&cfg, &mut rng);
            assert!(log_prior(&th, &cfg).is_finite());
            if th.k() == 0 {
                k0 += 1;
            }
            sum_d += th.d();
        }
        for _ in 0..n {
            xi1.push(sample_prior_given_k(1, &cfg, &mut rng).xi[0]);
        }
        let p0 = k0 as f64 / n as f64;
        assert!((p0 - 0.2).abs() < 0.004, "P(k=0) = {p0}");
        let mean_d = sum_d / n as f64;
        assert!((mean_d - 0.25).abs() < 0.002, "E d = {mean_d}");
        let var: f64 = xi1.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var - 100.0).abs() < 5.0, "Var xi1 = {var}");
    }

    #[test]
    fn prior_normalises_given_k() {
        // Monte Carlo over a wide Gaussian proposal: E_q[p/q] = 1.
        let cfg = PriorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 0..=2usize {
            let n = 200_000;
            let scales: Vec<f64> = std::iter::once(4.0)
                .chain((1..=k).map(|j| 1.5 * cfg.xi_variance(j).sqrt()))
                .collect();
            let mut total = 0.0;
            for _ in 0..n {
                let block: Vec<f64> = scales
                    .iter()
                    .map(|s| Normal::new(0.0, *s).unwrap().sample(&mut rng))
                    .collect();
                let log_q: f64 = block
                    .iter()
                    .zip(&scales)
                    .map(|(x, s)| log_normal_density(*x, s * s))
                    .sum();
                let theta = ThetaParams::from_block(&block);
                total += (log_prior(&theta, &cfg) - cfg.log_k_mass(k) - log_q).exp();
            }
            let mass = total / n as f64;
            assert!((mass - 1.0).abs() < 0.02, "k = {k}: {mass}");
        }
    }

    #[test]
    fn prior_config_validation() {
        assert!(PriorConfig::default().validate().is_ok());
        let bad = PriorConfig {
            geom_p: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PriorConfig {
            g_mu: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn block_round_trip() {
        let th = ThetaParams::new(1.5, vec![0.1, 0.2]);
        assert_eq!(ThetaParams::from_block(&th.block()), th);
        let th = ThetaParams::from_d(0.3, vec![]).unwrap();
        assert_relative_eq!(th.d(), 0.3, max_relative = 1e-14);
        assert!(ThetaParams::from_d(0.5, vec![]).is_err());
    }
}
