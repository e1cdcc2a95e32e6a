//! O(n) approximate likelihood: periodogram quadratic form, Toeplitz
//! inverse-density form and the asymptotic log-determinant.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{fourier_coeffs_fractional_with, plan, squared_gain, FourierGrid, FourierKernel};
use crate::model::{PriorConfig, ThetaParams};
use crate::special::log_barnes_g;

/// Which quadratic form stands in for `x̃ᵀ T(f̄)⁻¹ x̃`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApproxMode {
    /// Periodogram sum over the Fourier frequencies.
    #[default]
    Whittle,
    /// `x̃ᵀ T(1/4π²f̄) x̃` through the lag products `c_j`.
    Toeplitz,
}

/// One half-spectrum ordinate used by the Whittle sum.
#[derive(Debug, Clone, Copy)]
struct Ordinate {
    cos_lambda: f64,
    log_gain: f64,
    /// `I(λ_j) + I(λ_{n−j})`, or `I(λ_{n/2})` alone at the Nyquist frequency.
    weight: f64,
}

/// Immutable per-dataset precomputation.
#[derive(Debug, Clone)]
pub struct DatasetContext {
    x: Vec<f64>,
    x_tilde: Vec<f64>,
    mean: f64,
    lag_products: Vec<f64>,
    periodogram: Vec<f64>,
    ordinates: Vec<Ordinate>,
}

impl DatasetContext {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x_tilde(&self) -> &[f64] {
        &self.x_tilde
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `c_0 = Σ x̃_i²` and `c_j = 2 Σ_{i=1}^{n−j} x̃_i x̃_{i+j}`.
    pub fn lag_products(&self) -> &[f64] {
        &self.lag_products
    }

    /// `I(λ_j) = |Σ_t x̃_t e^{itλ_j}|²` at `λ_j = 2πj/n`, `j = 0..n`.
    pub fn periodogram(&self) -> &[f64] {
        &self.periodogram
    }

    /// Fourier frequency `2πj/n`.
    pub fn frequency(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n() as f64
    }
}

/// Centres the series and precomputes lag products and the periodogram.
pub fn prepare_dataset(x: &[f64]) -> Result<DatasetContext> {
    let n = x.len();
    if n < 4 {
        return Err(Error::Size(format!("series of length {n}; need at least 4")));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite value at index {i}")));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let x_tilde: Vec<f64> = x.iter().map(|v| v - mean).collect();

    let spectrum = dft(&x_tilde, n);
    let periodogram: Vec<f64> = spectrum.iter().map(|z| z.norm_sqr()).collect();

    // Lag products from the periodogram of the series padded to 2n.
    let padded = dft(&x_tilde, 2 * n);
    let power: Vec<Complex64> = padded.iter().map(|z| Complex64::new(z.norm_sqr(), 0.0)).collect();
    let mut acov = power;
    plan(2 * n, FftDirection::Inverse).process(&mut acov);
    let scale = 1.0 / (2 * n) as f64;
    let mut lag_products: Vec<f64> = (0..n).map(|j| 2.0 * acov[j].re * scale).collect();
    lag_products[0] = x_tilde.iter().map(|v| v * v).sum();

    let half = n / 2;
    let ordinates = (1..=half)
        .map(|j| {
            let lambda = 2.0 * PI * j as f64 / n as f64;
            let weight = if 2 * j == n {
                periodogram[j]
            } else {
                periodogram[j] + periodogram[n - j]
            };
            Ordinate {
                cos_lambda: lambda.cos(),
                log_gain: squared_gain(lambda).ln(),
                weight,
            }
        })
        .collect();

    Ok(DatasetContext {
        x: x.to_vec(),
        x_tilde,
        mean,
        lag_products,
        periodogram,
        ordinates,
    })
}

/// `Σ_t v_t e^{−2πi jt/len}` for `j = 0..len`, zero-padding `v`.
fn dft(v: &[f64], len: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = v.iter().map(|&r| Complex64::new(r, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    plan(len, FftDirection::Forward).process(&mut buf);
    buf
}

/// `h(λ) = 1/(4π² f̄_θ(λ))` as its Fourier coefficients `γ_h(0..n)`.
pub fn inverse_density_coeffs(theta: &ThetaParams, n: usize) -> Result<Vec<f64>> {
    let acf = fourier_coeffs_fractional_with(
        -theta.d(),
        |lambda| (-theta.cosine_sum(lambda)).exp() / (2.0 * PI),
        n,
        FourierGrid::for_lags(n),
        FourierKernel::default(),
    )?;
    Ok(acf.0)
}

/// `Σ_j c_j γ_h(j)`, which equals `x̃ᵀ T(h) x̃`.
pub fn quadform_approx_toeplitz(theta: &ThetaParams, data: &DatasetContext) -> Result<f64> {
    let gamma = inverse_density_coeffs(theta, data.n())?;
    Ok(data
        .lag_products
        .iter()
        .zip(&gamma)
        .map(|(c, g)| c * g)
        .sum())
}

/// `(1/2πn) Σ_{j=1}^{n−1} I(λ_j)/f̄_θ(λ_j)`, frequencies folded into `(0, π]`.
pub fn quadform_whittle(theta: &ThetaParams, data: &DatasetContext) -> Result<f64> {
    let d = theta.d();
    let xi = &theta.xi;
    let mut total = 0.0;
    for o in &data.ordinates {
        // Σ ξ_i cos(iλ) by Clenshaw, inlined to reuse cos λ.
        let (mut b1, mut b2) = (0.0, 0.0);
        for &a in xi.iter().rev() {
            let b0 = a + 2.0 * o.cos_lambda * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        let cosine_sum = o.cos_lambda * b1 - b2;
        total += o.weight * (d * o.log_gain - cosine_sum).exp();
    }
    Ok(total / data.n() as f64)
}

/// Large-`n` approximation of `ln |T(f̄_θ)|`:
/// `d² ln n + ¼ Σ jξ_j² + d Σ jξ_j + ln(G(1−d)² / G(1−2d))`.
pub fn log_det_approx(theta: &ThetaParams, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Size(format!("log-determinant needs n >= 2, got {n}")));
    }
    let d = theta.d();
    let (mut quad, mut lin) = (0.0, 0.0);
    for (i, &x) in theta.xi.iter().enumerate() {
        let j = (i + 1) as f64;
        quad += j * x * x;
        lin += j * x;
    }
    let barnes = 2.0 * log_barnes_g(1.0 - d)? - log_barnes_g(1.0 - 2.0 * d)?;
    Ok(d * d * (n as f64).ln() + 0.25 * quad + d * lin + barnes)
}

/// `−½ D_n(θ) − (a + n/2) ln(b + Q/2)`, on the same scale as the exact
/// marginal likelihood.
pub fn approx_log_lik(
    theta: &ThetaParams,
    data: &DatasetContext,
    cfg: &PriorConfig,
    mode: ApproxMode,
) -> Result<f64> {
    if !theta.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }
    let q = match mode {
        ApproxMode::Whittle => quadform_whittle(theta, data)?,
        ApproxMode::Toeplitz => quadform_approx_toeplitz(theta, data)?,
    };
    let n = data.n();
    let log_det = log_det_approx(theta, n)?;
    let value = -0.5 * log_det - (cfg.a + 0.5 * n as f64) * (cfg.b + 0.5 * q).ln();
    Ok(if value.is_nan() { f64::NEG_INFINITY } else { value })
}
