//! Fourier integrals of spectral densities and Toeplitz covariance assembly.
//!
//! For a spectral density `f` on `[-π, π]` the autocovariances are
//!
//! ```text
//! γ_f(l) = ∫ f(λ) e^{ilλ} dλ,   l = 0, 1, …
//! ```
//!
//! These are evaluated for all lags at once with one FFT over a grid of
//! `M + 1` equispaced nodes `λ_j = −π + jΔ`, `Δ = 2π/M`. Densities that
//! diverge at the origin like `|1 − e^{−iλ}|^{−2d}` are split into the
//! fractional-noise part, whose autocovariance is known in closed form, and
//! a bounded remainder that vanishes at zero.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::Mat;
use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::special::ln_gamma;

/// Forward transform `X_l = Σ_j s_j e^{+2πijl/L}` for a power-of-two length.
pub fn fft_pow2(seq: &[Complex64]) -> Result<Vec<Complex64>> {
    check_pow2(seq.len())?;
    let mut buf = seq.to_vec();
    plan(seq.len(), FftDirection::Inverse).process(&mut buf);
    Ok(buf)
}

/// Inverse of [`fft_pow2`]: `s_j = L⁻¹ Σ_l X_l e^{−2πijl/L}`.
pub fn ifft_pow2(seq: &[Complex64]) -> Result<Vec<Complex64>> {
    check_pow2(seq.len())?;
    let mut buf = seq.to_vec();
    plan(seq.len(), FftDirection::Forward).process(&mut buf);
    let scale = 1.0 / seq.len() as f64;
    for v in &mut buf {
        *v *= scale;
    }
    Ok(buf)
}

fn check_pow2(len: usize) -> Result<()> {
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::Size(format!(
            "FFT length must be a power of two >= 2, got {len}"
        )));
    }
    Ok(())
}

pub(crate) fn plan(len: usize, direction: FftDirection) -> Arc<dyn rustfft::Fft<f64>> {
    FftPlanner::new().plan_fft(len, direction)
}

/// Equispaced grid on `[-π, π]` with `M + 1` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FourierGrid {
    m: usize,
}

impl FourierGrid {
    /// Smallest power of two `M` with `M >= 2n`.
    pub fn for_lags(n: usize) -> Self {
        Self {
            m: (2 * n.max(1)).next_power_of_two(),
        }
    }

    /// Grid of explicit size, e.g. for convergence studies.
    pub fn with_size(m: usize, n: usize) -> Result<Self> {
        if m < 2 || !m.is_power_of_two() {
            return Err(Error::Size(format!("grid size {m} is not a power of two")));
        }
        if m < 2 * n {
            return Err(Error::Size(format!(
                "grid size {m} is smaller than twice the lag count {n}"
            )));
        }
        Ok(Self { m })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.m as f64
    }

    /// Node `λ_j`, computed from the centre so that `λ_{M−j} = −λ_j` exactly.
    pub fn node(&self, j: usize) -> f64 {
        (j as f64 - (self.m / 2) as f64) * self.spacing()
    }
}

/// Autocovariance sequence `γ(0), …, γ(n−1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocovarianceSeq(pub Vec<f64>);

impl AutocovarianceSeq {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn variance(&self) -> f64 {
        self.0[0]
    }
}

impl std::ops::Index<usize> for AutocovarianceSeq {
    type Output = f64;

    fn index(&self, lag: usize) -> &f64 {
        &self.0[lag]
    }
}

/// Quadrature weights used for the grid integral.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FourierKernel {
    /// Trapezoid rule on the periodic grid. Spectrally accurate for smooth
    /// periodic densities.
    #[default]
    Trapezoid,
    /// Exact transform of the piecewise-linear interpolant, i.e. the
    /// trapezoid sum damped by `W(lΔ) = 2(1 − cos lΔ)/(lΔ)²` plus endpoint
    /// corrections. Second-order accurate in `lΔ`.
    LinearInterpolation,
}

/// Fourier transform of the hat function, `2(1 − cos θ)/θ²`.
pub fn hat_transform(theta: f64) -> f64 {
    if theta.abs() < 1e-4 {
        let t2 = theta * theta;
        1.0 - t2 / 12.0 + t2 * t2 / 360.0
    } else {
        2.0 * (1.0 - theta.cos()) / (theta * theta)
    }
}

/// Left endpoint correction of the linear-interpolation scheme.
fn endpoint_correction(theta: f64) -> Complex64 {
    let im = if theta.abs() < 1e-4 {
        theta / 6.0 - theta.powi(3) / 120.0
    } else {
        (theta - theta.sin()) / (theta * theta)
    };
    Complex64::new(-0.5 * hat_transform(theta), im)
}

/// `γ_g(l)` for `l = 0..n` of a bounded even function, with the default grid
/// and kernel.
pub fn fourier_coeffs_bounded<F>(g: F, n: usize) -> Result<AutocovarianceSeq>
where
    F: Fn(f64) -> f64,
{
    fourier_coeffs_bounded_with(g, n, FourierGrid::for_lags(n), FourierKernel::default())
}

pub fn fourier_coeffs_bounded_with<F>(
    g: F,
    n: usize,
    grid: FourierGrid,
    kernel: FourierKernel,
) -> Result<AutocovarianceSeq>
where
    F: Fn(f64) -> f64,
{
    if n == 0 {
        return Err(Error::Size("lag count must be at least 1".into()));
    }
    let m = grid.size();
    if m < 2 * n {
        return Err(Error::Size(format!(
            "grid size {m} too small for {n} lags"
        )));
    }
    let mut nodes = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let lambda = grid.node(j);
        let value = g(lambda);
        if !value.is_finite() {
            return Err(Error::Evaluation {
                node: j,
                lambda,
                value,
            });
        }
        nodes.push(value);
    }
    let (first, last) = (nodes[0], nodes[m]);

    let mut buf: Vec<Complex64> = nodes[..m].iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan(m, FftDirection::Inverse).process(&mut buf);

    let delta = grid.spacing();
    let scale: f64 = delta * nodes.iter().map(|v| v.abs()).sum::<f64>();
    let mut out = Vec::with_capacity(n);
    for (l, s) in buf.iter().take(n).enumerate() {
        let theta = l as f64 * delta;
        let total = match kernel {
            FourierKernel::Trapezoid => *s + Complex64::new(0.5 * (last - first), 0.0),
            FourierKernel::LinearInterpolation => {
                *s * hat_transform(theta) + endpoint_correction(theta) * (first - last)
            }
        };
        let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
        let value = sign * delta * total;
        // Even integrands give real coefficients; anything else is round-off.
        debug_assert!(
            value.im.abs() <= 1e-8 * scale.max(f64::MIN_POSITIVE),
            "imaginary residue {} at lag {l}",
            value.im
        );
        out.push(value.re);
    }
    Ok(AutocovarianceSeq(out))
}

/// `(1/2π) ∫ |1 − e^{−iλ}|^{−2d} e^{ilλ} dλ`, the autocovariance of unit
/// fractionally integrated noise.
pub fn fracdiff_acf(d: f64, lag: usize) -> Result<f64> {
    check_memory(d)?;
    Ok(fractional_acf(d, lag))
}

/// Same integral for any `d ∈ (−1/2, 1/2)`; negative `d` gives the
/// anti-persistent case.
fn fractional_acf(d: f64, lag: usize) -> f64 {
    if d == 0.0 {
        return if lag == 0 { 1.0 } else { 0.0 };
    }
    let mut value = fracdiff_variance(d);
    if lag > 1_000_000 {
        // Product form costs O(lag); switch to log-Gamma for huge lags.
        let log_ratio = ln_gamma(lag as f64 + d) - ln_gamma(lag as f64 + 1.0 - d)
            - ln_gamma(d)
            + ln_gamma(1.0 - d);
        // Γ(d) < 0 for d ∈ (−1/2, 0)
        let sign = if d < 0.0 { -1.0 } else { 1.0 };
        return sign * value * log_ratio.exp();
    }
    for m in 0..lag {
        let m = m as f64;
        value *= (m + d) / (m + 1.0 - d);
    }
    value
}

/// `fracdiff_acf(d, l)` for `l = 0..n` by the ratio recurrence.
pub fn fracdiff_acf_seq(d: f64, n: usize) -> Result<Vec<f64>> {
    check_memory(d)?;
    Ok(fractional_acf_seq(d, n))
}

fn fractional_acf_seq(d: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    if d == 0.0 {
        out.push(1.0);
        out.resize(n, 0.0);
        return out;
    }
    let mut value = fracdiff_variance(d);
    for m in 0..n {
        out.push(value);
        let m = m as f64;
        value *= (m + d) / (m + 1.0 - d);
    }
    out
}

fn fracdiff_variance(d: f64) -> f64 {
    (ln_gamma(1.0 - 2.0 * d) - 2.0 * ln_gamma(1.0 - d)).exp()
}

fn check_memory(d: f64) -> Result<()> {
    if !(0.0..0.5).contains(&d) {
        return Err(Error::Domain(format!(
            "long-memory exponent d = {d} outside [0, 1/2)"
        )));
    }
    Ok(())
}

/// `|1 − e^{−iλ}|² = 4 sin²(λ/2)`, free of cancellation near zero.
pub fn squared_gain(lambda: f64) -> f64 {
    let s = (0.5 * lambda).sin();
    4.0 * s * s
}

/// `γ_f(l)` for `f(λ) = |1 − e^{−iλ}|^{−2d} g(λ)` with bounded `g`.
pub fn fourier_coeffs_longmemory<F>(d: f64, g: F, n: usize) -> Result<AutocovarianceSeq>
where
    F: Fn(f64) -> f64,
{
    fourier_coeffs_longmemory_with(d, g, n, FourierGrid::for_lags(n), FourierKernel::default())
}

pub fn fourier_coeffs_longmemory_with<F>(
    d: f64,
    g: F,
    n: usize,
    grid: FourierGrid,
    kernel: FourierKernel,
) -> Result<AutocovarianceSeq>
where
    F: Fn(f64) -> f64,
{
    check_memory(d)?;
    fourier_coeffs_fractional_with(d, g, n, grid, kernel)
}

/// `γ_f(l)` for `f(λ) = |1 − e^{−iλ}|^{−2d} g(λ)` with `d ∈ (−1/2, 1/2)`.
///
/// For `d < 0` the density has a cusp at zero instead of a pole; splitting
/// it off the same way keeps the quadrature error small.
pub fn fourier_coeffs_fractional_with<F>(
    d: f64,
    g: F,
    n: usize,
    grid: FourierGrid,
    kernel: FourierKernel,
) -> Result<AutocovarianceSeq>
where
    F: Fn(f64) -> f64,
{
    if !(d > -0.5 && d < 0.5) {
        return Err(Error::Domain(format!(
            "fractional exponent d = {d} outside (-1/2, 1/2)"
        )));
    }
    if d == 0.0 {
        return fourier_coeffs_bounded_with(g, n, grid, kernel);
    }
    let g0 = g(0.0);
    if !g0.is_finite() {
        return Err(Error::Evaluation {
            node: grid.size() / 2,
            lambda: 0.0,
            value: g0,
        });
    }
    let singular = fractional_acf_seq(d, n);
    let remainder = fourier_coeffs_bounded_with(
        |lambda| {
            if lambda == 0.0 {
                0.0
            } else {
                squared_gain(lambda).powf(-d) * (g(lambda) - g0)
            }
        },
        n,
        grid,
        kernel,
    )?;
    let two_pi_g0 = 2.0 * PI * g0;
    Ok(AutocovarianceSeq(
        singular
            .iter()
            .zip(remainder.values())
            .map(|(s, r)| two_pi_g0 * s + r)
            .collect(),
    ))
}

/// Dense `n × n` matrix `Σ(l, m) = γ(|l − m|) + ridge`.
pub fn build_toeplitz(acf: &AutocovarianceSeq, ridge: f64, n: usize) -> Result<Mat<f64>> {
    if acf.len() < n {
        return Err(Error::Size(format!(
            "autocovariance has {} lags, matrix needs {n}",
            acf.len()
        )));
    }
    if ridge < 0.0 {
        return Err(Error::Domain(format!("ridge {ridge} is negative")));
    }
    let gamma = acf.values();
    Ok(Mat::from_fn(n, n, |i, j| gamma[i.abs_diff(j)] + ridge))
}
