//! Exact Gaussian simulation from a spectral density and series I/O.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::cholesky;
use crate::fourier::build_toeplitz;
use crate::model::SpectralModel;

/// Largest length simulated through a dense Cholesky factor; longer
/// series use the Durbin–Levinson recursion on the same autocovariances.
pub const DENSE_LIMIT: usize = 1 << 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: SpectralModel,
    pub n: usize,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::Size(format!("simulation length {} below 4", self.n)));
        }
        if !self.mu.is_finite() {
            return Err(Error::Domain("mean level must be finite".into()));
        }
        self.model.validate()
    }
}

/// Draws `x ~ N(μ1, T(f))` for the configured model.
pub fn simulate_series<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<Vec<f64>> {
    cfg.validate()?;
    simulate_gaussian(&cfg.model, cfg.n, cfg.mu, rng)
}

pub fn simulate_gaussian<R: Rng + ?Sized>(
    model: &SpectralModel,
    n: usize,
    mu: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let acf = model.autocovariance(n)?;
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut x = if n <= DENSE_LIMIT {
        dense_draw(acf.values(), &z)?
    } else {
        levinson_draw(acf.values(), &z)?
    };
    for v in &mut x {
        *v += mu;
    }
    Ok(x)
}

fn invalid_model(index: usize) -> Error {
    Error::Domain(format!(
        "autocovariance is not positive definite (pivot {index}); invalid model"
    ))
}

/// `L z` with `L L ᵀ = T(γ)`.
fn dense_draw(gamma: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    let n = z.len();
    let acf = crate::fourier::AutocovarianceSeq(gamma.to_vec());
    let chol = match cholesky(build_toeplitz(&acf, 0.0, n)?) {
        Ok(c) => c,
        Err(Error::NotPositiveDefinite { index }) => return Err(invalid_model(index)),
        Err(e) => return Err(e),
    };
    let l = chol.lower();
    Ok((0..n)
        .map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum())
        .collect())
}

/// Innovations form of the same map: `x_t = Σ φ_{t,j} x_{t−j} + √v_t z_t`.
fn levinson_draw(gamma: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    let n = z.len();
    let mut x = Vec::with_capacity(n);
    let mut phi: Vec<f64> = Vec::with_capacity(n);
    let mut prev: Vec<f64> = Vec::with_capacity(n);
    let mut v = gamma[0];
    if !(v > 0.0) {
        return Err(invalid_model(0));
    }
    x.push(v.sqrt() * z[0]);
    for t in 1..n {
        let mut num = gamma[t];
        for (j, p) in phi.iter().enumerate() {
            num -= p * gamma[t - 1 - j];
        }
        let reflection = num / v;
        prev.clear();
        prev.extend_from_slice(&phi);
        for j in 0..prev.len() {
            phi[j] = prev[j] - reflection * prev[prev.len() - 1 - j];
        }
        phi.push(reflection);
        v *= 1.0 - reflection * reflection;
        if !(v > 0.0) {
            return Err(invalid_model(t));
        }
        let mut pred = 0.0;
        for (j, p) in phi.iter().enumerate() {
            pred += p * x[t - 1 - j];
        }
        x.push(pred + v.sqrt() * z[t]);
    }
    Ok(x)
}

/// Reads a single-column series. A non-numeric first line is taken as a
/// header. Values are divided by `scale` when given.
pub fn read_series(path: &Path, scale: Option<f64>) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    parse_series(&text, scale)
}

pub fn parse_series(text: &str, scale: Option<f64>) -> Result<Vec<f64>> {
    if let Some(s) = scale {
        if !(s.is_finite() && s != 0.0) {
            return Err(Error::Data(format!("scale divisor {s} must be finite and nonzero")));
        }
    }
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        match line.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(scale.map_or(v, |s| v / s)),
            Ok(v) => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("non-finite value {v}"),
                })
            }
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("{line:?}: {e}"),
                })
            }
        }
    }
    Ok(out)
}

/// Writes one value per line with a `value` header, using the shortest
/// representation that parses back to the same double.
pub fn write_series(path: &Path, x: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "value")?;
    for v in x {
        writeln!(w, "{v:?}")?;
    }
    w.flush()?;
    Ok(())
}
