//! Posterior summaries: weighted quantiles, log-spectral bands, histograms
//! and the particle table.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ThetaParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Number of log-spaced frequencies in `[grid_min, π]`.
    pub grid_size: usize,
    pub grid_min: f64,
    /// Central mass of the pointwise band.
    pub band_level: f64,
    /// Histogram bins for `d` on `[0, 1/2]`.
    pub bins: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            grid_size: 200,
            grid_min: 1e-3,
            band_level: 0.8,
            bins: 40,
        }
    }
}

impl ReportConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.band_level > 0.0 && self.band_level < 1.0) {
            return Err(Error::Domain(format!(
                "report.band_level = {} outside (0, 1)",
                self.band_level
            )));
        }
        if self.grid_size < 2 || self.bins == 0 {
            return Err(Error::Domain("report grid and histogram need sizes of at least 2 and 1".into()));
        }
        if !(self.grid_min > 0.0 && self.grid_min < std::f64::consts::PI) {
            return Err(Error::Domain(format!("report.grid_min = {} outside (0, π)", self.grid_min)));
        }
        Ok(())
    }

    /// Log-spaced frequencies from `grid_min` to `π`.
    pub fn grid(&self) -> Vec<f64> {
        let (lo, hi) = (self.grid_min.ln(), std::f64::consts::PI.ln());
        let last = (self.grid_size - 1) as f64;
        (0..self.grid_size)
            .map(|i| {
                if i + 1 == self.grid_size {
                    std::f64::consts::PI
                } else {
                    (lo + (hi - lo) * i as f64 / last).exp()
                }
            })
            .collect()
    }
}

/// Smallest value whose weighted CDF reaches `q`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() || values.len() != weights.len() {
        return Err(Error::Size("weighted quantile of an empty or mismatched sample".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Data("weights sum to zero".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut cdf = 0.0;
    for &i in &order {
        cdf += weights[i] / total;
        if cdf >= q * (1.0 - 1e-12) {
            return Ok(values[i]);
        }
    }
    Ok(values[*order.last().expect("nonempty")])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub lambda: f64,
    pub lower: f64,
    pub median: f64,
    pub upper: f64,
}

/// Pointwise weighted quantiles of `ln f̄_θ(λ)` on the report grid.
pub fn log_spectral_bands(
    particles: &[ThetaParams],
    weights: &[f64],
    cfg: &ReportConfig,
) -> Result<Vec<BandRow>> {
    let tail = 0.5 * (1.0 - cfg.band_level);
    cfg.grid()
        .into_iter()
        .map(|lambda| {
            let curve: Vec<f64> = particles.iter().map(|th| th.log_fbar(lambda)).collect();
            Ok(BandRow {
                lambda,
                lower: weighted_quantile(&curve, weights, tail)?,
                median: weighted_quantile(&curve, weights, 0.5)?,
                upper: weighted_quantile(&curve, weights, 1.0 - tail)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub mass: f64,
}

/// Weighted histogram of `d` with equal bins on `[0, 1/2]`.
pub fn d_histogram(particles: &[ThetaParams], weights: &[f64], bins: usize) -> Vec<HistogramBin> {
    let width = 0.5 / bins as f64;
    let total: f64 = weights.iter().sum();
    let mut mass = vec![0.0; bins];
    for (th, w) in particles.iter().zip(weights) {
        let b = ((th.d() / width) as usize).min(bins - 1);
        mass[b] += w / total;
    }
    mass.into_iter()
        .enumerate()
        .map(|(i, m)| HistogramBin {
            lower: i as f64 * width,
            upper: (i + 1) as f64 * width,
            mass: m,
        })
        .collect()
}

/// Posterior mass of each order.
pub fn k_mass(particles: &[ThetaParams], weights: &[f64]) -> BTreeMap<usize, f64> {
    let total: f64 = weights.iter().sum();
    let mut out = BTreeMap::new();
    for (th, w) in particles.iter().zip(weights) {
        *out.entry(th.k()).or_insert(0.0) += w / total;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub particles: usize,
    pub mean_d: f64,
    pub sd_d: f64,
    /// `(probability, quantile)` pairs for `d`.
    pub quantiles_d: Vec<(f64, f64)>,
    pub k_mass: BTreeMap<usize, f64>,
    pub k_mode: usize,
}

pub fn summarize(particles: &[ThetaParams], weights: &[f64]) -> Result<Summary> {
    if particles.is_empty() {
        return Err(Error::Data("no particles to summarise".into()));
    }
    let total: f64 = weights.iter().sum();
    let d: Vec<f64> = particles.iter().map(|th| th.d()).collect();
    let mean_d: f64 = d.iter().zip(weights).map(|(d, w)| w * d).sum::<f64>() / total;
    let var: f64 = d
        .iter()
        .zip(weights)
        .map(|(d, w)| w * (d - mean_d).powi(2))
        .sum::<f64>()
        / total;
    let quantiles_d = [0.05, 0.1, 0.5, 0.9, 0.95]
        .iter()
        .map(|&q| Ok((q, weighted_quantile(&d, weights, q)?)))
        .collect::<Result<Vec<_>>>()?;
    let k_mass = k_mass(particles, weights);
    let k_mode = k_mass
        .iter()
        .fold((0, f64::NEG_INFINITY), |best, (k, m)| if *m > best.1 { (*k, *m) } else { best })
        .0;
    Ok(Summary {
        particles: particles.len(),
        mean_d,
        sd_d: var.sqrt(),
        quantiles_d,
        k_mass,
        k_mode,
    })
}

/// One row of the particle table.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRow {
    pub theta: ThetaParams,
    pub weight: f64,
    pub log_w_corr: Option<f64>,
}

/// Writes `k, d, t, weight[, log_w_corr], xi_1, …, xi_K` with full precision.
pub fn write_particles(path: &Path, rows: &[ParticleRow]) -> Result<()> {
    let with_corr = rows.iter().any(|r| r.log_w_corr.is_some());
    let width = rows.iter().map(|r| r.theta.k()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(File::create(path)?);
    let mut header: Vec<String> = ["k", "d", "t", "weight"].iter().map(|s| s.to_string()).collect();
    if with_corr {
        header.push("log_w_corr".into());
    }
    header.extend((1..=width).map(|j| format!("xi_{j}")));
    w.write_record(&header).map_err(csv_error)?;
    for r in rows {
        let mut rec = vec![
            r.theta.k().to_string(),
            format!("{:?}", r.theta.d()),
            format!("{:?}", r.theta.t),
            format!("{:?}", r.weight),
        ];
        if with_corr {
            rec.push(r.log_w_corr.map_or_else(String::new, |v| format!("{v:?}")));
        }
        for j in 0..width {
            rec.push(r.theta.xi.get(j).map_or_else(String::new, |v| format!("{v:?}")));
        }
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("{other:?}")),
    }
}

/// Reads a table written by [`write_particles`]. `t` is authoritative; `d`
/// is informational.
pub fn read_particles(path: &Path) -> Result<Vec<ParticleRow>> {
    let mut r = csv::Reader::from_reader(File::open(path)?);
    let header = r.headers().map_err(csv_error)?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (k_col, t_col, w_col) = match (col("k"), col("t"), col("weight")) {
        (Some(k), Some(t), Some(w)) => (k, t, w),
        _ => return Err(Error::Data("particle table needs k, t and weight columns".into())),
    };
    let corr_col = col("log_w_corr");
    let xi_cols: Vec<usize> = (1..)
        .map_while(|j| col(&format!("xi_{j}")))
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(csv_error)?;
        let field = |c: usize| -> Result<f64> {
            rec.get(c)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    line,
                    message: format!("column {}: {e}", header.get(c).unwrap_or("?")),
                })
        };
        let k: usize = rec.get(k_col).unwrap_or("").parse().map_err(|e| Error::Parse {
            line,
            message: format!("column k: {e}"),
        })?;
        if k > xi_cols.len() {
            return Err(Error::Parse {
                line,
                message: format!("order {k} but only {} coefficient columns", xi_cols.len()),
            });
        }
        let xi = xi_cols[..k].iter().map(|&c| field(c)).collect::<Result<Vec<_>>>()?;
        let log_w_corr = match corr_col {
            Some(c) if !rec.get(c).unwrap_or("").is_empty() => Some(field(c)?),
            _ => None,
        };
        rows.push(ParticleRow {
            theta: ThetaParams::new(field(t_col)?, xi),
            weight: field(w_col)?,
            log_w_corr,
        });
    }
    if rows.is_empty() {
        return Err(Error::Data("particle table is empty".into()));
    }
    Ok(rows)
}
