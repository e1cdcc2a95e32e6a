//! Run configuration: one TOML document, usually written with dotted keys
//! (`smc.N = 1000`), plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use specsmc::{
    CorrectionConfig, PriorConfig, ReportConfig, SmcConfig, SpectralModel, ThetaParams,
};

use crate::failure::Failure;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Input series (one value per line).
    pub data: Option<PathBuf>,
    /// Divisor applied to the data on ingest.
    pub scale_by: Option<f64>,
    /// Output directory; `out` when unset.
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    pub prior: PriorConfig,
    pub smc: SmcConfig,
    pub correction: CorrectionConfig,
    pub report: ReportConfig,
    pub simulate: SimulateSection,
    pub mcmc: McmcSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub n: usize,
    pub mu: f64,
    pub seed: u64,
    /// Series path; `<output>/series.csv` when unset.
    pub file: Option<PathBuf>,
    pub model: ModelSpec,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            n: 1024,
            mu: 0.0,
            seed: 0,
            file: None,
            model: ModelSpec::default(),
        }
    }
}

/// Data-generating model as written in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Fexp {
        d: f64,
        #[serde(default)]
        xi: Vec<f64>,
    },
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

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Arfima {
            d: 0.0,
            ar: Vec::new(),
            ma: Vec::new(),
            sigma2: 1.0,
        }
    }
}

impl ModelSpec {
    pub fn to_model(&self) -> specsmc::Result<SpectralModel> {
        let model = match self {
            ModelSpec::Fexp { d, xi } => SpectralModel::Fexp {
                theta: ThetaParams::from_d(*d, xi.clone())?,
            },
            ModelSpec::Arfima { d, ar, ma, sigma2 } => SpectralModel::Arfima {
                d: *d,
                ar: ar.clone(),
                ma: ma.clone(),
                sigma2: *sigma2,
            },
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSection {
    pub steps: usize,
    pub thin: usize,
    /// Isotropic random-walk variance.
    pub tau: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for McmcSection {
    fn default() -> Self {
        Self {
            steps: 10_000,
            thin: 1,
            tau: 0.015,
            gamma: 1.0,
            seed: 0,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub scale_by: Option<f64>,
    pub no_correction: bool,
    pub subsample: Option<usize>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::Config(format!("config: {e}")))
    }

    /// Reads `path`, or starts from defaults when it is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::Config(format!("config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.smc.seed = seed;
            self.simulate.seed = seed;
            self.mcmc.seed = seed;
        }
        if o.output.is_some() {
            self.output = o.output.clone();
        }
        if o.scale_by.is_some() {
            self.scale_by = o.scale_by;
        }
        if o.no_correction {
            self.correction.enabled = false;
        }
        if o.subsample.is_some() {
            self.correction.subsample = o.subsample;
        }
        if o.threads.is_some() {
            self.threads = o.threads;
        }
    }

    pub fn validate(&self) -> specsmc::Result<()> {
        self.prior.validate()?;
        self.smc.validate()?;
        self.report.validate()?;
        if let Some(s) = self.scale_by {
            if !(s.is_finite() && s != 0.0) {
                return Err(specsmc::Error::Domain(format!("scale_by = {s} must be finite and nonzero")));
            }
        }
        if let Some(m) = self.correction.subsample {
            if m == 0 || m > self.smc.n_particles {
                return Err(specsmc::Error::Domain(format!(
                    "correction.subsample = {m} outside 1..={}",
                    self.smc.n_particles
                )));
            }
        }
        if self.threads == Some(0) {
            return Err(specsmc::Error::Domain("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// TOML rendering used in error messages and output records.
    pub fn echo(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("<unprintable config: {e}>"))
    }
}
