//! Bayesian spectral inference for long-memory time series with a
//! trans-dimensional FEXP model, fitted by sequential Monte Carlo on an
//! approximate likelihood and corrected by importance sampling.

pub mod approx;
pub mod correction;
pub mod error;
pub mod exact;
pub mod fourier;
pub mod kernels;
pub mod model;
pub mod report;
pub mod simulate;
pub mod smc;
pub mod special;

pub use error::{Error, Result};
pub use faer::Mat;
pub use fourier::{AutocovarianceSeq, FourierGrid, FourierKernel};
pub use model::{PriorConfig, SpectralModel, ThetaParams};
pub use approx::{approx_log_lik, prepare_dataset, ApproxMode, DatasetContext};
pub use exact::{exact_log_marglik, CholeskyFactor};
pub use kernels::{KernelConfig, LogLikelihood, MoveStats, Particle};
pub use smc::{run_smc, ParticleSystem, SmcConfig};
pub use correction::{corrected_estimate, correction_weights, CorrectedSample, CorrectionConfig};
pub use report::{ReportConfig, Summary};
