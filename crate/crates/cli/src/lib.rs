//! Command-line front end: configuration, subcommands and output files.

pub mod commands;
pub mod config;
pub mod failure;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Overrides, RunConfig};
pub use crate::failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "specsmc", version, about = "Bayesian spectral inference for long-memory series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a Gaussian series from the configured model.
    Simulate(Common),
    /// Run the sampler, the correction and the report.
    Fit(Common),
    /// Rebuild bands and summaries from a particle table.
    Report {
        #[command(flatten)]
        common: Common,
        /// Particle table; `<output>/particles.csv` by default.
        #[arg(long)]
        particles: Option<PathBuf>,
    },
    /// Plain MCMC with a fixed random-walk scale.
    McmcBaseline(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Divide the data by this value on ingest.
    #[arg(long)]
    pub scale_by: Option<f64>,
    #[arg(long)]
    pub no_correction: bool,
    /// Correct only this many particles, drawn without replacement.
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        cfg.apply(&Overrides {
            seed: self.seed,
            output: self.output.clone(),
            scale_by: self.scale_by,
            no_correction: self.no_correction,
            subsample: self.subsample,
            threads: self.threads,
        });
        if let Some(n) = cfg.threads {
            // A second call in the same process keeps the first pool.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = c.resolve()?;
            let path = commands::cmd_simulate(&cfg).map_err(|e| e.with_config(&cfg.echo()))?;
            println!("wrote {}", path.display());
        }
        Command::Fit(c) => {
            let cfg = c.resolve()?;
            let out = commands::cmd_fit(&cfg).map_err(|e| e.with_config(&cfg.echo()))?;
            println!(
                "posterior mean of d {:.4} (sd {:.4}), most probable k = {}",
                out.summary.mean_d, out.summary.sd_d, out.summary.k_mode
            );
            if let Some(f) = out.ess_fraction {
                println!("correction ESS fraction {f:.3}");
            }
            println!("outputs in {}", out.dir.display());
        }
        Command::Report { common, particles } => {
            let cfg = common.resolve()?;
            let table = particles.unwrap_or_else(|| cfg.output_dir().join("particles.csv"));
            let s = commands::cmd_report(&cfg, &table).map_err(|e| e.with_config(&cfg.echo()))?;
            println!("posterior mean of d {:.4} (sd {:.4})", s.mean_d, s.sd_d);
        }
        Command::McmcBaseline(c) => {
            let cfg = c.resolve()?;
            let s = commands::cmd_mcmc_baseline(&cfg).map_err(|e| e.with_config(&cfg.echo()))?;
            println!(
                "{} rows; random-walk acceptance {:.3}, birth/death acceptance {:.3}",
                s.rows, s.rw_acceptance, s.bd_acceptance
            );
        }
    }
    Ok(())
}
