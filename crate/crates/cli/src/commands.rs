use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use specsmc::correction::correction_weights;
use specsmc::kernels::{run_chain, ApproxLikelihood, KernelConfig, Particle};
use specsmc::report::{
    d_histogram, log_spectral_bands, read_particles, summarize, write_particles, ParticleRow,
    Summary,
};
use specsmc::simulate::{read_series, simulate_series, write_series, SimConfig};
use specsmc::smc::rng_stream;
use specsmc::{prepare_dataset, run_smc, ReportConfig, ThetaParams};

use crate::config::RunConfig;
use crate::failure::{io_failure, Failure};

/// RNG stream reserved for the correction subsample.
const CORRECTION_STREAM: u64 = u64::MAX;

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn validated(cfg: &RunConfig) -> Result<(), Failure> {
    cfg.validate()
        .map_err(|e| Failure::from_core("config", e, Failure::Config))
}

fn load_data(cfg: &RunConfig) -> Result<Vec<f64>, Failure> {
    let path = cfg
        .data
        .as_deref()
        .ok_or_else(|| Failure::Config("config: no data file given (set `data`)".into()))?;
    read_series(path, cfg.scale_by)
        .map_err(|e| Failure::from_core(&format!("simulate_data ({})", path.display()), e, Failure::Data))
}

/// Writes the series and a provenance sidecar; returns the series path.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let section = &cfg.simulate;
    let model = section
        .model
        .to_model()
        .map_err(|e| Failure::from_core("simulate_data", e, Failure::Config))?;
    let sim = SimConfig {
        model,
        n: section.n,
        mu: section.mu,
        seed: section.seed,
        output: section.file.clone(),
    };
    sim.validate()
        .map_err(|e| Failure::from_core("simulate_data", e, Failure::Config))?;
    let x = simulate_series(&sim, &mut rng_stream(sim.seed, 0))
        .map_err(|e| Failure::from_core("simulate_data", e, Failure::Config))?;

    let path = match &section.file {
        Some(p) => p.clone(),
        None => cfg.output_dir().join("series.csv"),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_series(&path, &x).map_err(|e| Failure::from_core("simulate_data", e, Failure::Data))?;
    let mut sidecar = path.clone().into_os_string();
    sidecar.push(".json");
    write_json(
        Path::new(&sidecar),
        &json!({
            "model": sim.model,
            "n": sim.n,
            "mu": sim.mu,
            "seed": sim.seed,
            "series": path.file_name().map(|s| s.to_string_lossy().into_owned()),
        }),
    )?;
    Ok(path)
}

#[derive(Debug, Serialize)]
struct IterationLine {
    iteration: usize,
    gamma: f64,
    ess: f64,
    rw_acceptance: f64,
    bd_acceptance: f64,
    log_mean_weight: f64,
}

#[derive(Debug, Serialize)]
struct CorrectionLine {
    count: usize,
    ess: f64,
    ess_fraction: f64,
}

/// What a fit produced, for callers that want it in memory.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub rows: Vec<ParticleRow>,
    pub summary: Summary,
    pub ess_fraction: Option<f64>,
    pub dir: PathBuf,
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<FitOutput, Failure> {
    validated(cfg)?;
    let x = load_data(cfg)?;
    let data = prepare_dataset(&x)
        .map_err(|e| Failure::from_core("likelihood_approx", e, Failure::Data))?;

    let started = Instant::now();
    let system = run_smc(&data, &cfg.prior, &cfg.smc)
        .map_err(|e| Failure::from_core("smc_sampler", e, Failure::Config))?;
    log::info!(
        "sampler finished: {} iterations in {:.2} s",
        system.history.len(),
        started.elapsed().as_secs_f64()
    );

    let (rows, correction): (Vec<ParticleRow>, _) = if cfg.correction.enabled {
        let thetas: Vec<ThetaParams> = system.particles.iter().map(|p| p.theta.clone()).collect();
        let sample = correction_weights(
            &thetas,
            &data,
            &cfg.prior,
            cfg.smc.mode,
            &cfg.correction,
            &mut rng_stream(cfg.smc.seed, CORRECTION_STREAM),
        )
        .map_err(|e| Failure::from_core("correction_is", e, Failure::Config))?;
        log::info!(
            "correction: ESS {:.1} of {} in {:.2} s",
            sample.ess,
            sample.len(),
            sample.seconds
        );
        let rows = sample
            .particles
            .iter()
            .zip(&sample.weights)
            .zip(&sample.log_w)
            .map(|((th, w), lw)| ParticleRow {
                theta: th.clone(),
                weight: *w,
                log_w_corr: Some(*lw),
            })
            .collect();
        let line = CorrectionLine {
            count: sample.len(),
            ess: sample.ess,
            ess_fraction: sample.ess_fraction,
        };
        (rows, Some(line))
    } else {
        let w = system
            .normalized_weights()
            .map_err(|e| Failure::from_core("smc_sampler", e, Failure::Config))?;
        let rows = system
            .particles
            .iter()
            .zip(w)
            .map(|(p, w)| ParticleRow {
                theta: p.theta.clone(),
                weight: w,
                log_w_corr: None,
            })
            .collect();
        (rows, None)
    };

    let dir = cfg.output_dir();
    create_dir(&dir)?;
    let table = dir.join("particles.csv");
    write_particles(&table, &rows).map_err(|e| Failure::from_core("cli_report", e, Failure::Data))?;
    let summary = write_report(&dir, &rows, &cfg.report)?;

    let iterations: Vec<IterationLine> = system
        .history
        .iter()
        .enumerate()
        .map(|(i, r)| IterationLine {
            iteration: i + 1,
            gamma: r.gamma,
            ess: r.ess,
            rw_acceptance: r.stats.rw_rate(),
            bd_acceptance: r.stats.bd_rate(),
            log_mean_weight: r.log_mean_weight,
        })
        .collect();
    write_json(
        &dir.join("diagnostics.json"),
        &json!({
            "n": data.n(),
            "mean": data.mean(),
            "particles": system.len(),
            "log_evidence": system.log_evidence,
            "gamma_schedule": system.gamma_schedule(),
            "iterations": iterations,
            "correction": correction,
            "summary": summary,
            "config": cfg,
        }),
    )?;
    Ok(FitOutput {
        rows,
        summary,
        ess_fraction: correction.map(|c| c.ess_fraction),
        dir,
    })
}

/// Writes bands, histogram, k-mass table and summary for a weighted table.
fn write_report(dir: &Path, rows: &[ParticleRow], cfg: &ReportConfig) -> Result<Summary, Failure> {
    let thetas: Vec<ThetaParams> = rows.iter().map(|r| r.theta.clone()).collect();
    let weights: Vec<f64> = rows.iter().map(|r| r.weight).collect();
    let wrap = |e| Failure::from_core("cli_report", e, Failure::Data);

    let bands = log_spectral_bands(&thetas, &weights, cfg).map_err(wrap)?;
    let mut text = String::from("lambda,lower,median,upper\n");
    for b in &bands {
        text.push_str(&format!("{:?},{:?},{:?},{:?}\n", b.lambda, b.lower, b.median, b.upper));
    }
    write_text(&dir.join("bands.csv"), &text)?;

    let mut text = String::from("lower,upper,mass\n");
    for b in d_histogram(&thetas, &weights, cfg.bins) {
        text.push_str(&format!("{:?},{:?},{:?}\n", b.lower, b.upper, b.mass));
    }
    write_text(&dir.join("d_histogram.csv"), &text)?;

    let summary = summarize(&thetas, &weights).map_err(wrap)?;
    let mut text = String::from("k,mass\n");
    for (k, m) in &summary.k_mass {
        text.push_str(&format!("{k},{m:?}\n"));
    }
    write_text(&dir.join("k_mass.csv"), &text)?;
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| io_failure(path, e))
}

/// Rebuilds the report files from a particle table.
pub fn cmd_report(cfg: &RunConfig, particles: &Path) -> Result<Summary, Failure> {
    cfg.report
        .validate()
        .map_err(|e| Failure::from_core("config", e, Failure::Config))?;
    let rows = read_particles(particles).map_err(|e| {
        Failure::from_core(&format!("cli_report ({})", particles.display()), e, Failure::Data)
    })?;
    let dir = cfg.output_dir();
    create_dir(&dir)?;
    write_report(&dir, &rows, &cfg.report)
}

/// Summary of a baseline chain.
#[derive(Debug, Clone, Serialize)]
pub struct ChainSummary {
    pub steps: usize,
    pub rows: usize,
    pub tau: f64,
    pub gamma: f64,
    pub rw_acceptance: f64,
    pub bd_acceptance: f64,
}

/// Plain MCMC with a fixed isotropic random-walk scale.
pub fn cmd_mcmc_baseline(cfg: &RunConfig) -> Result<ChainSummary, Failure> {
    validated(cfg)?;
    let m = &cfg.mcmc;
    if !(m.tau > 0.0 && m.tau.is_finite()) || !(0.0..=1.0).contains(&m.gamma) || m.thin == 0 {
        return Err(Failure::Config(format!(
            "config: mcmc needs tau > 0, gamma in [0, 1] and thin >= 1 (got {}, {}, {})",
            m.tau, m.gamma, m.thin
        )));
    }
    let x = load_data(cfg)?;
    let data = prepare_dataset(&x)
        .map_err(|e| Failure::from_core("likelihood_approx", e, Failure::Data))?;
    let target = ApproxLikelihood {
        data: &data,
        prior: &cfg.prior,
        mode: cfg.smc.mode,
    };
    let kernel = KernelConfig {
        gamma: m.gamma,
        k_max: cfg.smc.k_max,
        fixed_tau: Some(m.tau),
        ..Default::default()
    };
    let init = Particle::new(
        ThetaParams::from_d(0.25, Vec::new()).expect("0.25 is a valid exponent"),
        &target,
    );
    let trace = run_chain(init, &kernel, &cfg.prior, &target, m.steps, m.thin, &mut rng_stream(m.seed, 0))
        .map_err(|e| Failure::from_core("kernels_mcmc", e, Failure::Config))?;

    let dir = cfg.output_dir();
    create_dir(&dir)?;
    let mut text = String::from("step,k,d,t,loglik\n");
    for (i, p) in trace.states.iter().enumerate() {
        text.push_str(&format!(
            "{},{},{:?},{:?},{:?}\n",
            (i + 1) * m.thin,
            p.theta.k(),
            p.theta.d(),
            p.theta.t,
            p.loglik
        ));
    }
    write_text(&dir.join("trace.csv"), &text)?;
    let summary = ChainSummary {
        steps: m.steps,
        rows: trace.states.len(),
        tau: m.tau,
        gamma: m.gamma,
        rw_acceptance: trace.stats.rw_rate(),
        bd_acceptance: trace.stats.bd_rate(),
    };
    write_json(&dir.join("mcmc.json"), &summary)?;
    Ok(summary)
}
