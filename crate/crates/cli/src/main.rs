//! `qdos`: batch front end for simulating quantized control loops under DoS
//! and computing their stability certificates.
//!
//! Exit codes: 0 success, 1 runtime failure or failed schedule verification,
//! 2 config error, 3 encoder saturation, 4 blow-up, 5 infeasible certificate.

mod config;
mod emit;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use qdos_core::analysis::{
    self, build_certificate, downward_closure_violations, estimate_roa, grid_points, sweep_stability_region,
    theorem1_boundary_rho_d, write_roa_csv, write_sweep_csv, AnalysisError, CertificateConfig, StabilityCertificate,
};
use qdos_core::dos::{generate_constrained, verify_constraints, DoSSchedule, DosError, Strategy, Verdict};
use qdos_core::numerics::Vector;
use qdos_core::simloop::{self, run_closed_loop, SimConfig, SimError, SimStatus};
use serde::Serialize;

use config::{ConfigError, Loaded, ScheduleSpec};
use emit::{Artifacts, RunManifest, Seeds};

#[derive(Debug, Parser)]
#[command(
    name = "qdos",
    version,
    about = "Quantized control under DoS: simulation and stability certificates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the closed loop and write trace, dense and summary files.
    Simulate(Common),
    /// Build the stability certificate for the configured DoS budget.
    Analyze(Common),
    /// Evaluate the stability condition over a (ρ_F, ρ_D) grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `start:stop:step`, applied to both rate axes.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Estimate the region of attraction on a grid of initial states.
    Roa {
        #[command(flatten)]
        common: Common,
        /// `start:stop:step`, applied to every state axis.
        #[arg(long)]
        grid: Option<String>,
    },
    /// DoS schedule tooling.
    Dos {
        #[command(subcommand)]
        action: DosCommand,
    },
}

#[derive(Debug, Subcommand)]
enum DosCommand {
    /// Check a schedule against the configured budget.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// `start,duration` CSV; defaults to the configured schedule.
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<f64>,
        /// Also write the verdict and a manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate an admissible schedule.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        horizon: Option<f64>,
    },
}

#[derive(Debug)]
enum Failure {
    Config(ConfigError),
    Infeasible(String),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Infeasible(_) => 5,
            Failure::Runtime(_) => 1,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Infeasible { .. }
            | AnalysisError::GammaTooLarge { .. }
            | AnalysisError::TuningFailed(_)
            | AnalysisError::Model { .. } => Failure::Infeasible(e.to_string()),
            AnalysisError::Invalid(_) | AnalysisError::Plant(_) => Failure::Config(ConfigError::new("", e)),
            AnalysisError::Sim(s) => s.into(),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => Failure::Config(ConfigError::new("", e)),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<DosError> for Failure {
    fn from(e: DosError) -> Self {
        match e {
            DosError::Csv(_) | DosError::Io(_) => Failure::Runtime(e.into()),
            other => Failure::Config(ConfigError::new("dos", other)),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(c) => simulate(&c),
        Command::Analyze(c) => analyze(&c),
        Command::Sweep { common, grid } => sweep(&common, grid.as_deref()),
        Command::Roa { common, grid } => roa(&common, grid.as_deref()),
        Command::Dos {
            action:
                DosCommand::Verify {
                    config,
                    schedule,
                    horizon,
                    out,
                },
        } => dos_verify(&config, schedule.as_deref(), horizon, out.as_deref()),
        Command::Dos {
            action:
                DosCommand::Generate {
                    common,
                    strategy,
                    horizon,
                },
        } => dos_generate(&common, strategy, horizon),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            match &f {
                Failure::Config(e) => eprintln!("config error: {e}"),
                Failure::Infeasible(e) => eprintln!("infeasible certificate: {e}"),
                Failure::Runtime(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn load(common: &Common) -> Result<Loaded, Failure> {
    let mut loaded = config::load(&common.config)?;
    if let Some(seed) = common.seed {
        let cfg = &mut loaded.config;
        cfg.seed = seed;
        cfg.analyze.seed = None;
        if let ScheduleSpec::Generate { seed: s, .. } = &mut cfg.dos.schedule {
            *s = None;
        }
    }
    Ok(loaded)
}

fn seeds(loaded: &Loaded) -> Seeds {
    let cfg = &loaded.config;
    Seeds {
        global: cfg.seed,
        schedule: cfg.schedule_seed(),
        analysis: cfg.analysis_seed(),
    }
}

fn finish(command: &str, loaded: &Loaded, out: &Path, artifacts: Artifacts) -> Result<(), Failure> {
    let manifest = RunManifest {
        tool: "qdos",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_path: loaded.path.display().to_string(),
        output_dir: out.display().to_string(),
        seeds: seeds(loaded),
        resolved: &loaded.config,
        artifacts: artifacts.names(),
    };
    for path in artifacts.write(out, &manifest)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn csv_bytes<E>(write: impl FnOnce(&mut Vec<u8>) -> Result<(), E>) -> Result<Vec<u8>, Failure>
where
    E: std::error::Error + Send + Sync + 'static,
{
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| Failure::Runtime(e.into()))?;
    Ok(buf)
}

fn schedule_csv(sched: &DoSSchedule) -> Result<Vec<u8>, Failure> {
    csv_bytes(|buf| sched.write_csv(buf))
}

fn simulate(common: &Common) -> Outcome {
    let loaded = load(common)?;
    let cfg = &loaded.config;
    let sim = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| ConfigError::new("simulate", "section required for simulate"))?;
    let plant = cfg.plant_model()?;
    let (n, m) = (plant.state_dim(), plant.input_dim());
    let schedule = config::resolve_schedule(&loaded)?;
    let mut run = SimConfig::new(
        plant,
        cfg.gain_matrix()?,
        cfg.period,
        cfg.levels,
        sim.e0,
        Vector::from_column_slice(&sim.x0),
        sim.steps,
    )
    .with_schedule(schedule.clone(), cfg.dos.params);
    run.ode_step = cfg.period / sim.substeps as f64;
    run.blowup = sim.blowup;
    run.record_dense = sim.dense;
    run.seed = cfg.seed;
    let trace = run_closed_loop(&run).map_err(|e| match e {
        SimError::Config(msg) => Failure::Config(ConfigError::new("simulate", msg)),
        other => other.into(),
    })?;

    let summary = simloop::summarize(&trace, &run, sim.converged_tol, sim.converged_tail);
    let mut artifacts = Artifacts::default();
    artifacts.csv(
        "trace.csv",
        csv_bytes(|buf| simloop::write_trace_csv(&trace, n, m, buf))?,
    );
    if sim.dense {
        artifacts.csv("dense.csv", csv_bytes(|buf| simloop::write_dense_csv(&trace, n, buf))?);
    }
    artifacts.csv("schedule.csv", schedule_csv(&schedule)?);
    artifacts.json("summary.json", &summary)?;
    finish("simulate", &loaded, &common.out, artifacts)?;
    println!(
        "status {} after {} samples ({} lost), converged: {}",
        serde_json::to_string(&trace.status).unwrap_or_default(),
        summary.samples,
        summary.losses,
        summary.converged
    );
    Ok(match trace.status {
        SimStatus::Completed => 0,
        SimStatus::Saturated => 3,
        SimStatus::BlowUp => 4,
    })
}

fn certificate_config(loaded: &Loaded) -> Result<CertificateConfig, Failure> {
    let cfg = &loaded.config;
    let mut cc = CertificateConfig::new(cfg.period, cfg.levels, cfg.gain_matrix()?, cfg.dos.params);
    cc.ranges = cfg.analyze.ranges.clone();
    cc.tuning = cfg.analyze.tuning;
    cc.budget = cfg.analyze.budget;
    cc.seed = cfg.analysis_seed();
    Ok(cc)
}

fn certify(loaded: &Loaded) -> Result<StabilityCertificate, Failure> {
    let plant = loaded.config.plant_model()?;
    Ok(build_certificate(&plant, &certificate_config(loaded)?)?)
}

#[derive(Serialize)]
struct AnalyzeReport<'a> {
    #[serde(flatten)]
    certificate: &'a StabilityCertificate,
    consistency_errors: Vec<String>,
}

fn analyze(common: &Common) -> Outcome {
    let loaded = load(common)?;
    let cert = certify(&loaded)?;
    let report = AnalyzeReport {
        certificate: &cert,
        consistency_errors: cert.consistency_errors(),
    };
    let mut artifacts = Artifacts::default();
    artifacts.json("certificate.json", &report)?;
    finish("analyze", &loaded, &common.out, artifacts)?;
    let t1 = &cert.verdicts.theorem1;
    println!(
        "stability condition {} (margin {}), δ = {}, E₀ bound = {:?}",
        if t1.pass { "holds" } else { "fails" },
        t1.margin,
        cert.delta,
        cert.verdicts.theorem2_e0_bound
    );
    for e in &report.consistency_errors {
        eprintln!("warning: {e}");
    }
    Ok(if t1.pass { 0 } else { 5 })
}

#[derive(Serialize)]
struct BoundaryPoint {
    rho_f: f64,
    rho_d: Option<f64>,
}

#[derive(Serialize)]
struct SweepReport {
    mu0: f64,
    mu1: f64,
    nu0: f64,
    nu1: f64,
    cells: usize,
    passing: usize,
    closure_violations: Vec<(usize, usize)>,
    /// Largest admissible `ρ_D` for each `ρ_F` on the grid.
    boundary: Vec<BoundaryPoint>,
}

fn sweep(common: &Common, grid: Option<&str>) -> Outcome {
    let loaded = load(common)?;
    let cfg = &loaded.config;
    let (rf, rd) = match grid {
        Some(g) => {
            let axis = config::parse_grid(g, "--grid")?;
            (axis.clone(), axis)
        }
        None => (
            config::parse_grid(&cfg.sweep.rho_f, "sweep.rho_f")?,
            config::parse_grid(&cfg.sweep.rho_d, "sweep.rho_d")?,
        ),
    };
    let cert = certify(&loaded)?;
    let cells = sweep_stability_region(cfg.period, cert.mu0, cert.mu1, cert.nu0, cert.nu1, &rf, &rd);
    let report = SweepReport {
        mu0: cert.mu0,
        mu1: cert.mu1,
        nu0: cert.nu0,
        nu1: cert.nu1,
        cells: cells.len(),
        passing: cells.iter().filter(|c| c.pass).count(),
        closure_violations: downward_closure_violations(&cells),
        boundary: rf
            .iter()
            .map(|&rho_f| BoundaryPoint {
                rho_f,
                rho_d: theorem1_boundary_rho_d(rho_f, cfg.period, cert.mu0 * cert.mu1, cert.nu0, cert.nu1),
            })
            .collect(),
    };
    let mut artifacts = Artifacts::default();
    artifacts.csv("region.csv", csv_bytes(|buf| write_sweep_csv(&cells, buf))?);
    artifacts.json("sweep.json", &report)?;
    finish("sweep", &loaded, &common.out, artifacts)?;
    println!(
        "{} of {} cells pass, {} closure violations",
        report.passing,
        report.cells,
        report.closure_violations.len()
    );
    Ok(0)
}

#[derive(Serialize)]
struct RoaReport<'a> {
    with_dos: bool,
    points: usize,
    converged: usize,
    tol: f64,
    tail: usize,
    results: &'a [analysis::RoaPoint],
}

fn roa(common: &Common, grid: Option<&str>) -> Outcome {
    let loaded = load(common)?;
    let cfg = &loaded.config;
    let section = &cfg.roa;
    let plant = cfg.plant_model()?;
    let n = plant.state_dim();
    let axes = match grid {
        Some(g) => vec![config::parse_grid(g, "--grid")?; n],
        None if section.grid.len() == 1 => vec![config::parse_grid(&section.grid[0], "roa.grid[0]")?; n],
        None => section
            .grid
            .iter()
            .enumerate()
            .map(|(i, g)| config::parse_grid(g, &format!("roa.grid[{i}]")))
            .collect::<Result<_, _>>()?,
    };
    let mut template = SimConfig::new(
        plant,
        cfg.gain_matrix()?,
        cfg.period,
        cfg.levels,
        section.e0,
        Vector::zeros(n),
        section.steps,
    );
    if section.with_dos {
        template = template.with_schedule(config::resolve_schedule(&loaded)?, cfg.dos.params);
    }
    template.ode_step = cfg.period / section.substeps as f64;
    template.blowup = section.blowup;
    template.seed = cfg.seed;
    let points = estimate_roa(&template, &grid_points(&axes), section.tol, section.tail)?;
    let report = RoaReport {
        with_dos: section.with_dos,
        points: points.len(),
        converged: points.iter().filter(|p| p.converged).count(),
        tol: section.tol,
        tail: section.tail,
        results: &points,
    };
    let mut artifacts = Artifacts::default();
    artifacts.csv("roa.csv", csv_bytes(|buf| write_roa_csv(&points, n, buf))?);
    artifacts.json("roa.json", &report)?;
    finish("roa", &loaded, &common.out, artifacts)?;
    println!("{} of {} initial states converge", report.converged, report.points);
    Ok(0)
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    schedule: String,
    attacks: usize,
    checked_until: f64,
    #[serde(flatten)]
    verdict: &'a Verdict,
}

fn dos_verify(config_path: &Path, schedule: Option<&Path>, horizon: Option<f64>, out: Option<&Path>) -> Outcome {
    let loaded = config::load(config_path)?;
    let cfg = &loaded.config;
    let (sched, source) = match schedule {
        Some(path) => {
            let f = std::fs::File::open(path).map_err(|e| anyhow!("cannot open {}: {e}", path.display()))?;
            (DoSSchedule::read_csv(f)?, path.display().to_string())
        }
        None => (config::resolve_schedule(&loaded)?, "dos.schedule".to_string()),
    };
    let last_end = sched.attacks().iter().map(|a| a.end()).fold(0.0, f64::max);
    let horizon = horizon.unwrap_or_else(|| cfg.run_horizon().max(last_end));
    if horizon.is_nan() || horizon <= 0.0 {
        return Err(ConfigError::new("--horizon", format!("must be positive, got {horizon}")).into());
    }
    let verdict = verify_constraints(&sched, &cfg.dos.params, horizon);
    let report = VerifyReport {
        schedule: source,
        attacks: sched.len(),
        checked_until: horizon,
        verdict: &verdict,
    };
    println!("{}", serde_json::to_string(&report).map_err(anyhow::Error::from)?);
    if let Some(out) = out {
        let mut artifacts = Artifacts::default();
        artifacts.json("verdict.json", &report)?;
        finish("dos verify", &loaded, out, artifacts)?;
    }
    Ok(if verdict.passed() { 0 } else { 1 })
}

fn dos_generate(common: &Common, strategy: Option<Strategy>, horizon: Option<f64>) -> Outcome {
    let mut loaded = load(common)?;
    let configured = match &loaded.config.dos.schedule {
        ScheduleSpec::Generate { strategy, horizon, .. } => Some((*strategy, *horizon)),
        _ => None,
    };
    let strategy = strategy
        .or(configured.map(|c| c.0))
        .ok_or_else(|| ConfigError::new("--strategy", "required unless dos.schedule generates one"))?;
    let horizon = horizon
        .or(configured.and_then(|c| c.1))
        .unwrap_or_else(|| loaded.config.run_horizon());
    let seed = loaded.config.schedule_seed();
    loaded.config.dos.schedule = ScheduleSpec::Generate {
        strategy,
        horizon: Some(horizon),
        seed: Some(seed),
    };
    let cfg = &loaded.config;
    let sched = generate_constrained(&cfg.dos.params, cfg.period, horizon, strategy, seed)?;
    let mut artifacts = Artifacts::default();
    artifacts.csv("schedule.csv", schedule_csv(&sched)?);
    finish("dos generate", &loaded, &common.out, artifacts)?;
    println!("{} attacks over [0, {horizon}], {strategy}", sched.len());
    Ok(0)
}
