//! The JSON configuration shared by every subcommand.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use qdos_core::analysis::{grid_axis, SamplingBudget, Tuning, TuningRanges};
use qdos_core::dos::{Attack, DoSParams, DoSSchedule, Strategy};
use qdos_core::numerics::{matrix_from_rows, Matrix};
use qdos_core::plant::{PlantModel, PlantSpec};
use qdos_core::simloop::{DEFAULT_BLOWUP, DEFAULT_SUBSTEPS};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// A configuration problem, located by its dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub plant: PlantSpec,
    pub period: f64,
    pub levels: u32,
    /// `K` as rows, `m × n`.
    pub gain: Vec<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dos: DosSection,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub analyze: AnalyzeSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub roa: RoaSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DosSection {
    #[serde(default = "DoSParams::none")]
    pub params: DoSParams,
    #[serde(default)]
    pub schedule: ScheduleSpec,
}

impl Default for DosSection {
    fn default() -> Self {
        Self {
            params: DoSParams::none(),
            schedule: ScheduleSpec::None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    #[default]
    None,
    Generate {
        strategy: Strategy,
        /// Defaults to the run horizon.
        #[serde(default)]
        horizon: Option<f64>,
        /// Defaults to the top-level seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    Inline {
        attacks: Vec<Attack>,
    },
    /// `start,duration` CSV, relative to the config file.
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub x0: Vec<f64>,
    pub e0: f64,
    pub steps: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_blowup")]
    pub blowup: f64,
    #[serde(default = "default_true")]
    pub dense: bool,
    #[serde(default = "default_tol")]
    pub converged_tol: f64,
    #[serde(default = "default_tail")]
    pub converged_tail: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeSection {
    /// Fixed tuning; the grid search runs when absent.
    #[serde(default)]
    pub tuning: Option<Tuning>,
    #[serde(default)]
    pub ranges: TuningRanges,
    #[serde(default)]
    pub budget: SamplingBudget,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_rate_grid")]
    pub rho_f: String,
    #[serde(default = "default_rate_grid")]
    pub rho_d: String,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            rho_f: default_rate_grid(),
            rho_d: default_rate_grid(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoaSection {
    /// One `a:b:step` spec per state axis; a single entry applies to all.
    #[serde(default = "default_roa_grid")]
    pub grid: Vec<String>,
    /// Apply the configured DoS schedule instead of running attack-free.
    #[serde(default)]
    pub with_dos: bool,
    #[serde(default)]
    pub e0: f64,
    #[serde(default = "default_roa_steps")]
    pub steps: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_blowup")]
    pub blowup: f64,
    #[serde(default = "default_roa_tol")]
    pub tol: f64,
    #[serde(default = "default_tail")]
    pub tail: usize,
}

impl Default for RoaSection {
    fn default() -> Self {
        Self {
            grid: default_roa_grid(),
            with_dos: false,
            e0: 0.0,
            steps: default_roa_steps(),
            substeps: default_substeps(),
            blowup: default_blowup(),
            tol: default_roa_tol(),
            tail: default_tail(),
        }
    }
}

fn default_substeps() -> usize {
    DEFAULT_SUBSTEPS
}
fn default_blowup() -> f64 {
    DEFAULT_BLOWUP
}
fn default_true() -> bool {
    true
}
fn default_tol() -> f64 {
    1e-3
}
fn default_tail() -> usize {
    50
}
fn default_rate_grid() -> String {
    "0:0.5:0.01".into()
}
fn default_roa_grid() -> Vec<String> {
    vec!["-1:1:0.1".into()]
}
fn default_roa_steps() -> usize {
    300
}
fn default_roa_tol() -> f64 {
    1e-2
}

/// Parses `a:b:step` into an inclusive axis.
pub fn parse_grid(spec: &str, path: &str) -> Result<Vec<f64>, ConfigError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, step] = parts.as_slice() else {
        return Err(ConfigError::new(
            path,
            format!("expected \"start:stop:step\", got {spec:?}"),
        ));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| ConfigError::new(path, format!("bad number {s:?} in {spec:?}: {e}")))
    };
    grid_axis(num(a)?, num(b)?, num(step)?).map_err(|e| ConfigError::new(path, e))
}

/// A loaded config plus the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: Config,
    pub path: PathBuf,
    pub base_dir: PathBuf,
}

pub fn load(path: &Path) -> Result<Loaded, ConfigError> {
    let text =
        fs::read_to_string(path).map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
    let config = parse(&text)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded {
        config,
        path: path.to_path_buf(),
        base_dir,
    })
}

pub fn parse(text: &str) -> Result<Config, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: Config = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::new(if path == "." { String::new() } else { path }, e.into_inner())
    })?;
    config.check()?;
    Ok(config)
}

impl Config {
    /// Shape and range checks that serde cannot express.
    fn check(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::new(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(ConfigError::new(
                "period",
                format!("must be positive and finite, got {}", self.period),
            ));
        }
        if self.levels < 1 {
            return Err(ConfigError::new("levels", "must be at least 1"));
        }
        self.dos
            .params
            .validate()
            .map_err(|e| ConfigError::new("dos.params", e))?;
        let plant = self.plant_model()?;
        let (n, m) = (plant.state_dim(), plant.input_dim());
        let gain = self.gain_matrix()?;
        if gain.shape() != (m, n) {
            return Err(ConfigError::new(
                "gain",
                format!("expected {m}x{n}, got {}x{}", gain.nrows(), gain.ncols()),
            ));
        }
        if let Some(sim) = &self.simulate {
            if sim.x0.len() != n {
                return Err(ConfigError::new(
                    "simulate.x0",
                    format!("expected {n} entries, got {}", sim.x0.len()),
                ));
            }
            if sim.substeps == 0 {
                return Err(ConfigError::new("simulate.substeps", "must be positive"));
            }
        }
        if self.roa.substeps == 0 {
            return Err(ConfigError::new("roa.substeps", "must be positive"));
        }
        if self.roa.grid.len() != 1 && self.roa.grid.len() != n {
            return Err(ConfigError::new(
                "roa.grid",
                format!("give 1 or {n} axis specs, got {}", self.roa.grid.len()),
            ));
        }
        for (i, g) in self.roa.grid.iter().enumerate() {
            parse_grid(g, &format!("roa.grid[{i}]"))?;
        }
        parse_grid(&self.sweep.rho_f, "sweep.rho_f")?;
        parse_grid(&self.sweep.rho_d, "sweep.rho_d")?;
        Ok(())
    }

    pub fn plant_model(&self) -> Result<PlantModel, ConfigError> {
        self.plant.build().map_err(|e| ConfigError::new("plant", e))
    }

    pub fn gain_matrix(&self) -> Result<Matrix, ConfigError> {
        matrix_from_rows(&self.gain).map_err(|e| ConfigError::new("gain", e))
    }

    /// Horizon the schedule must cover when none is given explicitly.
    pub fn run_horizon(&self) -> f64 {
        let steps = self.simulate.as_ref().map_or(self.roa.steps, |s| s.steps);
        steps as f64 * self.period
    }

    pub fn schedule_seed(&self) -> u64 {
        match &self.dos.schedule {
            ScheduleSpec::Generate { seed: Some(s), .. } => *s,
            _ => self.seed,
        }
    }

    pub fn analysis_seed(&self) -> u64 {
        self.analyze.seed.unwrap_or(self.seed)
    }
}

/// Materializes the configured schedule.
pub fn resolve_schedule(loaded: &Loaded) -> Result<DoSSchedule, ConfigError> {
    let cfg = &loaded.config;
    let path = "dos.schedule";
    match &cfg.dos.schedule {
        ScheduleSpec::None => Ok(DoSSchedule::empty()),
        ScheduleSpec::Generate { strategy, horizon, .. } => {
            let horizon = horizon.unwrap_or_else(|| cfg.run_horizon());
            qdos_core::dos::generate_constrained(&cfg.dos.params, cfg.period, horizon, *strategy, cfg.schedule_seed())
                .map_err(|e| ConfigError::new(path, e))
        }
        ScheduleSpec::Inline { attacks } => {
            DoSSchedule::from_unsorted(attacks.clone()).map_err(|e| ConfigError::new(format!("{path}.attacks"), e))
        }
        ScheduleSpec::File { path: file } => {
            let full = loaded.base_dir.join(file);
            let f = fs::File::open(&full).map_err(|e| {
                ConfigError::new(format!("{path}.path"), format!("cannot open {}: {e}", full.display()))
            })?;
            DoSSchedule::read_csv(f).map_err(|e| ConfigError::new(format!("{path}.path"), e))
        }
    }
}
