//! Run configuration: a flat key-value text format with section headers,
//! and assembly of a validated solver instance from it.
//!
//! Grammar: `#` starts a comment; `[name]` opens a section; other nonempty
//! lines are `key = value`. List values are comma-separated. Unknown
//! sections or keys are rejected so typos fail before any compute.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::diagnostics::ReportTols;
use crate::error::ConfigError;
use crate::grid::{assemble_biharmonic, assemble_laplacian, build_grid, DiscreteOperator, Grid};
use crate::io::read_values_file;
use crate::obstacles::{sample_obstacles, ObstaclePair, ObstacleSource, PenaltyParams};
use crate::presets::Preset;
use crate::stepper::{StepMethod, StepOptions};

/// Parsed configuration, prior to validation against the grid.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dimension: usize,
    pub extents: Vec<f64>,
    pub resolutions: Vec<usize>,
    pub obstacle_preset: Option<String>,
    pub obstacle_scale: f64,
    pub lower_file: Option<PathBuf>,
    pub upper_file: Option<PathBuf>,
    pub initial_kind: InitialKind,
    pub horizon: f64,
    pub steps: usize,
    pub method: StepMethod,
    pub tol_kkt: f64,
    pub tol_newton: f64,
    pub max_iter: usize,
    pub active_tol: f64,
    pub epsilon: f64,
    pub rho: f64,
    pub rho_list: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub n_list: Vec<usize>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub report_tols: ReportTols,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialKind {
    /// The obstacle preset's own initial datum.
    Default,
    Zero,
    Bump,
    File(PathBuf),
}

/// Everything needed to run: validated grid, operators, obstacles, datum.
pub struct Instance {
    pub grid: Grid,
    pub laplacian: DiscreteOperator,
    pub biharmonic: DiscreteOperator,
    pub pair: ObstaclePair,
    pub u0: Vec<f64>,
    pub config: RunConfig,
}

impl RunConfig {
    pub fn options(&self) -> StepOptions {
        StepOptions {
            method: self.method,
            tau: self.horizon / self.steps as f64,
            penalty: PenaltyParams::new(self.epsilon, self.rho).ok(),
            tol_kkt: self.tol_kkt,
            tol_newton: self.tol_newton,
            max_iter: self.max_iter,
            active_tol: self.active_tol,
        }
    }

    /// Build the validated instance; any failure aborts before compute.
    pub fn build(self) -> Result<Instance, ConfigError> {
        let grid = build_grid(self.dimension, &self.extents, &self.resolutions)?;
        let laplacian = assemble_laplacian(&grid);
        let biharmonic = assemble_biharmonic(&grid);
        let pair = self.build_pair(&grid)?;
        let u0 = self.build_initial(&grid, &pair)?;
        Ok(Instance {
            grid,
            laplacian,
            biharmonic,
            pair,
            u0,
            config: self,
        })
    }

    fn build_pair(&self, grid: &Grid) -> Result<ObstaclePair, ConfigError> {
        match (&self.obstacle_preset, &self.lower_file, &self.upper_file) {
            (Some(name), None, None) => {
                Preset::by_name(name, self.obstacle_scale)?.obstacles(grid)
            }
            (None, Some(lower), Some(upper)) => {
                let lower_vals = load_grid_values(lower, grid)?;
                let upper_vals = load_grid_values(upper, grid)?;
                Ok(sample_obstacles(
                    grid,
                    &ObstacleSource::FullValues(&lower_vals),
                    &ObstacleSource::FullValues(&upper_vals),
                )?)
            }
            _ => Err(ConfigError::InvalidValue {
                key: "obstacles".into(),
                message: "give either `preset` or both `lower_file` and `upper_file`".into(),
            }),
        }
    }

    fn build_initial(&self, grid: &Grid, _pair: &ObstaclePair) -> Result<Vec<f64>, ConfigError> {
        match &self.initial_kind {
            InitialKind::Zero => Ok(vec![0.0; grid.node_count()]),
            InitialKind::Bump => {
                let preset = Preset::by_name("diffuse", self.obstacle_scale)?;
                Ok(preset.initial_datum(grid))
            }
            InitialKind::Default => match &self.obstacle_preset {
                Some(name) => {
                    Ok(Preset::by_name(name, self.obstacle_scale)?.initial_datum(grid))
                }
                None => Ok(vec![0.0; grid.node_count()]),
            },
            InitialKind::File(path) => {
                let full = load_grid_values(path, grid)?;
                // boundary entries of an initial-datum file are ignored
                let mut interior = vec![0.0; grid.node_count()];
                for (k, &v) in full.iter().enumerate() {
                    if let Some(i) = grid.full_to_interior(k) {
                        interior[i] = v;
                    }
                }
                Ok(interior)
            }
        }
    }
}

fn load_grid_values(path: &Path, grid: &Grid) -> Result<Vec<f64>, ConfigError> {
    let file = read_values_file(path)?;
    if file.dimension != grid.dimension()
        || file.resolutions != grid.resolutions()
        || file
            .extents
            .iter()
            .zip(grid.extents())
            .any(|(a, b)| (a - b).abs() > 1e-12 * b.abs())
    {
        return Err(ConfigError::ObstacleFile {
            path: path.display().to_string(),
            message: format!(
                "header ({}d, {:?}, {:?}) does not match the configured grid ({}d, {:?}, {:?})",
                file.dimension,
                file.resolutions,
                file.extents,
                grid.dimension(),
                grid.resolutions(),
                grid.extents()
            ),
        });
    }
    Ok(file.values)
}

struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, (usize, String)>>,
}

impl RawConfig {
    fn get(&mut self, section: &str, key: &str) -> Option<String> {
        self.sections
            .get_mut(section)
            .and_then(|s| s.remove(key))
            .map(|(_, v)| v)
    }

    fn leftovers(&self) -> Option<(usize, String)> {
        for (section, keys) in &self.sections {
            if let Some((key, (line, _))) = keys.iter().next() {
                return Some((*line, format!("unknown key `{key}` in section [{section}]")));
            }
        }
        None
    }
}

fn parse_raw(text: &str) -> Result<RawConfig, ConfigError> {
    let mut sections: BTreeMap<String, BTreeMap<String, (usize, String)>> = BTreeMap::new();
    let mut current = String::from("");
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(p) => &raw_line[..p],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or(ConfigError::Parse {
                line: line_no,
                message: "unterminated section header".into(),
            })?;
            current = name.trim().to_string();
            sections.entry(current.clone()).or_default();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Parse {
            line: line_no,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        if current.is_empty() {
            return Err(ConfigError::Parse {
                line: line_no,
                message: "key outside of any [section]".into(),
            });
        }
        let prev = sections.get_mut(&current).unwrap().insert(
            key.trim().to_string(),
            (line_no, value.trim().to_string()),
        );
        if prev.is_some() {
            return Err(ConfigError::Parse {
                line: line_no,
                message: format!("duplicate key `{}`", key.trim()),
            });
        }
    }
    Ok(RawConfig { sections })
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::InvalidValue {
        key: key.to_string(),
        message: format!("cannot parse `{value}`"),
    })
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_scalar(key, s))
        .collect()
}

/// Parse a configuration from text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut raw = parse_raw(text)?;
    let dimension: usize = parse_scalar(
        "dimension",
        &raw.get("grid", "dimension")
            .ok_or_else(|| ConfigError::MissingKey("grid.dimension".into()))?,
    )?;
    let extents: Vec<f64> = parse_list(
        "extent",
        &raw.get("grid", "extent")
            .ok_or_else(|| ConfigError::MissingKey("grid.extent".into()))?,
    )?;
    let resolutions: Vec<usize> = parse_list(
        "resolution",
        &raw.get("grid", "resolution")
            .ok_or_else(|| ConfigError::MissingKey("grid.resolution".into()))?,
    )?;

    let obstacle_preset = raw.get("obstacles", "preset");
    let obstacle_scale = match raw.get("obstacles", "scale") {
        Some(v) => parse_scalar("scale", &v)?,
        None => 1.0,
    };
    let lower_file = raw.get("obstacles", "lower_file").map(PathBuf::from);
    let upper_file = raw.get("obstacles", "upper_file").map(PathBuf::from);

    let initial_kind = match (raw.get("initial", "preset"), raw.get("initial", "file")) {
        (None, None) => InitialKind::Default,
        (Some(p), None) => match p.as_str() {
            "default" => InitialKind::Default,
            "zero" => InitialKind::Zero,
            "bump" => InitialKind::Bump,
            other => {
                return Err(ConfigError::InvalidValue {
                    key: "initial.preset".into(),
                    message: format!("unknown initial preset `{other}`"),
                })
            }
        },
        (None, Some(f)) => InitialKind::File(PathBuf::from(f)),
        (Some(_), Some(_)) => {
            return Err(ConfigError::InvalidValue {
                key: "initial".into(),
                message: "give either `preset` or `file`, not both".into(),
            })
        }
    };

    let horizon: f64 = parse_scalar(
        "horizon",
        &raw.get("time", "horizon")
            .ok_or_else(|| ConfigError::MissingKey("time.horizon".into()))?,
    )?;
    let steps: usize = parse_scalar(
        "steps",
        &raw.get("time", "steps")
            .ok_or_else(|| ConfigError::MissingKey("time.steps".into()))?,
    )?;

    let method = match raw.get("solver", "method").as_deref() {
        None | Some("constrained") => StepMethod::Constrained,
        Some("penalized") => StepMethod::Penalized,
        Some(other) => {
            return Err(ConfigError::InvalidValue {
                key: "solver.method".into(),
                message: format!("`{other}` is not `constrained` or `penalized`"),
            })
        }
    };
    let defaults = StepOptions::default();
    let tol_kkt = match raw.get("solver", "tol_kkt") {
        Some(v) => parse_scalar("tol_kkt", &v)?,
        None => defaults.tol_kkt,
    };
    let tol_newton = match raw.get("solver", "tol_newton") {
        Some(v) => parse_scalar("tol_newton", &v)?,
        None => defaults.tol_newton,
    };
    let max_iter = match raw.get("solver", "max_iter") {
        Some(v) => parse_scalar("max_iter", &v)?,
        None => defaults.max_iter,
    };
    let active_tol = match raw.get("solver", "active_tol") {
        Some(v) => parse_scalar("active_tol", &v)?,
        None => defaults.active_tol,
    };

    let epsilon = match raw.get("penalty", "epsilon") {
        Some(v) => parse_scalar("epsilon", &v)?,
        None => 0.0,
    };
    let rho = match raw.get("penalty", "rho") {
        Some(v) => parse_scalar("rho", &v)?,
        None => 1e-4,
    };
    let rho_list = match raw.get("penalty", "rho_list") {
        Some(v) => parse_list("rho_list", &v)?,
        None => vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
    };
    let eps_list = match raw.get("penalty", "eps_list") {
        Some(v) => parse_list("eps_list", &v)?,
        None => vec![1e-1, 1e-2, 1e-3, 1e-4],
    };
    let n_list = match raw.get("penalty", "n_list") {
        Some(v) => parse_list("n_list", &v)?,
        None => vec![8, 16, 32, 64],
    };

    let out_dir = raw
        .get("output", "dir")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"));
    let seed = match raw.get("output", "seed") {
        Some(v) => parse_scalar("seed", &v)?,
        None => 0,
    };

    let default_tols = ReportTols::default();
    let report_tols = ReportTols {
        support_tol: match raw.get("report", "support_tol") {
            Some(v) => parse_scalar("support_tol", &v)?,
            None => default_tols.support_tol,
        },
        sign_tol: match raw.get("report", "sign_tol") {
            Some(v) => parse_scalar("sign_tol", &v)?,
            None => default_tols.sign_tol,
        },
        coincidence_tol: match raw.get("report", "coincidence_tol") {
            Some(v) => parse_scalar("coincidence_tol", &v)?,
            None => default_tols.coincidence_tol,
        },
    };

    if let Some((line, message)) = raw.leftovers() {
        return Err(ConfigError::Parse { line, message });
    }

    Ok(RunConfig {
        dimension,
        extents,
        resolutions,
        obstacle_preset,
        obstacle_scale,
        lower_file,
        upper_file,
        initial_kind,
        horizon,
        steps,
        method,
        tol_kkt,
        tol_newton,
        max_iter,
        active_tol,
        epsilon,
        rho,
        rho_list,
        eps_list,
        n_list,
        out_dir,
        seed,
        report_tols,
    })
}

/// Load and parse a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}
