//! JSON run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use capstokes::evolution::{PhysicalParams, StepControls};
use capstokes::verify::Bounds;
use capstokes::{Grid, GridFunction};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_length: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub amplitude: f64,
    pub width: f64,
    #[serde(default)]
    pub center: f64,
}

impl Bump {
    fn eval(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.width;
        self.amplitude * (-z * z).exp()
    }
}

/// Initial interface profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileConfig {
    Flat,
    /// `a·exp(-((ξ - c)/w)²)`.
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: f64,
    },
    BumpSum {
        bumps: Vec<Bump>,
    },
    /// Whitespace-separated node values, one per grid node.
    File {
        path: PathBuf,
    },
}

/// Rectangular lattice of bulk sample points.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointLattice {
    pub x1: [f64; 2],
    pub x2: [f64; 2],
    pub counts: [usize; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: Option<GridConfig>,
    pub profile: Option<ProfileConfig>,
    pub params: Option<PhysicalParams>,
    /// Final time `T`.
    pub horizon: Option<f64>,
    /// Output times in `(0, T]`; ten uniform times when absent.
    pub output_times: Option<Vec<f64>>,
    #[serde(default)]
    pub controls: StepControls,
    #[serde(default)]
    pub seed: u64,
    pub mu_plus_list: Option<Vec<f64>>,
    pub points: Option<Vec<[f64; 2]>>,
    pub point_lattice: Option<PointLattice>,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    #[serde(default)]
    pub bounds: Bounds,
    /// Directory of the config file, for relative profile paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_fd_step() -> f64 {
    1e-3
}

fn config_error(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every present section; required sections are checked per command.
    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(g) = &self.grid {
            Grid::new(g.half_length, g.nodes).map_err(|e| config_error("grid", e))?;
        }
        if let Some(p) = &self.params {
            p.validate().map_err(|e| config_error("params", e))?;
        }
        if let Some(t) = self.horizon {
            if !(t > 0.0 && t.is_finite()) {
                return Err(config_error("horizon", "must be positive"));
            }
        }
        if let Some(times) = &self.output_times {
            if times.is_empty() {
                return Err(config_error("output_times", "must not be empty"));
            }
            if times.iter().any(|t| !(*t > 0.0 && t.is_finite()))
                || times.windows(2).any(|w| !(w[1] > w[0]))
            {
                return Err(config_error(
                    "output_times",
                    "must be positive and strictly increasing",
                ));
            }
            if let Some(t) = self.horizon {
                if times.last().is_some_and(|last| *last > t) {
                    return Err(config_error("output_times", "must not exceed horizon"));
                }
            }
        }
        self.controls
            .validate()
            .map_err(|e| config_error("controls", e))?;
        if let Some(list) = &self.mu_plus_list {
            if list.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
                return Err(config_error("mu_plus_list", "values must be positive"));
            }
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(config_error("fd_step", "must be positive"));
        }
        if let Some(profile) = &self.profile {
            match profile {
                ProfileConfig::Gaussian { width, .. } if !(*width > 0.0) => {
                    return Err(config_error("profile.width", "must be positive"));
                }
                ProfileConfig::BumpSum { bumps } if bumps.iter().any(|b| !(b.width > 0.0)) => {
                    return Err(config_error("profile.bumps", "widths must be positive"));
                }
                _ => {}
            }
        }
        if let Some(l) = &self.point_lattice {
            if l.counts.contains(&0) {
                return Err(config_error("point_lattice.counts", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn require_grid(&self) -> Result<Grid, CliError> {
        let g = self.grid.ok_or_else(|| config_error("grid", "missing"))?;
        Grid::new(g.half_length, g.nodes).map_err(|e| config_error("grid", e))
    }

    pub fn require_params(&self) -> Result<PhysicalParams, CliError> {
        self.params.ok_or_else(|| config_error("params", "missing"))
    }

    pub fn require_horizon(&self) -> Result<f64, CliError> {
        self.horizon
            .ok_or_else(|| config_error("horizon", "missing"))
    }

    pub fn output_times(&self) -> Result<Vec<f64>, CliError> {
        let t = self.require_horizon()?;
        let mut times = match &self.output_times {
            Some(times) => times.clone(),
            None => (1..=10).map(|i| t * i as f64 / 10.0).collect(),
        };
        if times.last().is_some_and(|last| *last < t) {
            times.push(t);
        }
        Ok(times)
    }

    pub fn initial_profile(&self, grid: &Grid) -> Result<GridFunction, CliError> {
        let profile = self
            .profile
            .as_ref()
            .ok_or_else(|| config_error("profile", "missing"))?;
        sample_profile(profile, grid, &self.base_dir)
    }

    pub fn sample_points(&self) -> Result<Vec<[f64; 2]>, CliError> {
        let mut pts = self.points.clone().unwrap_or_default();
        if let Some(l) = &self.point_lattice {
            let axis = |r: [f64; 2], n: usize| -> Vec<f64> {
                if n == 1 {
                    vec![r[0]]
                } else {
                    (0..n)
                        .map(|i| r[0] + (r[1] - r[0]) * i as f64 / (n - 1) as f64)
                        .collect()
                }
            };
            for x2 in axis(l.x2, l.counts[1]) {
                for x1 in axis(l.x1, l.counts[0]) {
                    pts.push([x1, x2]);
                }
            }
        }
        if pts.is_empty() {
            return Err(config_error(
                "points",
                "missing (give points or point_lattice)",
            ));
        }
        if pts.iter().flatten().any(|v| !v.is_finite()) {
            return Err(config_error("points", "coordinates must be finite"));
        }
        Ok(pts)
    }
}

pub fn sample_profile(
    profile: &ProfileConfig,
    grid: &Grid,
    base: &Path,
) -> Result<GridFunction, CliError> {
    match profile {
        ProfileConfig::Flat => Ok(grid.zeros()),
        ProfileConfig::Gaussian {
            amplitude,
            width,
            center,
        } => {
            let b = Bump {
                amplitude: *amplitude,
                width: *width,
                center: *center,
            };
            Ok(grid.sample(|x| b.eval(x)))
        }
        ProfileConfig::BumpSum { bumps } => {
            Ok(grid.sample(|x| bumps.iter().map(|b| b.eval(x)).sum()))
        }
        ProfileConfig::File { path } => {
            let full = if path.is_absolute() {
                path.clone()
            } else {
                base.join(path)
            };
            let text = fs::read_to_string(&full)
                .map_err(|e| config_error("profile.path", format!("{}: {e}", full.display())))?;
            let values = text
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| config_error("profile.path", e))?;
            GridFunction::new(*grid, values).map_err(|e| config_error("profile.path", e))
        }
    }
}
