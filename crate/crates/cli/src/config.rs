//! Pipeline configuration: one TOML file describing the input rasters, the
//! terrain conditioning, solver and steady-state settings, the library
//! levels, and the forecast noise model. Relative paths resolve against the
//! config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use flood_core::risk;
use flood_core::solver::{SolverParams, SteadyCriteria};
use flood_core::terrain::FlowAxis;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub terrain: TerrainConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub steady: SteadyConfig,
    pub library: LibraryConfig,
    #[serde(default)]
    pub forecast: ForecastConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Raw DEM (ESRI ASCII grid).
    pub dem: PathBuf,
    /// Riverbed mask raster (0/1), same geometry as the DEM.
    pub riverbed_mask: PathBuf,
    /// Per-cell Manning grid; mutually exclusive with `terrain.manning`.
    pub manning_grid: Option<PathBuf>,
    /// Where `build` writes the steady-state library.
    pub library_dir: PathBuf,
    /// Where `train` writes the threshold field.
    pub threshold_dir: PathBuf,
    /// Historical observation stack consumed by `train`.
    pub observations_dir: Option<PathBuf>,
    /// Where `flatten` writes the conditioned DEM.
    pub conditioned_dem: Option<PathBuf>,
    /// Default output directory for `forecast`.
    pub forecast_dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainConfig {
    /// Uniform Manning coefficient; mutually exclusive with
    /// `paths.manning_grid`.
    pub manning: Option<f64>,
    /// Gauge position in world coordinates; snapped to the nearest riverbed
    /// cell.
    pub gauge_x: f64,
    pub gauge_y: f64,
    /// Principal flow direction: "row" (north→south) or "col" (west→east).
    #[serde(default = "default_flow_axis")]
    pub flow_axis: String,
    /// Riverbed elevation imposed at the upstream end by `flatten`.
    pub inlet_elevation: f64,
    /// Riverbed elevation imposed at the downstream end; must not exceed
    /// `inlet_elevation`.
    pub outlet_elevation: f64,
    /// Where water leaves the model: "downstream-edge" opens the entire
    /// last grid line along the flow axis (a radiating boundary),
    /// "riverbed-line" opens only the last masked riverbed line.
    #[serde(default = "default_outlet_mode")]
    pub outlet_mode: String,
}

fn default_flow_axis() -> String {
    "row".into()
}

fn default_outlet_mode() -> String {
    "downstream-edge".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub g: f64,
    pub cfl_alpha: f64,
    pub h_dry: f64,
    pub max_dt: f64,
    pub tiles: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let p = SolverParams::default();
        Self {
            g: p.g,
            cfl_alpha: p.cfl_alpha,
            h_dry: p.h_dry,
            max_dt: p.max_dt,
            tiles: p.tiles,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteadyConfig {
    pub epsilon: f64,
    pub window: u64,
    pub max_steps: u64,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        let c = SteadyCriteria::default();
        Self {
            epsilon: c.epsilon,
            window: c.window,
            max_steps: c.max_steps,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryConfig {
    /// Inlet water levels simulated by `build`, one steady run each.
    pub inflow_levels: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastConfig {
    /// Standard deviation of the Monte-Carlo noise on the forecast level.
    pub sigma: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Depth at or above which a cell counts as wet.
    pub wet_depth: f64,
    /// Probability cutoffs for the three nested risk tiers.
    pub p_some: f64,
    pub p_higher: f64,
    pub p_highest: f64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            sigma: risk::DEFAULT_SIGMA,
            n_samples: risk::DEFAULT_N_SAMPLES,
            seed: 0,
            wet_depth: risk::DEFAULT_WET_DEPTH,
            p_some: risk::DEFAULT_P_SOME,
            p_higher: risk::DEFAULT_P_HIGHER,
            p_highest: risk::DEFAULT_P_HIGHEST,
        }
    }
}

/// Which cells act as outlets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutletMode {
    /// Every valid cell on the last grid line along the flow axis.
    DownstreamEdge,
    /// Only the last masked riverbed line.
    RiverbedLine,
}

impl PipelineConfig {
    /// Parse `path` and resolve its relative paths against the config
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let body = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: PipelineConfig = toml::from_str(&body)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut self.paths.dem);
        resolve(&mut self.paths.riverbed_mask);
        resolve(&mut self.paths.library_dir);
        resolve(&mut self.paths.threshold_dir);
        for opt in [
            &mut self.paths.manning_grid,
            &mut self.paths.observations_dir,
            &mut self.paths.conditioned_dem,
            &mut self.paths.forecast_dir,
        ] {
            if let Some(p) = opt {
                resolve(p);
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match (self.terrain.manning, &self.paths.manning_grid) {
            (Some(n), None) if n > 0.0 && n.is_finite() => {}
            (Some(n), None) => bail!("terrain.manning must be finite and positive, got {n}"),
            (None, Some(_)) => {}
            (Some(_), Some(_)) => {
                bail!("set either terrain.manning or paths.manning_grid, not both")
            }
            (None, None) => bail!("one of terrain.manning or paths.manning_grid is required"),
        }
        self.flow_axis()?;
        self.outlet_mode()?;
        if self.terrain.inlet_elevation < self.terrain.outlet_elevation {
            bail!(
                "terrain.inlet_elevation ({}) must not be below terrain.outlet_elevation ({})",
                self.terrain.inlet_elevation,
                self.terrain.outlet_elevation
            );
        }
        if self.library.inflow_levels.is_empty() {
            bail!("library.inflow_levels must list at least one level");
        }
        Ok(())
    }

    pub fn flow_axis(&self) -> Result<FlowAxis> {
        self.terrain
            .flow_axis
            .parse()
            .map_err(|_| anyhow::anyhow!("terrain.flow_axis must be \"row\" or \"col\""))
    }

    pub fn outlet_mode(&self) -> Result<OutletMode> {
        match self.terrain.outlet_mode.as_str() {
            "downstream-edge" => Ok(OutletMode::DownstreamEdge),
            "riverbed-line" => Ok(OutletMode::RiverbedLine),
            other => bail!(
                "terrain.outlet_mode must be \"downstream-edge\" or \"riverbed-line\", got {other:?}"
            ),
        }
    }

    pub fn solver_params(&self) -> SolverParams {
        SolverParams {
            g: self.solver.g,
            cfl_alpha: self.solver.cfl_alpha,
            h_dry: self.solver.h_dry,
            max_dt: self.solver.max_dt,
            tiles: self.solver.tiles,
        }
    }

    pub fn steady_criteria(&self) -> SteadyCriteria {
        SteadyCriteria {
            epsilon: self.steady.epsilon,
            window: self.steady.window,
            max_steps: self.steady.max_steps,
        }
    }
}
