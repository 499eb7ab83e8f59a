//! Inertial shallow-water solver on a staggered grid.
//!
//! Water depth lives at cell centers; unit-width fluxes live on the faces
//! between cells (`qx` positive toward increasing column, `qy` toward
//! increasing row). Each step runs two Jacobi phases — fluxes from the old
//! state, then depths from the old depths plus the new fluxes — so results
//! are independent of traversal order and, because every output row is owned
//! by exactly one row band, bitwise independent of the worker-band count.
//!
//! Boundary conditions are level-driven: inlet cells are reset after every
//! mass update so their water surface sits at the inflow level, and outlet
//! cells drain through free outfalls that extrapolate the interior surface
//! gradient. Everything else — grid edges and nodata cells — is a wall.

mod faces;
mod step;

use std::ops::Range;

use thiserror::Error;

use crate::raster::{GeoTransform, Grid};
use crate::terrain::Manning;
use faces::FaceTopo;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver input: {0}")]
    InvalidParams(String),
    #[error("invalid boundary condition: {0}")]
    InvalidBoundary(String),
    #[error(
        "simulation became non-finite at cell ({row}, {col}) on step {step} (t = {time:.6} s)"
    )]
    NonFinite {
        row: usize,
        col: usize,
        step: u64,
        time: f64,
    },
    #[error(
        "no steady state within {steps} steps (last depth change {residual:.3e} m, epsilon {epsilon:.3e} m)"
    )]
    NoConvergence {
        steps: u64,
        residual: f64,
        epsilon: f64,
    },
}

/// Numerical controls for the solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    /// Gravitational acceleration (m/s²).
    pub g: f64,
    /// Timestep safety factor in (0, 1].
    pub cfl_alpha: f64,
    /// Flow depth (m) at or below which a face is dry.
    pub h_dry: f64,
    /// Timestep ceiling (s); also the step used on an all-dry domain.
    pub max_dt: f64,
    /// Row bands processed in parallel. Results are bitwise identical for
    /// any value ≥ 1.
    pub tiles: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            g: 9.81,
            cfl_alpha: 0.7,
            h_dry: 1e-3,
            max_dt: 60.0,
            tiles: 1,
        }
    }
}

impl SolverParams {
    fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::InvalidParams(msg));
        if !self.g.is_finite() || self.g <= 0.0 {
            return bad(format!("g must be positive and finite, got {}", self.g));
        }
        if !self.cfl_alpha.is_finite() || self.cfl_alpha <= 0.0 || self.cfl_alpha > 1.0 {
            return bad(format!("cfl_alpha must be in (0, 1], got {}", self.cfl_alpha));
        }
        if !self.h_dry.is_finite() || self.h_dry <= 0.0 {
            return bad(format!("h_dry must be positive, got {}", self.h_dry));
        }
        if !self.max_dt.is_finite() || self.max_dt <= 0.0 {
            return bad(format!("max_dt must be positive, got {}", self.max_dt));
        }
        if self.tiles == 0 {
            return bad("tiles must be at least 1".into());
        }
        Ok(())
    }
}

/// Level-driven boundary condition: inlet cells hold the inflow water-surface
/// elevation, outlet cells drain freely where they touch the domain edge.
/// Empty cell lists give a fully closed basin.
#[derive(Debug, Clone, Default)]
pub struct BoundaryCondition {
    /// Water-surface elevation (m) clamped at every inlet cell.
    pub inflow_level: f64,
    pub inlet_cells: Vec<(usize, usize)>,
    pub outlet_cells: Vec<(usize, usize)>,
}

/// Convergence controls for [`Solver::run_to_steady`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyCriteria {
    /// Largest per-step depth change (m) tolerated at steady state.
    pub epsilon: f64,
    /// Steps per convergence check window.
    pub window: u64,
    pub max_steps: u64,
}

impl Default for SteadyCriteria {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            window: 100,
            max_steps: 1_000_000,
        }
    }
}

impl SteadyCriteria {
    fn validate(&self) -> Result<(), SolverError> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(SolverError::InvalidParams(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.window == 0 || self.max_steps == 0 {
            return Err(SolverError::InvalidParams(
                "window and max_steps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Volume bookkeeping for one simulation (all in m³). The water balance
/// identity is `final − initial = inflow − outflow + clamped`, up to
/// floating-point rounding; [`Self::relative_error`] measures the residual.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MassAudit {
    pub initial_volume: f64,
    pub final_volume: f64,
    /// Net volume injected by inlet clamping (can be negative if inlets
    /// absorbed backflow).
    pub boundary_inflow: f64,
    /// Volume drained through outlet faces.
    pub boundary_outflow: f64,
    /// Volume added by clamping negative depths back to zero.
    pub clamped_volume: f64,
}

impl MassAudit {
    pub fn residual(&self) -> f64 {
        (self.final_volume - self.initial_volume)
            - (self.boundary_inflow - self.boundary_outflow + self.clamped_volume)
    }

    /// |residual| relative to the largest term in the balance; 0 when every
    /// term is zero.
    pub fn relative_error(&self) -> f64 {
        let scale = self
            .initial_volume
            .abs()
            .max(self.final_volume.abs())
            .max(self.boundary_inflow.abs())
            .max(self.boundary_outflow.abs())
            .max(self.clamped_volume.abs());
        if scale == 0.0 {
            0.0
        } else {
            self.residual().abs() / scale
        }
    }
}

/// Depths, face fluxes, and elapsed time for one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    /// Cell depths, `rows × cols`, row-major.
    pub h: Vec<f64>,
    /// X-face fluxes (m²/s), `rows × (cols + 1)`, row-major.
    pub qx: Vec<f64>,
    /// Y-face fluxes (m²/s), `(rows + 1) × cols`, row-major.
    pub qy: Vec<f64>,
    /// Simulated seconds since the start.
    pub time: f64,
    pub step: u64,
}

impl SimulationState {
    pub fn zeroed(rows: usize, cols: usize) -> Self {
        Self {
            h: vec![0.0; rows * cols],
            qx: vec![0.0; rows * (cols + 1)],
            qy: vec![0.0; (rows + 1) * cols],
            time: 0.0,
            step: 0,
        }
    }
}

/// Output of [`Solver::run_to_steady`].
#[derive(Debug, Clone)]
pub struct SteadyResult {
    /// Steady water depth per cell; nodata where the terrain is nodata.
    pub depth: Grid,
    /// Water-surface elevation (depth + bed) at the gauge cell.
    pub gauge_level: f64,
    pub mass_audit: MassAudit,
    pub steps: u64,
    /// Full final state, including face fluxes.
    pub state: SimulationState,
}

/// Largest stable timestep: `min(max_dt, cfl_alpha · cell_size / √(g·h_max))`,
/// or `max_dt` when the domain is dry (`h_max ≤ h_dry`).
pub fn stable_dt(params: &SolverParams, cell_size: f64, h_max: f64) -> f64 {
    if h_max <= params.h_dry {
        return params.max_dt;
    }
    (params.cfl_alpha * cell_size / (params.g * h_max).sqrt()).min(params.max_dt)
}

/// A configured solver: terrain, roughness, boundary conditions, and the
/// precomputed face topology, ready to advance states.
pub struct Solver {
    pub(crate) geo: GeoTransform,
    nodata: f64,
    pub(crate) params: SolverParams,
    pub(crate) z: Vec<f64>,
    pub(crate) valid: Vec<bool>,
    /// Per-cell clamped depth for inlet cells; NaN marks non-inlet cells.
    pub(crate) inlet_target: Vec<f64>,
    pub(crate) topo: FaceTopo,
    pub(crate) bands: Vec<Range<usize>>,
    pub(crate) y_bands: Vec<Range<usize>>,
}

impl Solver {
    pub fn new(
        elevation: &Grid,
        manning: &Manning,
        params: SolverParams,
        bc: &BoundaryCondition,
    ) -> Result<Self, SolverError> {
        params.validate()?;
        let geo = elevation.geo;
        let (rows, cols) = (geo.rows, geo.cols);
        let n_cells = rows * cols;

        let mut valid = vec![false; n_cells];
        let mut z = vec![0.0; n_cells];
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                z[i] = elevation.get(r, c);
                valid[i] = !elevation.is_nodata(r, c);
                if valid[i] && !z[i].is_finite() {
                    return Err(SolverError::InvalidParams(format!(
                        "non-finite elevation at cell ({r}, {c})"
                    )));
                }
            }
        }

        let mut n_cell = vec![0.0; n_cells];
        if let Manning::Field(grid) = manning {
            if grid.geo != geo {
                return Err(SolverError::InvalidParams(
                    "Manning grid shape does not match the elevation grid".into(),
                ));
            }
        }
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if !valid[i] {
                    continue;
                }
                let n = match manning {
                    Manning::Uniform(n) => *n,
                    Manning::Field(grid) => {
                        if grid.is_nodata(r, c) {
                            return Err(SolverError::InvalidParams(format!(
                                "Manning grid has nodata at valid cell ({r}, {c})"
                            )));
                        }
                        grid.get(r, c)
                    }
                };
                if !n.is_finite() || n <= 0.0 {
                    return Err(SolverError::InvalidParams(format!(
                        "Manning coefficient must be positive at cell ({r}, {c}), got {n}"
                    )));
                }
                n_cell[i] = n;
            }
        }

        let mut inlet = vec![false; n_cells];
        let mut outlet = vec![false; n_cells];
        let mark = |cells: &[(usize, usize)],
                        flags: &mut Vec<bool>,
                        what: &str|
         -> Result<(), SolverError> {
            for &(r, c) in cells {
                if r >= rows || c >= cols {
                    return Err(SolverError::InvalidBoundary(format!(
                        "{what} cell ({r}, {c}) is outside the {rows}×{cols} grid"
                    )));
                }
                if !valid[r * cols + c] {
                    return Err(SolverError::InvalidBoundary(format!(
                        "{what} cell ({r}, {c}) is nodata"
                    )));
                }
                flags[r * cols + c] = true;
            }
            Ok(())
        };
        mark(&bc.inlet_cells, &mut inlet, "inlet")?;
        mark(&bc.outlet_cells, &mut outlet, "outlet")?;
        for i in 0..n_cells {
            if inlet[i] && outlet[i] {
                return Err(SolverError::InvalidBoundary(format!(
                    "cell ({}, {}) is both inlet and outlet",
                    i / cols,
                    i % cols
                )));
            }
        }
        if !bc.inlet_cells.is_empty() && !bc.inflow_level.is_finite() {
            return Err(SolverError::InvalidBoundary(format!(
                "inflow level must be finite, got {}",
                bc.inflow_level
            )));
        }

        let mut inlet_target = vec![f64::NAN; n_cells];
        for (i, target) in inlet_target.iter_mut().enumerate() {
            if inlet[i] {
                *target = (bc.inflow_level - z[i]).max(0.0);
            }
        }

        let topo = FaceTopo::build(rows, cols, &valid, &inlet, &outlet, &n_cell);
        let bands = step::make_bands(rows, params.tiles);
        let mut y_bands = bands.clone();
        if let Some(last) = y_bands.last_mut() {
            last.end = rows + 1;
        }

        Ok(Self {
            geo,
            nodata: elevation.nodata,
            params,
            z,
            valid,
            inlet_target,
            topo,
            bands,
            y_bands,
        })
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    /// All-dry state except inlet cells, which start at their clamped depth.
    pub fn dry_start(&self) -> SimulationState {
        let mut state = SimulationState::zeroed(self.geo.rows, self.geo.cols);
        for (i, target) in self.inlet_target.iter().enumerate() {
            if !target.is_nan() {
                state.h[i] = *target;
            }
        }
        state
    }

    /// Stable timestep for the current depths.
    pub fn stable_dt_for(&self, state: &SimulationState) -> f64 {
        let mut h_max = 0.0;
        for &h in &state.h {
            if h > h_max {
                h_max = h;
            }
        }
        stable_dt(&self.params, self.geo.cell_size, h_max)
    }

    /// Advance `cur` by `dt` into `next`, accumulating boundary volumes into
    /// `audit`. Returns the largest depth change of the step.
    pub fn step_into(
        &self,
        cur: &SimulationState,
        next: &mut SimulationState,
        dt: f64,
        audit: &mut MassAudit,
    ) -> Result<f64, SolverError> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(SolverError::InvalidParams(format!(
                "dt must be positive, got {dt}"
            )));
        }
        let (rows, cols) = (self.geo.rows, self.geo.cols);
        if cur.h.len() != rows * cols
            || next.h.len() != rows * cols
            || cur.qx.len() != rows * (cols + 1)
            || next.qx.len() != rows * (cols + 1)
            || cur.qy.len() != (rows + 1) * cols
            || next.qy.len() != (rows + 1) * cols
        {
            return Err(SolverError::InvalidParams(
                "state buffers do not match the grid shape".into(),
            ));
        }
        let stats = step::advance(self, cur, next, dt);
        next.time = cur.time + dt;
        next.step = cur.step + 1;
        if let Some((row, col)) = stats.bad_cell {
            return Err(SolverError::NonFinite {
                row,
                col,
                step: next.step,
                time: next.time,
            });
        }
        audit.boundary_inflow += stats.inflow;
        audit.boundary_outflow += stats.outflow;
        audit.clamped_volume += stats.clamped;
        Ok(stats.max_dh)
    }

    /// Convenience single-buffer step.
    pub fn step(
        &self,
        state: &mut SimulationState,
        dt: f64,
        audit: &mut MassAudit,
    ) -> Result<f64, SolverError> {
        let mut next = state.clone();
        let max_dh = self.step_into(state, &mut next, dt, audit)?;
        *state = next;
        Ok(max_dh)
    }

    /// Run from a dry start with adaptive timesteps until the largest depth
    /// change stays below `criteria.epsilon` for a whole window of steps.
    pub fn run_to_steady(
        &self,
        criteria: &SteadyCriteria,
        gauge_cell: (usize, usize),
    ) -> Result<SteadyResult, SolverError> {
        criteria.validate()?;
        let (rows, cols) = (self.geo.rows, self.geo.cols);
        let (gr, gc) = gauge_cell;
        if gr >= rows || gc >= cols || !self.valid[gr * cols + gc] {
            return Err(SolverError::InvalidBoundary(format!(
                "gauge cell ({gr}, {gc}) is outside the grid or nodata"
            )));
        }

        let mut cur = self.dry_start();
        let mut next = cur.clone();
        let mut audit = MassAudit {
            initial_volume: self.volume(&cur.h),
            ..MassAudit::default()
        };

        let mut window_max = 0.0_f64;
        let mut last_dh = f64::INFINITY;
        let mut converged = false;
        while cur.step < criteria.max_steps {
            let dt = self.stable_dt_for(&cur);
            last_dh = self.step_into(&cur, &mut next, dt, &mut audit)?;
            std::mem::swap(&mut cur, &mut next);
            if last_dh > window_max {
                window_max = last_dh;
            }
            if cur.step % criteria.window == 0 {
                if window_max < criteria.epsilon {
                    converged = true;
                    break;
                }
                window_max = 0.0;
            }
        }
        if !converged {
            return Err(SolverError::NoConvergence {
                steps: cur.step,
                residual: last_dh,
                epsilon: criteria.epsilon,
            });
        }

        audit.final_volume = self.volume(&cur.h);
        let gauge_level = self.z[gr * cols + gc] + cur.h[gr * cols + gc];
        Ok(SteadyResult {
            depth: self.depth_grid(&cur),
            gauge_level,
            mass_audit: audit,
            steps: cur.step,
            state: cur,
        })
    }

    /// Depths as a grid, with nodata wherever the terrain is nodata.
    pub fn depth_grid(&self, state: &SimulationState) -> Grid {
        let mut grid = Grid::filled(self.geo, self.nodata, self.nodata);
        for (i, &h) in state.h.iter().enumerate() {
            if self.valid[i] {
                grid.values_mut()[i] = h;
            }
        }
        grid
    }

    /// Total water volume (m³), summed in row-major order.
    fn volume(&self, h: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, &depth) in h.iter().enumerate() {
            if self.valid[i] {
                total += depth;
            }
        }
        total * self.geo.cell_size * self.geo.cell_size
    }
}
