//! Flood-forecasting core: raster grids, terrain conditioning, an inertial
//! shallow-water solver, steady-state libraries, per-pixel inundation
//! thresholds, Monte-Carlo risk fusion, and forecast evaluation.

pub mod eval;
pub mod library;
pub mod raster;
pub mod risk;
pub mod synth;
pub mod solver;
pub mod terrain;
pub mod threshold;

pub use eval::{aggregate, evaluate, Aggregate, EvalError, EvalReport, MetricMean};
pub use library::{build_library, LibraryEntry, LibraryError, SteadyLibrary};
pub use raster::{GeoTransform, Grid, MaskGrid, RasterError};
pub use risk::{
    discretize, fuse, probability_map, sample_levels, ForecastInput, RiskError, RiskMap,
};
pub use solver::{
    BoundaryCondition, MassAudit, SimulationState, Solver, SolverError, SolverParams,
    SteadyCriteria, SteadyResult,
};
pub use terrain::{FlowAxis, Manning, TerrainError, TerrainModel};
pub use threshold::{
    fit_thresholds, ObservationStack, Prediction, Snapshot, ThresholdError, ThresholdField,
};
