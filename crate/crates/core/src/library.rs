//! Steady-state library: a collection of simulated inundation extents keyed
//! by the water level each run produced at the gauge cell, with
//! nearest-neighbor retrieval and an on-disk manifest format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{read_ascii_grid, write_ascii_grid, Grid, RasterError};
use crate::solver::{
    BoundaryCondition, Solver, SolverError, SolverParams, SteadyCriteria,
};
use crate::terrain::TerrainModel;

/// Gauge levels closer than this (meters) are considered the same state and
/// collapsed into one entry.
pub const GAUGE_COLLAPSE_EPSILON: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("inflow level list is empty")]
    EmptyLevels,
    #[error("inflow level must be finite, got {0}")]
    NonFiniteLevel(f64),
    #[error("simulation failed for inflow level {inflow_level}: {source}")]
    Solver {
        inflow_level: f64,
        #[source]
        source: SolverError,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("library directory {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("library manifest {path}: {message}")]
    Manifest { path: String, message: String },
    #[error(
        "library was built for different terrain (fingerprint {found} ≠ expected {expected})"
    )]
    FingerprintMismatch { expected: String, found: String },
}

/// One steady state: the boundary condition that produced it, the resulting
/// gauge level, and the full depth grid.
#[derive(Debug, Clone)]
pub struct LibraryEntry {
    pub inflow_level: f64,
    pub gauge_level: f64,
    pub depth: Grid,
    pub steps: u64,
    pub mass_error: f64,
}

/// Entries sorted strictly increasing by gauge level, plus the fingerprint
/// of the terrain they were simulated on.
#[derive(Debug, Clone)]
pub struct SteadyLibrary {
    pub terrain_fingerprint: String,
    pub entries: Vec<LibraryEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    inflow_level: f64,
    gauge_level: f64,
    steps: u64,
    mass_error: f64,
    depth_file: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    terrain_fingerprint: String,
    entries: Vec<ManifestEntry>,
}

/// Sort by gauge level and collapse groups closer than
/// [`GAUGE_COLLAPSE_EPSILON`], keeping each group's lowest inflow level.
fn collapse_entries(mut entries: Vec<LibraryEntry>) -> Vec<LibraryEntry> {
    entries.sort_by(|a, b| a.gauge_level.total_cmp(&b.gauge_level));
    let mut kept: Vec<LibraryEntry> = Vec::with_capacity(entries.len());
    let mut anchor = f64::NEG_INFINITY;
    for entry in entries {
        let starts_group = kept.is_empty() || entry.gauge_level - anchor >= GAUGE_COLLAPSE_EPSILON;
        if starts_group {
            anchor = entry.gauge_level;
            kept.push(entry);
        } else if entry.inflow_level < kept.last().unwrap().inflow_level {
            *kept.last_mut().unwrap() = entry;
        }
    }
    kept
}

/// Simulate one steady state per inflow level and assemble the library.
/// Inlet and outlet cells apply to every level; levels producing gauge
/// levels within [`GAUGE_COLLAPSE_EPSILON`] of each other are collapsed.
pub fn build_library(
    terrain: &TerrainModel,
    params: SolverParams,
    criteria: &SteadyCriteria,
    inlet_cells: &[(usize, usize)],
    outlet_cells: &[(usize, usize)],
    inflow_levels: &[f64],
) -> Result<SteadyLibrary, LibraryError> {
    if inflow_levels.is_empty() {
        return Err(LibraryError::EmptyLevels);
    }
    let mut entries = Vec::with_capacity(inflow_levels.len());
    for &level in inflow_levels {
        if !level.is_finite() {
            return Err(LibraryError::NonFiniteLevel(level));
        }
        let bc = BoundaryCondition {
            inflow_level: level,
            inlet_cells: inlet_cells.to_vec(),
            outlet_cells: outlet_cells.to_vec(),
        };
        let annotate = |source| LibraryError::Solver {
            inflow_level: level,
            source,
        };
        let solver =
            Solver::new(&terrain.elevation, &terrain.manning, params, &bc).map_err(annotate)?;
        let result = solver
            .run_to_steady(criteria, terrain.gauge_cell)
            .map_err(annotate)?;
        entries.push(LibraryEntry {
            inflow_level: level,
            gauge_level: result.gauge_level,
            depth: result.depth,
            steps: result.steps,
            mass_error: result.mass_audit.relative_error(),
        });
    }
    Ok(SteadyLibrary {
        terrain_fingerprint: terrain.fingerprint(),
        entries: collapse_entries(entries),
    })
}

impl SteadyLibrary {
    /// Index of the entry whose gauge level is nearest to `level`; exact
    /// midpoints resolve to the lower entry.
    pub fn query_index(&self, level: f64) -> usize {
        debug_assert!(!self.entries.is_empty());
        let split = self
            .entries
            .partition_point(|e| e.gauge_level < level);
        if split == 0 {
            return 0;
        }
        if split == self.entries.len() {
            return self.entries.len() - 1;
        }
        let below = self.entries[split - 1].gauge_level;
        let above = self.entries[split].gauge_level;
        if level - below <= above - level {
            split - 1
        } else {
            split
        }
    }

    /// Entry whose gauge level most closely matches `level`.
    pub fn query(&self, level: f64) -> &LibraryEntry {
        &self.entries[self.query_index(level)]
    }

    /// Fail unless the library was built on exactly this terrain.
    pub fn verify_terrain(&self, terrain: &TerrainModel) -> Result<(), LibraryError> {
        let found = terrain.fingerprint();
        if found != self.terrain_fingerprint {
            return Err(LibraryError::FingerprintMismatch {
                expected: self.terrain_fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }

    /// Wet-cell count (depth ≥ `wet_depth`) per entry, in entry order.
    pub fn wet_areas(&self, wet_depth: f64) -> Vec<usize> {
        self.entries
            .iter()
            .map(|e| {
                e.depth
                    .iter_valid()
                    .filter(|(_, _, d)| *d >= wet_depth)
                    .count()
            })
            .collect()
    }

    /// Physical expectation, not a theorem: higher gauge levels should not
    /// shrink the flooded area. Violations are reported, never fatal.
    pub fn wet_area_warnings(&self, wet_depth: f64) -> Vec<String> {
        let areas = self.wet_areas(wet_depth);
        let mut warnings = Vec::new();
        for i in 1..areas.len() {
            if areas[i] < areas[i - 1] {
                warnings.push(format!(
                    "wet area shrinks from {} to {} cells between gauge levels {} and {}",
                    areas[i - 1],
                    areas[i],
                    self.entries[i - 1].gauge_level,
                    self.entries[i].gauge_level,
                ));
            }
        }
        warnings
    }

    /// Write `manifest.json` plus one depth grid per entry into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), LibraryError> {
        fs::create_dir_all(dir).map_err(|e| LibraryError::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
        let mut manifest = Manifest {
            terrain_fingerprint: self.terrain_fingerprint.clone(),
            entries: Vec::with_capacity(self.entries.len()),
        };
        for (i, entry) in self.entries.iter().enumerate() {
            let depth_file = format!("entry_{i:03}.asc");
            write_ascii_grid(&entry.depth, dir.join(&depth_file))?;
            manifest.entries.push(ManifestEntry {
                inflow_level: entry.inflow_level,
                gauge_level: entry.gauge_level,
                steps: entry.steps,
                mass_error: entry.mass_error,
                depth_file,
            });
        }
        let path = dir.join("manifest.json");
        let body = serde_json::to_string_pretty(&manifest).map_err(|e| LibraryError::Manifest {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        fs::write(&path, body + "\n").map_err(|e| LibraryError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(())
    }

    /// Load a library saved by [`Self::save`]. Callers that hold the terrain
    /// should follow up with [`Self::verify_terrain`].
    pub fn load(dir: &Path) -> Result<Self, LibraryError> {
        let path = dir.join("manifest.json");
        let manifest_err = |message: String| LibraryError::Manifest {
            path: path.display().to_string(),
            message,
        };
        let body = fs::read_to_string(&path).map_err(|e| LibraryError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let manifest: Manifest =
            serde_json::from_str(&body).map_err(|e| manifest_err(e.to_string()))?;
        if manifest.entries.is_empty() {
            return Err(manifest_err("library has no entries".into()));
        }
        let mut entries = Vec::with_capacity(manifest.entries.len());
        for m in manifest.entries {
            let depth = read_ascii_grid(&dir.join(&m.depth_file))?;
            entries.push(LibraryEntry {
                inflow_level: m.inflow_level,
                gauge_level: m.gauge_level,
                depth,
                steps: m.steps,
                mass_error: m.mass_error,
            });
        }
        for pair in entries.windows(2) {
            if pair[1].gauge_level <= pair[0].gauge_level {
                return Err(manifest_err(format!(
                    "gauge levels are not strictly increasing ({} then {})",
                    pair[0].gauge_level, pair[1].gauge_level
                )));
            }
        }
        Ok(Self {
            terrain_fingerprint: manifest.terrain_fingerprint,
            entries,
        })
    }
}
