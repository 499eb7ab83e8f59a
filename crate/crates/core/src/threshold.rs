//! Per-pixel inundation thresholds learned from historical (gauge level,
//! wet/dry) observations: a recall-oriented threshold driving a "some risk"
//! mask and a precision-oriented threshold driving a "highest risk" mask.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{
    check_same_geo, read_ascii_grid, read_mask_grid, write_ascii_grid, write_mask_grid,
    GeoTransform, Grid, MaskGrid, RasterError, DEFAULT_NODATA,
};

/// On-disk stand-in for ±∞ in the threshold grids; gauge levels are always
/// many orders of magnitude smaller.
pub const INFINITY_SENTINEL: f64 = 1e30;

#[derive(Debug, Error)]
pub enum ThresholdError {
    #[error("observation stack has no snapshots")]
    EmptyStack,
    #[error("snapshot gauge level must be finite, got {0}")]
    NonFiniteLevel(f64),
    #[error(
        "threshold value {value} at ({row}, {col}) collides with the ±{INFINITY_SENTINEL} sentinel"
    )]
    SentinelCollision { row: usize, col: usize, value: f64 },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("threshold directory {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("threshold manifest {path}: {message}")]
    Manifest { path: String, message: String },
}

/// One historical observation: the gauge level at acquisition time, the
/// observed wet extent, and the pixels that were actually observed
/// (clouds and sensor gaps excluded).
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub gauge_level: f64,
    pub wet: MaskGrid,
    pub valid: MaskGrid,
}

/// Co-registered historical snapshots for one gauge region.
#[derive(Debug, Clone)]
pub struct ObservationStack {
    pub geo: GeoTransform,
    pub snapshots: Vec<Snapshot>,
}

impl ObservationStack {
    pub fn new(geo: GeoTransform) -> Self {
        Self {
            geo,
            snapshots: Vec::new(),
        }
    }

    /// Add a snapshot, checking geometry and level validity.
    pub fn push(
        &mut self,
        gauge_level: f64,
        wet: MaskGrid,
        valid: MaskGrid,
    ) -> Result<(), ThresholdError> {
        if !gauge_level.is_finite() {
            return Err(ThresholdError::NonFiniteLevel(gauge_level));
        }
        check_same_geo(&self.geo, &wet.geo)?;
        check_same_geo(&self.geo, &valid.geo)?;
        self.snapshots.push(Snapshot {
            gauge_level,
            wet,
            valid,
        });
        Ok(())
    }
}

/// Predicted wet extents at one gauge level: `some` errs toward recall,
/// `highest` toward precision, and `highest ⊆ some` always.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub some: MaskGrid,
    pub highest: MaskGrid,
}

/// Learned per-pixel level thresholds. `t_recall` is the minimum gauge level
/// at which a pixel is predicted wet in the `some` mask (+∞ = never);
/// `t_precision` is the level strictly above which it is predicted wet in
/// the `highest` mask (−∞ = always). `coverage` marks pixels with at least
/// one valid observation; uncovered pixels carry +∞ in both fields.
#[derive(Debug, Clone)]
pub struct ThresholdField {
    pub t_recall: Grid,
    pub t_precision: Grid,
    pub coverage: MaskGrid,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    infinity_sentinel: f64,
    t_recall_file: String,
    t_precision_file: String,
    coverage_file: String,
}

/// Fit the extremal thresholds: per pixel, over its valid observations,
/// `t_recall` = lowest level observed wet (+∞ if never wet) and
/// `t_precision` = highest level observed dry (−∞ if never dry), then
/// raised to `t_recall` where the history is inconsistent so that
/// `t_recall ≤ t_precision` holds everywhere.
pub fn fit_thresholds(obs: &ObservationStack) -> Result<ThresholdField, ThresholdError> {
    if obs.snapshots.is_empty() {
        return Err(ThresholdError::EmptyStack);
    }
    for snap in &obs.snapshots {
        if !snap.gauge_level.is_finite() {
            return Err(ThresholdError::NonFiniteLevel(snap.gauge_level));
        }
        check_same_geo(&obs.geo, &snap.wet.geo)?;
        check_same_geo(&obs.geo, &snap.valid.geo)?;
    }
    let geo = obs.geo;
    let mut t_recall = Grid::filled(geo, f64::INFINITY, DEFAULT_NODATA);
    let mut t_precision = Grid::filled(geo, f64::NEG_INFINITY, DEFAULT_NODATA);
    let mut coverage = MaskGrid::filled(geo, false);
    for r in 0..geo.rows {
        for c in 0..geo.cols {
            let mut observed = false;
            for snap in &obs.snapshots {
                if !snap.valid.get(r, c) {
                    continue;
                }
                observed = true;
                if snap.wet.get(r, c) {
                    if snap.gauge_level < t_recall.get(r, c) {
                        t_recall.set(r, c, snap.gauge_level);
                    }
                } else if snap.gauge_level > t_precision.get(r, c) {
                    t_precision.set(r, c, snap.gauge_level);
                }
            }
            if observed {
                coverage.set(r, c, true);
                let floor = t_recall.get(r, c);
                if t_precision.get(r, c) < floor {
                    t_precision.set(r, c, floor);
                }
            } else {
                t_precision.set(r, c, f64::INFINITY);
            }
        }
    }
    Ok(ThresholdField {
        t_recall,
        t_precision,
        coverage,
    })
}

impl ThresholdField {
    /// Predict both masks at a gauge level: `some` wets at
    /// `level ≥ t_recall`, `highest` at `level > t_precision`.
    pub fn predict(&self, level: f64) -> Prediction {
        let geo = self.t_recall.geo;
        let mut some = MaskGrid::filled(geo, false);
        let mut highest = MaskGrid::filled(geo, false);
        for r in 0..geo.rows {
            for c in 0..geo.cols {
                if level >= self.t_recall.get(r, c) {
                    some.set(r, c, true);
                }
                if level > self.t_precision.get(r, c) {
                    highest.set(r, c, true);
                }
            }
        }
        Prediction { some, highest }
    }

    /// Write `manifest.json` plus the two threshold grids and the coverage
    /// mask into `dir`, with ±∞ mapped to ±[`INFINITY_SENTINEL`].
    pub fn save(&self, dir: &Path) -> Result<(), ThresholdError> {
        fs::create_dir_all(dir).map_err(|e| ThresholdError::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
        write_ascii_grid(&encode_sentinels(&self.t_recall)?, dir.join("t_recall.asc"))?;
        write_ascii_grid(
            &encode_sentinels(&self.t_precision)?,
            dir.join("t_precision.asc"),
        )?;
        write_mask_grid(&self.coverage, dir.join("coverage.asc"))?;
        let manifest = Manifest {
            infinity_sentinel: INFINITY_SENTINEL,
            t_recall_file: "t_recall.asc".into(),
            t_precision_file: "t_precision.asc".into(),
            coverage_file: "coverage.asc".into(),
        };
        let path = dir.join("manifest.json");
        let body =
            serde_json::to_string_pretty(&manifest).map_err(|e| ThresholdError::Manifest {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        fs::write(&path, body + "\n").map_err(|e| ThresholdError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(())
    }

    /// Load a field saved by [`Self::save`].
    pub fn load(dir: &Path) -> Result<Self, ThresholdError> {
        let path = dir.join("manifest.json");
        let manifest_err = |message: String| ThresholdError::Manifest {
            path: path.display().to_string(),
            message,
        };
        let body = fs::read_to_string(&path).map_err(|e| ThresholdError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let manifest: Manifest =
            serde_json::from_str(&body).map_err(|e| manifest_err(e.to_string()))?;
        if manifest.infinity_sentinel != INFINITY_SENTINEL {
            return Err(manifest_err(format!(
                "unsupported infinity sentinel {}",
                manifest.infinity_sentinel
            )));
        }
        let t_recall = decode_sentinels(read_ascii_grid(dir.join(manifest.t_recall_file))?);
        let t_precision = decode_sentinels(read_ascii_grid(dir.join(manifest.t_precision_file))?);
        let coverage = read_mask_grid(dir.join(manifest.coverage_file))?;
        check_same_geo(&t_recall.geo, &t_precision.geo)?;
        check_same_geo(&t_recall.geo, &coverage.geo)?;
        Ok(Self {
            t_recall,
            t_precision,
            coverage,
        })
    }
}

fn encode_sentinels(grid: &Grid) -> Result<Grid, ThresholdError> {
    let mut out = grid.clone();
    for i in 0..out.values().len() {
        let v = out.values()[i];
        let (r, c) = (i / out.geo.cols, i % out.geo.cols);
        let encoded = if v == f64::INFINITY {
            INFINITY_SENTINEL
        } else if v == f64::NEG_INFINITY {
            -INFINITY_SENTINEL
        } else if v.abs() >= INFINITY_SENTINEL {
            return Err(ThresholdError::SentinelCollision {
                row: r,
                col: c,
                value: v,
            });
        } else {
            continue;
        };
        out.set(r, c, encoded);
    }
    Ok(out)
}

fn decode_sentinels(mut grid: Grid) -> Grid {
    let cols = grid.geo.cols;
    for i in 0..grid.values().len() {
        let v = grid.values()[i];
        let decoded = if v >= INFINITY_SENTINEL {
            f64::INFINITY
        } else if v <= -INFINITY_SENTINEL {
            f64::NEG_INFINITY
        } else {
            continue;
        };
        grid.set(i / cols, i % cols, decoded);
    }
    grid
}
