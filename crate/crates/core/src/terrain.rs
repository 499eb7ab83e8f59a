//! DEM conditioning: constant-slope riverbed substitution, gauge placement,
//! and the terrain bundle consumed by the solver.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::raster::{check_same_geo, GeoTransform, Grid, MaskGrid, RasterError};

#[derive(Debug, Error)]
pub enum TerrainError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("riverbed mask is empty")]
    EmptyMask,
    #[error("inlet elevation {inlet} is below outlet elevation {outlet}")]
    InletBelowOutlet { inlet: f64, outlet: f64 },
    #[error("point ({x}, {y}) lies outside the grid footprint")]
    OutsideGrid { x: f64, y: f64 },
    #[error("gauge cell ({0}, {1}) is not on the riverbed mask")]
    GaugeOffRiver(usize, usize),
    #[error("Manning coefficient must be positive, got {value} at cell ({row}, {col})")]
    NonPositiveManning { row: usize, col: usize, value: f64 },
    #[error("Manning grid has no value at valid cell ({0}, {1})")]
    ManningNodata(usize, usize),
}

/// Dominant flow direction used when interpolating the riverbed profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowAxis {
    /// Water flows from low row indices (north) to high row indices (south).
    Row,
    /// Water flows from low column indices (west) to high column indices (east).
    Col,
}

impl std::str::FromStr for FlowAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "row" => Ok(FlowAxis::Row),
            "col" | "column" => Ok(FlowAxis::Col),
            other => Err(format!("unknown flow axis `{other}` (expected `row` or `col`)")),
        }
    }
}

/// Manning roughness: a single coefficient or a per-cell grid.
#[derive(Debug, Clone)]
pub enum Manning {
    Uniform(f64),
    Field(Grid),
}

impl Manning {
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        match self {
            Manning::Uniform(n) => *n,
            Manning::Field(grid) => grid.get(row, col),
        }
    }
}

/// Conditioned terrain: elevation with the riverbed flattened, the riverbed
/// mask, roughness, and the gauge cell all downstream modules key on.
#[derive(Debug, Clone)]
pub struct TerrainModel {
    pub elevation: Grid,
    pub riverbed: MaskGrid,
    pub manning: Manning,
    pub gauge_cell: (usize, usize),
}

impl TerrainModel {
    pub fn new(
        elevation: Grid,
        riverbed: MaskGrid,
        manning: Manning,
        gauge_cell: (usize, usize),
    ) -> Result<Self, TerrainError> {
        check_same_geo(&elevation.geo, &riverbed.geo)?;
        let (gr, gc) = gauge_cell;
        if gr >= elevation.geo.rows || gc >= elevation.geo.cols || !riverbed.get(gr, gc) {
            return Err(TerrainError::GaugeOffRiver(gr, gc));
        }
        match &manning {
            Manning::Uniform(n) => {
                if !(*n > 0.0) || !n.is_finite() {
                    return Err(TerrainError::NonPositiveManning {
                        row: 0,
                        col: 0,
                        value: *n,
                    });
                }
            }
            Manning::Field(grid) => {
                check_same_geo(&elevation.geo, &grid.geo)?;
                for (r, c, _) in elevation.iter_valid() {
                    if grid.is_nodata(r, c) {
                        return Err(TerrainError::ManningNodata(r, c));
                    }
                    let n = grid.get(r, c);
                    if !(n > 0.0) || !n.is_finite() {
                        return Err(TerrainError::NonPositiveManning { row: r, col: c, value: n });
                    }
                }
            }
        }
        Ok(Self {
            elevation,
            riverbed,
            manning,
            gauge_cell,
        })
    }

    #[inline]
    pub fn is_valid_cell(&self, row: usize, col: usize) -> bool {
        !self.elevation.is_nodata(row, col)
    }

    /// Content hash over everything the simulation depends on; persisted
    /// with steady libraries to detect stale terrain.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"flood-terrain-v1");
        let geo = &self.elevation.geo;
        h.update(geo.rows.to_le_bytes());
        h.update(geo.cols.to_le_bytes());
        h.update(geo.origin_x.to_le_bytes());
        h.update(geo.origin_y.to_le_bytes());
        h.update(geo.cell_size.to_le_bytes());
        h.update(self.elevation.nodata.to_le_bytes());
        for v in self.elevation.values() {
            h.update(v.to_le_bytes());
        }
        for m in self.riverbed.values() {
            h.update([*m as u8]);
        }
        match &self.manning {
            Manning::Uniform(n) => {
                h.update([0u8]);
                h.update(n.to_le_bytes());
            }
            Manning::Field(grid) => {
                h.update([1u8]);
                for v in grid.values() {
                    h.update(v.to_le_bytes());
                }
            }
        }
        h.update(self.gauge_cell.0.to_le_bytes());
        h.update(self.gauge_cell.1.to_le_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Index range (inclusive) of mask lines along the flow axis: for
/// [`FlowAxis::Row`] the first and last row containing a masked cell.
fn mask_span(mask: &MaskGrid, axis: FlowAxis) -> Option<(usize, usize)> {
    let mut first = None;
    let mut last = None;
    for (r, c) in mask.iter_set() {
        let line = match axis {
            FlowAxis::Row => r,
            FlowAxis::Col => c,
        };
        first = Some(first.map_or(line, |f: usize| f.min(line)));
        last = Some(last.map_or(line, |l: usize| l.max(line)));
    }
    first.zip(last)
}

/// Replace masked cells with a constant-slope riverbed running from
/// `inlet_elev` at the first masked line along the flow axis down to
/// `outlet_elev` at the last. Unmasked cells pass through untouched.
pub fn flatten_riverbed(
    dem: &Grid,
    mask: &MaskGrid,
    inlet_elev: f64,
    outlet_elev: f64,
    axis: FlowAxis,
) -> Result<Grid, TerrainError> {
    check_same_geo(&dem.geo, &mask.geo)?;
    if inlet_elev < outlet_elev {
        return Err(TerrainError::InletBelowOutlet {
            inlet: inlet_elev,
            outlet: outlet_elev,
        });
    }
    let (first, last) = mask_span(mask, axis).ok_or(TerrainError::EmptyMask)?;
    let span = (last - first) as f64;
    let mut out = dem.clone();
    for (r, c) in mask.iter_set() {
        let line = match axis {
            FlowAxis::Row => r,
            FlowAxis::Col => c,
        };
        // Degenerate single-line masks sit at the inlet elevation.
        let t = if span > 0.0 {
            (line - first) as f64 / span
        } else {
            0.0
        };
        out.set(r, c, inlet_elev + (outlet_elev - inlet_elev) * t);
    }
    Ok(out)
}

/// Masked cells on the first (`true`) or last (`false`) masked line along
/// the flow axis, in row-major order. Used to derive inlet and outlet cell
/// sets for boundary conditions.
pub fn mask_line_cells(
    mask: &MaskGrid,
    axis: FlowAxis,
    first_line: bool,
) -> Result<Vec<(usize, usize)>, TerrainError> {
    let (first, last) = mask_span(mask, axis).ok_or(TerrainError::EmptyMask)?;
    let line = if first_line { first } else { last };
    Ok(mask
        .iter_set()
        .filter(|(r, c)| {
            (match axis {
                FlowAxis::Row => *r,
                FlowAxis::Col => *c,
            }) == line
        })
        .collect())
}

/// Snap a gauge coordinate to the riverbed: the containing cell when it is
/// masked, otherwise the nearest masked cell by center distance with ties
/// broken toward the lowest (row, col).
pub fn locate_gauge(
    geo: &GeoTransform,
    gauge_x: f64,
    gauge_y: f64,
    mask: &MaskGrid,
) -> Result<(usize, usize), TerrainError> {
    check_same_geo(geo, &mask.geo)?;
    let cell = geo
        .world_to_cell(gauge_x, gauge_y)
        .ok_or(TerrainError::OutsideGrid {
            x: gauge_x,
            y: gauge_y,
        })?;
    if !mask.any() {
        return Err(TerrainError::EmptyMask);
    }
    if mask.get(cell.0, cell.1) {
        return Ok(cell);
    }
    let mut best: Option<((usize, usize), f64)> = None;
    for (r, c) in mask.iter_set() {
        let (cx, cy) = geo.cell_center(r, c);
        let d2 = (cx - gauge_x).powi(2) + (cy - gauge_y).powi(2);
        // Row-major iteration makes "strictly smaller" keep the
        // lexicographically smallest cell on exact ties.
        if best.map_or(true, |(_, bd)| d2 < bd) {
            best = Some(((r, c), d2));
        }
    }
    Ok(best.unwrap().0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::DEFAULT_NODATA;

    fn geo(rows: usize, cols: usize) -> GeoTransform {
        GeoTransform::new(0.0, 0.0, 10.0, rows, cols).unwrap()
    }

    fn channel_mask(rows: usize, cols: usize, channel_col: usize) -> MaskGrid {
        let mut m = MaskGrid::filled(geo(rows, cols), false);
        for r in 0..rows {
            m.set(r, channel_col, true);
        }
        m
    }

    #[test]
    fn zero_slope_sets_every_masked_cell() {
        let g = geo(4, 3);
        let dem = Grid::filled(g, 20.0, DEFAULT_NODATA);
        let mask = channel_mask(4, 3, 1);
        let out = flatten_riverbed(&dem, &mask, 5.0, 5.0, FlowAxis::Row).unwrap();
        for r in 0..4 {
            assert_eq!(out.get(r, 1), 5.0);
        }
    }

    #[test]
    fn linear_interpolation_along_rows() {
        // Mask spans rows 0..=10; independent evaluation of the linear
        // profile puts row 5 exactly halfway: 10 + (0 - 10) * 5/10 = 5.
        let g = geo(11, 3);
        let dem = Grid::filled(g, 50.0, DEFAULT_NODATA);
        let mask = channel_mask(11, 3, 1);
        let out = flatten_riverbed(&dem, &mask, 10.0, 0.0, FlowAxis::Row).unwrap();
        assert_eq!(out.get(5, 1), 5.0);
        assert_eq!(out.get(0, 1), 10.0);
        assert_eq!(out.get(10, 1), 0.0);
        // Non-increasing along the flow axis.
        for r in 1..11 {
            assert!(out.get(r, 1) <= out.get(r - 1, 1));
        }
    }

    #[test]
    fn unmasked_cells_bitwise_unchanged() {
        let g = geo(3, 3);
        let mut dem = Grid::filled(g, 0.0, DEFAULT_NODATA);
        dem.set(0, 0, 1.25e-3);
        dem.set(2, 2, -0.0);
        let mask = channel_mask(3, 3, 1);
        let out = flatten_riverbed(&dem, &mask, 2.0, 1.0, FlowAxis::Row).unwrap();
        for r in 0..3 {
            for c in [0usize, 2] {
                assert_eq!(out.get(r, c).to_bits(), dem.get(r, c).to_bits());
            }
        }
    }

    #[test]
    fn flatten_is_idempotent() {
        let g = geo(6, 4);
        let dem = Grid::filled(g, 30.0, DEFAULT_NODATA);
        let mut mask = MaskGrid::filled(g, false);
        for r in 1..5 {
            mask.set(r, 2, true);
        }
        let once = flatten_riverbed(&dem, &mask, 8.0, 3.0, FlowAxis::Row).unwrap();
        let twice = flatten_riverbed(&once, &mask, 8.0, 3.0, FlowAxis::Row).unwrap();
        assert!(once.bit_eq(&twice));
    }

    #[test]
    fn empty_mask_is_error() {
        let g = geo(2, 2);
        let dem = Grid::filled(g, 0.0, DEFAULT_NODATA);
        let mask = MaskGrid::filled(g, false);
        assert!(matches!(
            flatten_riverbed(&dem, &mask, 1.0, 0.0, FlowAxis::Row),
            Err(TerrainError::EmptyMask)
        ));
    }

    #[test]
    fn inlet_below_outlet_is_error() {
        let g = geo(2, 2);
        let dem = Grid::filled(g, 0.0, DEFAULT_NODATA);
        let mask = channel_mask(2, 2, 0);
        assert!(matches!(
            flatten_riverbed(&dem, &mask, 0.0, 1.0, FlowAxis::Row),
            Err(TerrainError::InletBelowOutlet { .. })
        ));
    }

    #[test]
    fn gauge_inside_masked_cell() {
        let g = geo(3, 3);
        let mask = channel_mask(3, 3, 1);
        let (x, y) = g.cell_center(1, 1);
        assert_eq!(locate_gauge(&g, x, y, &mask).unwrap(), (1, 1));
    }

    #[test]
    fn gauge_snaps_to_nearest_masked_cell() {
        let g = geo(3, 3);
        let mask = channel_mask(3, 3, 1);
        // Point in column 2, closest masked cell is in the same row.
        let (x, y) = g.cell_center(2, 2);
        let got = locate_gauge(&g, x, y, &mask).unwrap();
        // Brute-force oracle over all masked cells.
        let mut best = None;
        for (r, c) in mask.iter_set() {
            let (cx, cy) = g.cell_center(r, c);
            let d2 = (cx - x).powi(2) + (cy - y).powi(2);
            if best.map_or(true, |(_, bd)| d2 < bd) {
                best = Some(((r, c), d2));
            }
        }
        assert_eq!(got, best.unwrap().0);
        assert_eq!(got, (2, 1));
    }

    #[test]
    fn equidistant_tie_takes_lexicographically_smaller() {
        let g = geo(3, 3);
        let mut mask = MaskGrid::filled(g, false);
        mask.set(0, 1, true);
        mask.set(2, 1, true);
        // Center of (1, 1) is equidistant from both masked cells.
        let (x, y) = g.cell_center(1, 1);
        assert_eq!(locate_gauge(&g, x, y, &mask).unwrap(), (0, 1));
    }

    #[test]
    fn gauge_outside_grid_is_error() {
        let g = geo(2, 2);
        let mask = channel_mask(2, 2, 0);
        assert!(matches!(
            locate_gauge(&g, -5.0, 0.0, &mask),
            Err(TerrainError::OutsideGrid { .. })
        ));
    }

    #[test]
    fn terrain_model_rejects_gauge_off_river() {
        let g = geo(2, 2);
        let dem = Grid::filled(g, 1.0, DEFAULT_NODATA);
        let mask = channel_mask(2, 2, 0);
        let err = TerrainModel::new(dem, mask, Manning::Uniform(0.03), (0, 1));
        assert!(matches!(err, Err(TerrainError::GaugeOffRiver(0, 1))));
    }

    #[test]
    fn fingerprint_tracks_content() {
        let g = geo(2, 2);
        let dem = Grid::filled(g, 1.0, DEFAULT_NODATA);
        let mask = channel_mask(2, 2, 0);
        let t1 = TerrainModel::new(dem.clone(), mask.clone(), Manning::Uniform(0.03), (0, 0))
            .unwrap();
        let mut dem2 = dem.clone();
        dem2.set(1, 1, 1.000001);
        let t2 = TerrainModel::new(dem2, mask.clone(), Manning::Uniform(0.03), (0, 0)).unwrap();
        let t3 = TerrainModel::new(dem, mask, Manning::Uniform(0.03), (0, 0)).unwrap();
        assert_ne!(t1.fingerprint(), t2.fingerprint());
        assert_eq!(t1.fingerprint(), t3.fingerprint());
    }
}
