//! Georeferenced raster grids and ESRI ASCII grid I/O.
//!
//! Every field in the pipeline (elevation, water depth, probability,
//! thresholds, wet/dry labels) lives on a [`Grid`] or [`MaskGrid`] over a
//! shared [`GeoTransform`]. Row 0 is the northernmost row; y decreases as
//! the row index increases, matching the ASCII grid convention of writing
//! the top row first.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Default sentinel for invalid cells, matching common ESRI usage.
pub const DEFAULT_NODATA: f64 = -9999.0;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("grid has {actual} values but shape is {rows}x{cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        actual: usize,
    },
    #[error("invalid geotransform: {0}")]
    InvalidGeoTransform(String),
    #[error("non-finite value {value} at cell ({row}, {col}) is not the nodata sentinel")]
    NonFiniteValue { row: usize, col: usize, value: f64 },
}

/// Placement of a rectangular grid of square cells in world coordinates.
///
/// `origin_x`/`origin_y` are the coordinates of the grid's south-west
/// corner (the ESRI `xllcorner`/`yllcorner`). Cell (0, 0) is the
/// north-west cell. The grid footprint is half-open:
/// `[origin_x, origin_x + cols*cell_size) x [origin_y, origin_y + rows*cell_size)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GeoTransform {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        rows: usize,
        cols: usize,
    ) -> Result<Self, RasterError> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(RasterError::InvalidGeoTransform(format!(
                "cell_size must be positive and finite, got {cell_size}"
            )));
        }
        if rows == 0 || cols == 0 {
            return Err(RasterError::InvalidGeoTransform(format!(
                "grid must have at least one row and column, got {rows}x{cols}"
            )));
        }
        if !origin_x.is_finite() || !origin_y.is_finite() {
            return Err(RasterError::InvalidGeoTransform(
                "origin coordinates must be finite".to_string(),
            ));
        }
        Ok(Self {
            origin_x,
            origin_y,
            cell_size,
            rows,
            cols,
        })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    /// World coordinates of the center of a cell.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let x = self.origin_x + (col as f64 + 0.5) * self.cell_size;
        let y = self.origin_y + (self.rows as f64 - row as f64 - 0.5) * self.cell_size;
        (x, y)
    }

    /// Cell containing a world point, or `None` when the point falls outside
    /// the grid footprint.
    ///
    /// Each cell owns the half-open square `[edge, edge + cell_size)` along
    /// both axes, so a point on a shared edge belongs to exactly one cell.
    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !x.is_finite() || !y.is_finite() {
            return None;
        }
        let fc = ((x - self.origin_x) / self.cell_size).floor();
        let fr = ((y - self.origin_y) / self.cell_size).floor();
        if fc < 0.0 || fr < 0.0 || fc >= self.cols as f64 || fr >= self.rows as f64 {
            return None;
        }
        // fr counts cells up from the south edge; row 0 is the north row.
        let row = self.rows - 1 - fr as usize;
        Some((row, fc as usize))
    }
}

/// A raster of f64 cells with a nodata sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub geo: GeoTransform,
    values: Vec<f64>,
    pub nodata: f64,
}

impl Grid {
    pub fn new(geo: GeoTransform, values: Vec<f64>, nodata: f64) -> Result<Self, RasterError> {
        if values.len() != geo.len() {
            return Err(RasterError::ShapeMismatch {
                rows: geo.rows,
                cols: geo.cols,
                actual: values.len(),
            });
        }
        Ok(Self { geo, values, nodata })
    }

    pub fn filled(geo: GeoTransform, value: f64, nodata: f64) -> Self {
        Self {
            geo,
            values: vec![value; geo.len()],
            nodata,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.geo.index(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let i = self.geo.index(row, col);
        self.values[i] = value;
    }

    #[inline]
    pub fn is_nodata(&self, row: usize, col: usize) -> bool {
        self.get(row, col) == self.nodata
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Iterate `(row, col, value)` over non-nodata cells.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let cols = self.geo.cols;
        let nodata = self.nodata;
        self.values
            .iter()
            .enumerate()
            .filter(move |(_, v)| **v != nodata)
            .map(move |(i, v)| (i / cols, i % cols, *v))
    }

    /// True when both grids have identical geometry, nodata sentinel, and
    /// bit-identical cell values.
    pub fn bit_eq(&self, other: &Grid) -> bool {
        self.geo == other.geo
            && self.nodata.to_bits() == other.nodata.to_bits()
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// A boolean raster sharing the [`GeoTransform`] conventions of [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaskGrid {
    pub geo: GeoTransform,
    values: Vec<bool>,
}

impl MaskGrid {
    pub fn new(geo: GeoTransform, values: Vec<bool>) -> Result<Self, RasterError> {
        if values.len() != geo.len() {
            return Err(RasterError::ShapeMismatch {
                rows: geo.rows,
                cols: geo.cols,
                actual: values.len(),
            });
        }
        Ok(Self { geo, values })
    }

    pub fn filled(geo: GeoTransform, value: bool) -> Self {
        Self {
            geo,
            values: vec![value; geo.len()],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.values[self.geo.index(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        let i = self.geo.index(row, col);
        self.values[i] = value;
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }

    pub fn any(&self) -> bool {
        self.values.iter().any(|v| *v)
    }

    /// Iterate `(row, col)` over set cells in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.geo.cols;
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v)
            .map(move |(i, _)| (i / cols, i % cols))
    }

    pub fn union(&self, other: &MaskGrid) -> Result<MaskGrid, RasterError> {
        check_same_geo(&self.geo, &other.geo)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| *a || *b)
            .collect();
        Ok(MaskGrid { geo: self.geo, values })
    }

    pub fn intersect(&self, other: &MaskGrid) -> Result<MaskGrid, RasterError> {
        check_same_geo(&self.geo, &other.geo)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| *a && *b)
            .collect();
        Ok(MaskGrid { geo: self.geo, values })
    }

    pub fn is_subset_of(&self, other: &MaskGrid) -> bool {
        self.geo == other.geo
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| !*a || *b)
    }
}

pub(crate) fn check_same_geo(a: &GeoTransform, b: &GeoTransform) -> Result<(), RasterError> {
    if a == b {
        Ok(())
    } else {
        Err(RasterError::InvalidGeoTransform(format!(
            "geometry mismatch: {a:?} vs {b:?}"
        )))
    }
}

const HEADER_KEYS: [&str; 6] = [
    "ncols",
    "nrows",
    "xllcorner",
    "yllcorner",
    "cellsize",
    "nodata_value",
];

/// Read an ESRI ASCII grid.
///
/// The six header lines must appear in the canonical order (`ncols`,
/// `nrows`, `xllcorner`, `yllcorner`, `cellsize`, `NODATA_value`); keys are
/// matched case-insensitively. Body values are parsed in row-major order,
/// top row first. Values equal to the `NODATA_value` become nodata; any
/// other non-finite value is rejected.
pub fn read_ascii_grid(path: impl AsRef<Path>) -> Result<Grid, RasterError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);

    let fmt_err = |line: usize, message: String| RasterError::Format {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut header = [0.0f64; 6];
    let mut lines = reader.lines().enumerate();
    for (slot, key) in HEADER_KEYS.iter().enumerate() {
        let (idx, line) = lines
            .next()
            .ok_or_else(|| fmt_err(slot + 1, format!("missing header line `{key}`")))?;
        let lineno = idx + 1;
        let line = line.map_err(|source| RasterError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut tokens = line.split_whitespace();
        let found = tokens
            .next()
            .ok_or_else(|| fmt_err(lineno, format!("expected header key `{key}`, found empty line")))?;
        if !found.eq_ignore_ascii_case(key) {
            return Err(fmt_err(
                lineno,
                format!("expected header key `{key}`, found `{found}`"),
            ));
        }
        let value = tokens
            .next()
            .ok_or_else(|| fmt_err(lineno, format!("header `{key}` has no value")))?;
        if tokens.next().is_some() {
            return Err(fmt_err(
                lineno,
                format!("header `{key}` has trailing tokens"),
            ));
        }
        header[slot] = value
            .parse::<f64>()
            .map_err(|_| fmt_err(lineno, format!("header `{key}` value `{value}` is not a number")))?;
    }

    let parse_dim = |slot: usize, name: &str| -> Result<usize, RasterError> {
        let v = header[slot];
        if v.fract() != 0.0 || v < 1.0 || v > usize::MAX as f64 {
            return Err(fmt_err(
                slot + 1,
                format!("header `{name}` must be a positive integer, got {v}"),
            ));
        }
        Ok(v as usize)
    };
    let cols = parse_dim(0, "ncols")?;
    let rows = parse_dim(1, "nrows")?;
    let geo = GeoTransform::new(header[2], header[3], header[4], rows, cols).map_err(|e| {
        fmt_err(5, format!("bad cellsize/corner header: {e}"))
    })?;
    let nodata = header[5];

    let expected = rows * cols;
    let mut values = Vec::with_capacity(expected);
    let mut last_line = 6;
    for (idx, line) in lines {
        let lineno = idx + 1;
        last_line = lineno;
        let line = line.map_err(|source| RasterError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        for token in line.split_whitespace() {
            if values.len() == expected {
                return Err(fmt_err(
                    lineno,
                    format!(
                        "body has more than {expected} values for a {rows}x{cols} header"
                    ),
                ));
            }
            let v = token
                .parse::<f64>()
                .map_err(|_| fmt_err(lineno, format!("non-numeric token `{token}`")))?;
            if !v.is_finite() && v != nodata {
                return Err(fmt_err(
                    lineno,
                    format!("non-finite value `{token}` is not the nodata sentinel"),
                ));
            }
            values.push(v);
        }
    }
    if values.len() != expected {
        return Err(fmt_err(
            last_line,
            format!(
                "body has {} values but the {rows}x{cols} header requires {expected}",
                values.len()
            ),
        ));
    }
    Grid::new(geo, values, nodata)
}

/// Write a grid in the ESRI ASCII format accepted by [`read_ascii_grid`].
///
/// Floats are serialized with the shortest representation that parses back
/// to the identical bits, so read(write(g)) reproduces g exactly.
pub fn write_ascii_grid(grid: &Grid, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    for (i, v) in grid.values.iter().enumerate() {
        if !v.is_finite() && *v != grid.nodata {
            return Err(RasterError::NonFiniteValue {
                row: i / grid.geo.cols,
                col: i % grid.geo.cols,
                value: *v,
            });
        }
    }
    let io_err = |source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    let geo = &grid.geo;
    (|| -> std::io::Result<()> {
        writeln!(w, "ncols {}", geo.cols)?;
        writeln!(w, "nrows {}", geo.rows)?;
        writeln!(w, "xllcorner {}", geo.origin_x)?;
        writeln!(w, "yllcorner {}", geo.origin_y)?;
        writeln!(w, "cellsize {}", geo.cell_size)?;
        writeln!(w, "NODATA_value {}", grid.nodata)?;
        let mut line = String::new();
        for r in 0..geo.rows {
            line.clear();
            for c in 0..geo.cols {
                if c > 0 {
                    line.push(' ');
                }
                line.push_str(&format!("{}", grid.get(r, c)));
            }
            writeln!(w, "{line}")?;
        }
        w.flush()
    })()
    .map_err(io_err)
}

/// Write a mask as a 0/1 ASCII grid.
pub fn write_mask_grid(mask: &MaskGrid, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let values = mask
        .values()
        .iter()
        .map(|v| if *v { 1.0 } else { 0.0 })
        .collect();
    let grid = Grid::new(mask.geo, values, DEFAULT_NODATA)?;
    write_ascii_grid(&grid, path)
}

/// Read a 0/1 ASCII grid as a mask; nonzero non-nodata cells are set.
pub fn read_mask_grid(path: impl AsRef<Path>) -> Result<MaskGrid, RasterError> {
    let grid = read_ascii_grid(path)?;
    let values = grid
        .values()
        .iter()
        .map(|v| *v != 0.0 && *v != grid.nodata)
        .collect();
    MaskGrid::new(grid.geo, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_two_by_two() {
        let f = tmp_file(
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n1 2\n3 4\n",
        );
        let g = read_ascii_grid(f.path()).unwrap();
        assert_eq!(g.geo.rows, 2);
        assert_eq!(g.geo.cols, 2);
        assert_eq!(g.values(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(g.geo.cell_size, 10.0);
    }

    #[test]
    fn body_shorter_than_header_is_dimension_mismatch() {
        let f = tmp_file(
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n1 2\n3\n",
        );
        let err = read_ascii_grid(f.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("3 values"), "{msg}");
        assert!(msg.contains(":8:"), "line number missing: {msg}");
    }

    #[test]
    fn non_numeric_token_reports_line() {
        let f = tmp_file(
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n1 2\n3 oops\n",
        );
        let msg = read_ascii_grid(f.path()).unwrap_err().to_string();
        assert!(msg.contains("oops"), "{msg}");
        assert!(msg.contains(":8:"), "{msg}");
    }

    #[test]
    fn bad_header_key_reports_line() {
        let f = tmp_file("ncols 2\nnrows 2\nxllcorner 0\nbogus 0\ncellsize 10\nNODATA_value -1\n");
        let msg = read_ascii_grid(f.path()).unwrap_err().to_string();
        assert!(msg.contains("yllcorner"), "{msg}");
        assert!(msg.contains(":4:"), "{msg}");
    }

    #[test]
    fn nodata_tokens_survive_round_trip() {
        let f = tmp_file(
            "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n-9999 7\n",
        );
        let g = read_ascii_grid(f.path()).unwrap();
        assert!(g.is_nodata(0, 0));
        let out = tempfile::NamedTempFile::new().unwrap();
        write_ascii_grid(&g, out.path()).unwrap();
        let body = std::fs::read_to_string(out.path()).unwrap();
        assert!(body.lines().last().unwrap().starts_with("-9999"));
        let g2 = read_ascii_grid(out.path()).unwrap();
        assert!(g.bit_eq(&g2));
    }

    #[test]
    fn write_all_zero_body() {
        let geo = GeoTransform::new(0.0, 0.0, 10.0, 2, 2).unwrap();
        let g = Grid::filled(geo, 0.0, DEFAULT_NODATA);
        let out = tempfile::NamedTempFile::new().unwrap();
        write_ascii_grid(&g, out.path()).unwrap();
        let body: Vec<String> = std::fs::read_to_string(out.path())
            .unwrap()
            .lines()
            .skip(6)
            .map(String::from)
            .collect();
        assert_eq!(body, vec!["0 0".to_string(), "0 0".to_string()]);
    }

    #[test]
    fn infinite_value_rejected_on_write() {
        let geo = GeoTransform::new(0.0, 0.0, 1.0, 1, 1).unwrap();
        let g = Grid::new(geo, vec![f64::INFINITY], DEFAULT_NODATA).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        assert!(matches!(
            write_ascii_grid(&g, out.path()),
            Err(RasterError::NonFiniteValue { .. })
        ));
    }

    #[test]
    fn world_to_cell_interior_point() {
        let geo = GeoTransform::new(0.0, 0.0, 10.0, 1, 2).unwrap();
        assert_eq!(geo.world_to_cell(5.0, 5.0), Some((0, 0)));
    }

    #[test]
    fn world_to_cell_shared_edge_goes_to_starting_cell() {
        let geo = GeoTransform::new(0.0, 0.0, 10.0, 1, 2).unwrap();
        assert_eq!(geo.world_to_cell(10.0, 0.0), Some((0, 1)));
    }

    #[test]
    fn world_to_cell_outside() {
        let geo = GeoTransform::new(0.0, 0.0, 10.0, 1, 2).unwrap();
        assert_eq!(geo.world_to_cell(-1.0, 0.0), None);
        assert_eq!(geo.world_to_cell(20.0, 0.0), None);
        assert_eq!(geo.world_to_cell(0.0, 10.0), None);
    }

    #[test]
    fn rows_count_down_from_north() {
        let geo = GeoTransform::new(0.0, 0.0, 10.0, 3, 2).unwrap();
        // y = 25 is in the top band, y = 5 in the bottom band.
        assert_eq!(geo.world_to_cell(5.0, 25.0), Some((0, 0)));
        assert_eq!(geo.world_to_cell(5.0, 5.0), Some((2, 0)));
        let (_, y_top) = geo.cell_center(0, 0);
        let (_, y_bottom) = geo.cell_center(2, 0);
        assert!(y_top > y_bottom);
    }

    #[test]
    fn mask_set_algebra() {
        let geo = GeoTransform::new(0.0, 0.0, 1.0, 1, 3).unwrap();
        let a = MaskGrid::new(geo, vec![true, true, false]).unwrap();
        let b = MaskGrid::new(geo, vec![false, true, true]).unwrap();
        assert_eq!(a.union(&b).unwrap().values(), &[true, true, true]);
        assert_eq!(a.intersect(&b).unwrap().values(), &[false, true, false]);
        assert!(a.intersect(&b).unwrap().is_subset_of(&a));
    }
}
