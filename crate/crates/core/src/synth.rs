//! Synthetic terrain generators shared by tests, benchmarks, and the demo
//! data command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raster::{GeoTransform, Grid, MaskGrid, DEFAULT_NODATA};

/// Shape of a [`valley`] fixture: a straight channel with a flat bottom
/// running from the north edge (row 0) to the south edge, cut into a
/// floodplain that rises linearly away from the banks.
#[derive(Debug, Clone, Copy)]
pub struct ValleySpec {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
    /// Channel-bottom width in cells.
    pub channel_width: usize,
    /// Downstream bed drop (m per m of run).
    pub long_slope: f64,
    /// Bank rise away from the channel (m per m).
    pub cross_slope: f64,
}

impl Default for ValleySpec {
    fn default() -> Self {
        Self {
            rows: 48,
            cols: 40,
            cell_size: 10.0,
            channel_width: 6,
            long_slope: 0.001,
            cross_slope: 0.01,
        }
    }
}

impl ValleySpec {
    /// Columns covered by the channel bottom.
    pub fn channel_cols(&self) -> std::ops::Range<usize> {
        let start = (self.cols - self.channel_width) / 2;
        start..start + self.channel_width
    }

    /// Bed elevation of the channel bottom at `row`.
    pub fn bed_elevation(&self, row: usize) -> f64 {
        self.long_slope * self.cell_size * (self.rows - 1 - row) as f64
    }
}

/// Build the valley DEM and its riverbed mask (the channel-bottom cells).
pub fn valley(spec: &ValleySpec) -> (Grid, MaskGrid) {
    let geo = GeoTransform::new(0.0, 0.0, spec.cell_size, spec.rows, spec.cols)
        .expect("valley spec must describe a valid grid");
    let channel = spec.channel_cols();
    let mut dem = Grid::filled(geo, 0.0, DEFAULT_NODATA);
    let mut mask = MaskGrid::filled(geo, false);
    for r in 0..spec.rows {
        let bed = spec.bed_elevation(r);
        for c in 0..spec.cols {
            let dist_cells = if c < channel.start {
                (channel.start - c) as f64
            } else if c >= channel.end {
                (c - (channel.end - 1)) as f64
            } else {
                0.0
            };
            let bank = spec.cross_slope * spec.cell_size * dist_cells;
            dem.set(r, c, bed + bank);
            if dist_cells == 0.0 {
                mask.set(r, c, true);
            }
        }
    }
    (dem, mask)
}

/// Uniformly sloping plane: the bed falls toward high row indices, flat
/// across columns. Used for normal-flow checks.
pub fn plane(rows: usize, cols: usize, cell_size: f64, slope: f64) -> Grid {
    let geo = GeoTransform::new(0.0, 0.0, cell_size, rows, cols)
        .expect("plane dimensions must describe a valid grid");
    let mut dem = Grid::filled(geo, 0.0, DEFAULT_NODATA);
    for r in 0..rows {
        let z = slope * cell_size * (rows - 1 - r) as f64;
        for c in 0..cols {
            dem.set(r, c, z);
        }
    }
    dem
}

/// Random bathymetry whose elevations are multiples of 2⁻¹⁰ in [0, 8). On
/// this lattice `level − z` and `z + (level − z)` are exact in f64, so a
/// flat lake initialized over it has a bitwise-flat water surface.
pub fn dyadic_bathymetry(seed: u64, rows: usize, cols: usize, cell_size: f64) -> Grid {
    let geo = GeoTransform::new(0.0, 0.0, cell_size, rows, cols)
        .expect("bathymetry dimensions must describe a valid grid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dem = Grid::filled(geo, 0.0, DEFAULT_NODATA);
    for v in dem.values_mut().iter_mut() {
        *v = rng.gen_range(0..8192) as f64 / 1024.0;
    }
    dem
}

/// Random water level on the same 2⁻¹⁰ lattice as [`dyadic_bathymetry`],
/// kept inside (1, 7) so some cells are wet and some dry.
pub fn dyadic_level(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.gen_range(1024..7168) as f64 / 1024.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valley_channel_is_flat_across_and_monotone_down() {
        let spec = ValleySpec::default();
        let (dem, mask) = valley(&spec);
        let channel = spec.channel_cols();
        for r in 0..spec.rows {
            let bed = dem.get(r, channel.start);
            for c in channel.clone() {
                assert_eq!(dem.get(r, c), bed);
                assert!(mask.get(r, c));
            }
            assert!(!mask.get(r, channel.start - 1));
            assert!(dem.get(r, channel.start - 1) > bed);
        }
        for r in 1..spec.rows {
            assert!(dem.get(r, channel.start) < dem.get(r - 1, channel.start));
        }
    }

    #[test]
    fn dyadic_values_are_on_lattice() {
        let dem = dyadic_bathymetry(7, 5, 5, 10.0);
        for (_, _, v) in dem.iter_valid() {
            let scaled = v * 1024.0;
            assert_eq!(scaled, scaled.trunc());
            assert!((0.0..8.0).contains(&v));
        }
        let level = dyadic_level(7);
        let scaled = level * 1024.0;
        assert_eq!(scaled, scaled.trunc());
    }

    #[test]
    fn same_seed_same_terrain() {
        let a = dyadic_bathymetry(3, 6, 6, 10.0);
        let b = dyadic_bathymetry(3, 6, 6, 10.0);
        assert!(a.bit_eq(&b));
        assert_ne!(
            dyadic_bathymetry(4, 6, 6, 10.0).values(),
            a.values()
        );
    }
}
