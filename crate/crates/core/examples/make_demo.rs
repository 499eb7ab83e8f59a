//! Generate a self-contained demo dataset for the `flood` CLI: a synthetic
//! valley DEM, its riverbed mask, an analytic historical observation stack,
//! a ground-truth raster, and a ready-to-run pipeline config.
//!
//! Usage: cargo run -p flood-core --example make_demo -- <output-dir>

use std::fs;
use std::path::Path;

use flood_core::raster::{write_ascii_grid, write_mask_grid, Grid, MaskGrid};
use flood_core::synth::{valley, ValleySpec};

/// Snapshot rule: a cell is observed wet when the water surface at the
/// gauge, minus a small freeboard, stands above the cell's ground.
const OBS_FREEBOARD: f64 = 0.25;

fn wet_mask(dem: &Grid, level: f64) -> MaskGrid {
    let mut wet = MaskGrid::filled(dem.geo, false);
    for (r, c, z) in dem.iter_valid() {
        if z <= level - OBS_FREEBOARD {
            wet.set(r, c, true);
        }
    }
    wet
}

fn main() {
    let out = std::env::args()
        .nth(1)
        .expect("usage: make_demo <output-dir>");
    let out = Path::new(&out);
    fs::create_dir_all(out.join("obs")).expect("creating output directories");

    let spec = ValleySpec::default();
    let (dem, mask) = valley(&spec);
    write_ascii_grid(&dem, out.join("dem.asc")).expect("writing DEM");
    write_mask_grid(&mask, out.join("mask.asc")).expect("writing riverbed mask");

    // Historical snapshots at three gauge levels; the middle one carries a
    // simulated cloud band and doubles as the ground-truth raster.
    let obs_levels = [0.8, 1.3, 1.9];
    let mut manifest_entries = Vec::new();
    for (i, &level) in obs_levels.iter().enumerate() {
        let wet = wet_mask(&dem, level);
        let mut valid = MaskGrid::filled(dem.geo, true);
        if i == 1 {
            for r in 12..18 {
                for c in 0..spec.cols {
                    valid.set(r, c, false);
                }
            }
        }
        let wet_file = format!("wet_{i:03}.asc");
        let valid_file = format!("valid_{i:03}.asc");
        write_mask_grid(&wet, out.join("obs").join(&wet_file)).expect("writing wet mask");
        write_mask_grid(&valid, out.join("obs").join(&valid_file)).expect("writing valid mask");
        manifest_entries.push(format!(
            "    {{ \"gauge_level\": {level}, \"wet_file\": \"{wet_file}\", \
             \"valid_file\": \"{valid_file}\" }}"
        ));
    }
    let manifest = format!(
        "{{\n  \"snapshots\": [\n{}\n  ]\n}}\n",
        manifest_entries.join(",\n")
    );
    fs::write(out.join("obs/manifest.json"), manifest).expect("writing observation manifest");

    let truth = wet_mask(&dem, obs_levels[1]);
    write_mask_grid(&truth, out.join("truth.asc")).expect("writing truth raster");

    let inlet_elevation = spec.bed_elevation(0);
    let (gauge_x, gauge_y) = dem.geo.cell_center(spec.rows / 2, spec.cols / 2);
    let inflow_levels: Vec<String> = (1..=8)
        .map(|i| format!("{}", inlet_elevation + 0.25 * i as f64))
        .collect();
    let config = format!(
        r#"[paths]
dem = "dem.asc"
riverbed_mask = "mask.asc"
library_dir = "library"
threshold_dir = "thresholds"
observations_dir = "obs"
conditioned_dem = "dem_conditioned.asc"
forecast_dir = "forecast"

[terrain]
manning = 0.05
gauge_x = {gauge_x}
gauge_y = {gauge_y}
flow_axis = "row"
inlet_elevation = {inlet_elevation}
outlet_elevation = 0.0

[solver]
cfl_alpha = 0.5

[library]
inflow_levels = [{levels}]

[forecast]
seed = 42
"#,
        levels = inflow_levels.join(", ")
    );
    fs::write(out.join("config.toml"), config).expect("writing config");

    println!(
        "demo dataset in {}: {}x{} valley, {} snapshots, config.toml ready",
        out.display(),
        spec.rows,
        spec.cols,
        obs_levels.len()
    );
}
