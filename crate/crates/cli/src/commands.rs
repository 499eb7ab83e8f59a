//! One function per subcommand, composing the core modules. All multi-file
//! outputs are staged in a hidden sibling directory and promoted with a
//! final rename so interrupted runs never leave half-written results.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use flood_core::eval::{aggregate, evaluate, EvalReport};
use flood_core::library::{build_library, SteadyLibrary};
use flood_core::raster::{
    read_ascii_grid, read_mask_grid, write_ascii_grid, write_mask_grid, Grid, MaskGrid,
};
use flood_core::risk::{discretize, fuse, probability_map, sample_levels, ForecastInput, RiskMap};
use flood_core::terrain::{flatten_riverbed, locate_gauge, mask_line_cells, Manning, TerrainModel};
use flood_core::threshold::{fit_thresholds, ObservationStack, ThresholdField};
use serde::{Deserialize, Serialize};

use crate::config::{OutletMode, PipelineConfig};
use crate::render::{render_risk, save_png};

/// The conditioned model domain: terrain plus derived boundary cells.
pub struct ModelSetup {
    pub terrain: TerrainModel,
    pub inlet_cells: Vec<(usize, usize)>,
    pub outlet_cells: Vec<(usize, usize)>,
}

fn read_inputs(config: &PipelineConfig) -> Result<(Grid, MaskGrid)> {
    let dem = read_ascii_grid(&config.paths.dem)
        .with_context(|| format!("reading DEM {}", config.paths.dem.display()))?;
    let mask = read_mask_grid(&config.paths.riverbed_mask).with_context(|| {
        format!(
            "reading riverbed mask {}",
            config.paths.riverbed_mask.display()
        )
    })?;
    Ok((dem, mask))
}

fn manning_of(config: &PipelineConfig) -> Result<Manning> {
    match (&config.paths.manning_grid, config.terrain.manning) {
        (Some(path), _) => {
            let grid = read_ascii_grid(path)
                .with_context(|| format!("reading Manning grid {}", path.display()))?;
            Ok(Manning::Field(grid))
        }
        (None, Some(n)) => Ok(Manning::Uniform(n)),
        (None, None) => unreachable!("config validation requires a Manning source"),
    }
}

/// Flatten the riverbed, snap the gauge, and derive boundary cells: inlets
/// are the upstream masked line; outlets are either the whole downstream
/// grid edge or the downstream masked line, per `terrain.outlet_mode`.
pub fn prepare_model(config: &PipelineConfig) -> Result<ModelSetup> {
    let (dem, mask) = read_inputs(config)?;
    let axis = config.flow_axis()?;
    let conditioned = flatten_riverbed(
        &dem,
        &mask,
        config.terrain.inlet_elevation,
        config.terrain.outlet_elevation,
        axis,
    )?;
    let gauge_cell = locate_gauge(
        &conditioned.geo,
        config.terrain.gauge_x,
        config.terrain.gauge_y,
        &mask,
    )?;
    let inlet_cells = mask_line_cells(&mask, axis, true)?;
    let outlet_cells = match config.outlet_mode()? {
        OutletMode::RiverbedLine => mask_line_cells(&mask, axis, false)?,
        OutletMode::DownstreamEdge => {
            let geo = conditioned.geo;
            let line: Vec<(usize, usize)> = match axis {
                flood_core::terrain::FlowAxis::Row => {
                    (0..geo.cols).map(|c| (geo.rows - 1, c)).collect()
                }
                flood_core::terrain::FlowAxis::Col => {
                    (0..geo.rows).map(|r| (r, geo.cols - 1)).collect()
                }
            };
            line.into_iter()
                .filter(|&(r, c)| !conditioned.is_nodata(r, c))
                .collect()
        }
    };
    let terrain = TerrainModel::new(conditioned, mask, manning_of(config)?, gauge_cell)?;
    Ok(ModelSetup {
        terrain,
        inlet_cells,
        outlet_cells,
    })
}

/// Create an empty staging directory next to `target`.
fn staging_for(target: &Path) -> Result<PathBuf> {
    let name = target
        .file_name()
        .ok_or_else(|| anyhow!("output path {} has no final component", target.display()))?;
    let staging = target.with_file_name(format!(".{}.partial", name.to_string_lossy()));
    if staging.exists() {
        fs::remove_dir_all(&staging)
            .with_context(|| format!("clearing stale staging dir {}", staging.display()))?;
    }
    fs::create_dir_all(&staging)
        .with_context(|| format!("creating staging dir {}", staging.display()))?;
    Ok(staging)
}

/// Replace `target` with the fully-written staging directory.
fn promote(staging: &Path, target: &Path) -> Result<()> {
    if target.exists() {
        fs::remove_dir_all(target)
            .with_context(|| format!("removing previous output {}", target.display()))?;
    }
    fs::rename(staging, target).with_context(|| {
        format!(
            "promoting {} to {}",
            staging.display(),
            target.display()
        )
    })?;
    Ok(())
}

pub fn cmd_flatten(config: &PipelineConfig, out: Option<PathBuf>) -> Result<()> {
    let (dem, mask) = read_inputs(config)?;
    let axis = config.flow_axis()?;
    let conditioned = flatten_riverbed(
        &dem,
        &mask,
        config.terrain.inlet_elevation,
        config.terrain.outlet_elevation,
        axis,
    )?;
    let target = out
        .or_else(|| config.paths.conditioned_dem.clone())
        .ok_or_else(|| anyhow!("set paths.conditioned_dem in the config or pass --out"))?;
    let partial = target.with_file_name(format!(
        ".{}.partial",
        target
            .file_name()
            .ok_or_else(|| anyhow!("output path {} has no final component", target.display()))?
            .to_string_lossy()
    ));
    write_ascii_grid(&conditioned, &partial)?;
    fs::rename(&partial, &target)
        .with_context(|| format!("promoting {}", target.display()))?;
    println!(
        "flattened {} riverbed cells from {} down to {} -> {}",
        mask.count(),
        config.terrain.inlet_elevation,
        config.terrain.outlet_elevation,
        target.display()
    );
    Ok(())
}

pub fn cmd_build(config: &PipelineConfig, out: Option<PathBuf>) -> Result<()> {
    let setup = prepare_model(config)?;
    let library = build_library(
        &setup.terrain,
        config.solver_params(),
        &config.steady_criteria(),
        &setup.inlet_cells,
        &setup.outlet_cells,
        &config.library.inflow_levels,
    )?;
    for warning in library.wet_area_warnings(config.forecast.wet_depth) {
        eprintln!("warning: {warning}");
    }
    let target = out.unwrap_or_else(|| config.paths.library_dir.clone());
    let staging = staging_for(&target)?;
    library.save(&staging)?;
    let mut report = String::from("inflow_level gauge_level steps mass_error\n");
    for entry in &library.entries {
        report.push_str(&format!(
            "{} {} {} {}\n",
            entry.inflow_level, entry.gauge_level, entry.steps, entry.mass_error
        ));
    }
    fs::write(staging.join("build_report.txt"), report)
        .with_context(|| "writing build report")?;
    promote(&staging, &target)?;
    println!(
        "built {} steady entries (gauge levels {} .. {}) -> {}",
        library.entries.len(),
        library.entries.first().map(|e| e.gauge_level).unwrap_or(f64::NAN),
        library.entries.last().map(|e| e.gauge_level).unwrap_or(f64::NAN),
        target.display()
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ObsManifestEntry {
    gauge_level: f64,
    wet_file: String,
    valid_file: String,
}

#[derive(Serialize, Deserialize)]
struct ObsManifest {
    snapshots: Vec<ObsManifestEntry>,
}

/// Read an observation stack directory: `manifest.json` listing snapshots
/// plus one wet mask and one valid mask per snapshot.
pub fn load_observations(dir: &Path) -> Result<ObservationStack> {
    let path = dir.join("manifest.json");
    let body = fs::read_to_string(&path)
        .with_context(|| format!("reading observation manifest {}", path.display()))?;
    let manifest: ObsManifest = serde_json::from_str(&body)
        .with_context(|| format!("parsing observation manifest {}", path.display()))?;
    if manifest.snapshots.is_empty() {
        bail!("observation manifest {} lists no snapshots", path.display());
    }
    let first_wet = read_mask_grid(dir.join(&manifest.snapshots[0].wet_file))?;
    let mut stack = ObservationStack::new(first_wet.geo);
    for entry in &manifest.snapshots {
        let wet = read_mask_grid(dir.join(&entry.wet_file))?;
        let valid = read_mask_grid(dir.join(&entry.valid_file))?;
        stack.push(entry.gauge_level, wet, valid)?;
    }
    Ok(stack)
}

pub fn cmd_train(config: &PipelineConfig, out: Option<PathBuf>) -> Result<()> {
    let obs_dir = config
        .paths
        .observations_dir
        .as_ref()
        .ok_or_else(|| anyhow!("train requires paths.observations_dir in the config"))?;
    let stack = load_observations(obs_dir)?;
    let field = fit_thresholds(&stack)?;
    let target = out.unwrap_or_else(|| config.paths.threshold_dir.clone());
    let staging = staging_for(&target)?;
    field.save(&staging)?;
    promote(&staging, &target)?;
    println!(
        "trained thresholds from {} snapshots; {} of {} pixels observed -> {}",
        stack.snapshots.len(),
        field.coverage.count(),
        field.coverage.geo.len(),
        target.display()
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ForecastManifest {
    level: f64,
    sigma: f64,
    n_samples: usize,
    seed: u64,
    wet_depth: f64,
    p_some: f64,
    p_higher: f64,
    p_highest: f64,
    library_fingerprint: String,
    probability_file: String,
    some_file: String,
    higher_file: String,
    highest_file: String,
    image_file: String,
}

pub fn cmd_forecast(
    config: &PipelineConfig,
    level: f64,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let setup = prepare_model(config)?;
    let library = SteadyLibrary::load(&config.paths.library_dir)?;
    library.verify_terrain(&setup.terrain)?;
    let field = ThresholdField::load(&config.paths.threshold_dir)?;
    if field.t_recall.geo != setup.terrain.elevation.geo {
        bail!("threshold field geometry does not match the DEM");
    }
    let fc = ForecastInput {
        level,
        sigma: config.forecast.sigma,
        n_samples: config.forecast.n_samples,
        seed: seed.unwrap_or(config.forecast.seed),
    };
    let samples = sample_levels(&fc)?;
    let probability = probability_map(&library, &samples, config.forecast.wet_depth);
    let sim = discretize(
        &probability,
        config.forecast.p_some,
        config.forecast.p_higher,
        config.forecast.p_highest,
    )?;
    let model = field.predict(level);
    let fused = fuse(&sim, &model)?;
    let image = render_risk(&setup.terrain.elevation, &fused, None)?;

    let target = out
        .or_else(|| config.paths.forecast_dir.clone())
        .ok_or_else(|| anyhow!("set paths.forecast_dir in the config or pass --out"))?;
    let staging = staging_for(&target)?;
    write_ascii_grid(&fused.probability, staging.join("probability.asc"))?;
    write_mask_grid(&fused.some, staging.join("some.asc"))?;
    write_mask_grid(&fused.higher, staging.join("higher.asc"))?;
    write_mask_grid(&fused.highest, staging.join("highest.asc"))?;
    save_png(&image, &staging.join("risk.png"))?;
    let manifest = ForecastManifest {
        level,
        sigma: fc.sigma,
        n_samples: fc.n_samples,
        seed: fc.seed,
        wet_depth: config.forecast.wet_depth,
        p_some: config.forecast.p_some,
        p_higher: config.forecast.p_higher,
        p_highest: config.forecast.p_highest,
        library_fingerprint: library.terrain_fingerprint.clone(),
        probability_file: "probability.asc".into(),
        some_file: "some.asc".into(),
        higher_file: "higher.asc".into(),
        highest_file: "highest.asc".into(),
        image_file: "risk.png".into(),
    };
    let body = serde_json::to_string_pretty(&manifest)?;
    fs::write(staging.join("manifest.json"), body + "\n")
        .with_context(|| "writing forecast manifest")?;
    promote(&staging, &target)?;
    println!(
        "forecast at level {level}: some={} higher={} highest={} cells -> {}",
        fused.some.count(),
        fused.higher.count(),
        fused.highest.count(),
        target.display()
    );
    Ok(())
}

/// Read the masks and probability grid of a saved forecast.
pub fn load_forecast(dir: &Path) -> Result<RiskMap> {
    let path = dir.join("manifest.json");
    let body = fs::read_to_string(&path)
        .with_context(|| format!("reading forecast manifest {}", path.display()))?;
    let manifest: ForecastManifest = serde_json::from_str(&body)
        .with_context(|| format!("parsing forecast manifest {}", path.display()))?;
    Ok(RiskMap {
        some: read_mask_grid(dir.join(&manifest.some_file))?,
        higher: read_mask_grid(dir.join(&manifest.higher_file))?,
        highest: read_mask_grid(dir.join(&manifest.highest_file))?,
        probability: read_ascii_grid(dir.join(&manifest.probability_file))?,
    })
}

fn csv_metric(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn cmd_evaluate(
    config: &PipelineConfig,
    forecast_dirs: &[PathBuf],
    truths: &[PathBuf],
    truth_valids: &[PathBuf],
    out: Option<PathBuf>,
) -> Result<()> {
    if forecast_dirs.is_empty() {
        bail!("pass at least one --forecast-dir");
    }
    if forecast_dirs.len() != truths.len() {
        bail!(
            "{} forecast dirs but {} truth rasters; pass one --truth per --forecast-dir",
            forecast_dirs.len(),
            truths.len()
        );
    }
    if !truth_valids.is_empty() && truth_valids.len() != truths.len() {
        bail!("pass either no --truth-valid or one per --truth");
    }
    let default_out = || {
        config
            .paths
            .forecast_dir
            .as_ref()
            .and_then(|p| p.parent().map(Path::to_path_buf))
            .unwrap_or_else(|| PathBuf::from("."))
            .join("evaluation")
    };
    let target = out.unwrap_or_else(default_out);

    let mut reports: Vec<EvalReport> = Vec::new();
    for (i, (dir, truth_path)) in forecast_dirs.iter().zip(truths).enumerate() {
        let risk = load_forecast(dir)?;
        let truth = read_mask_grid(truth_path)
            .with_context(|| format!("reading truth raster {}", truth_path.display()))?;
        let valid = match truth_valids.get(i) {
            Some(path) => read_mask_grid(path)
                .with_context(|| format!("reading validity mask {}", path.display()))?,
            None => MaskGrid::filled(truth.geo, true),
        };
        reports.push(evaluate(&risk, &truth, &valid)?);
    }
    let summary = aggregate(&reports)?;

    let staging = staging_for(&target)?;
    let mut csv = String::from(
        "index,forecast_dir,truth,srr,hrp,rar,wet_total,some_hits,some_total,\
         highest_hits,highest_total,n_valid_pixels\n",
    );
    for (i, report) in reports.iter().enumerate() {
        let header = format!(
            "forecast_dir: {}\ntruth: {}\n",
            forecast_dirs[i].display(),
            truths[i].display()
        );
        fs::write(
            staging.join(format!("report_{i:03}.txt")),
            header + &report.key_value_lines(),
        )
        .with_context(|| "writing evaluation report")?;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            i,
            forecast_dirs[i].display(),
            truths[i].display(),
            csv_metric(report.srr),
            csv_metric(report.hrp),
            csv_metric(report.rar),
            report.wet_total,
            report.some_hits,
            report.some_total,
            report.highest_hits,
            report.highest_total,
            report.n_valid_pixels,
        ));
    }
    fs::write(staging.join("reports.csv"), csv).with_context(|| "writing reports.csv")?;
    fs::write(staging.join("aggregate.txt"), summary.key_value_lines())
        .with_context(|| "writing aggregate report")?;
    promote(&staging, &target)?;
    for (i, report) in reports.iter().enumerate() {
        println!(
            "event {i}: srr={} hrp={} rar={}",
            csv_metric(report.srr),
            csv_metric(report.hrp),
            csv_metric(report.rar)
        );
    }
    println!(
        "aggregate over {} events: srr={} hrp={} rar={} -> {}",
        summary.n_reports,
        csv_metric(summary.srr.mean),
        csv_metric(summary.hrp.mean),
        csv_metric(summary.rar.mean),
        target.display()
    );
    Ok(())
}

pub fn cmd_render(
    config: &PipelineConfig,
    forecast_dir: &Path,
    truth: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let setup = prepare_model(config)?;
    let risk = load_forecast(forecast_dir)?;
    let truth_mask = truth
        .map(|path| {
            read_mask_grid(&path)
                .with_context(|| format!("reading truth raster {}", path.display()))
        })
        .transpose()?;
    let image = render_risk(&setup.terrain.elevation, &risk, truth_mask.as_ref())?;
    let target = out.unwrap_or_else(|| forecast_dir.join("render.png"));
    save_png(&image, &target)?;
    println!("rendered {}", target.display());
    Ok(())
}
