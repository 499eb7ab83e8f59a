//! Risk-map rendering: the three risk tiers tinted over a hillshaded DEM,
//! with an optional ground-truth outline for side-by-side comparisons.

use std::path::Path;

use anyhow::{bail, Context, Result};
use flood_core::raster::{Grid, MaskGrid};
use flood_core::risk::RiskMap;
use image::{Rgb, RgbImage};

/// Tier tints, blended over the hillshade at [`TINT_OPACITY`].
pub const SOME_COLOR: [u8; 3] = [255, 221, 92];
pub const HIGHER_COLOR: [u8; 3] = [250, 146, 52];
pub const HIGHEST_COLOR: [u8; 3] = [214, 40, 40];
/// Ground-truth outline color.
pub const TRUTH_COLOR: [u8; 3] = [38, 92, 255];
/// Cells outside the model domain.
pub const NODATA_COLOR: [u8; 3] = [48, 48, 52];
pub const TINT_OPACITY: f64 = 0.55;

/// Sun direction for the hillshade (degrees).
const SUN_AZIMUTH_DEG: f64 = 315.0;
const SUN_ALTITUDE_DEG: f64 = 45.0;

/// Horn's method on the 3×3 neighborhood, clamping off-grid and nodata
/// neighbors to the center cell. Returns brightness in [0, 1].
fn hillshade(dem: &Grid, row: usize, col: usize) -> f64 {
    let center = dem.get(row, col);
    let sample = |dr: isize, dc: isize| -> f64 {
        let r = row as isize + dr;
        let c = col as isize + dc;
        if r < 0 || c < 0 || r as usize >= dem.geo.rows || c as usize >= dem.geo.cols {
            return center;
        }
        let (r, c) = (r as usize, c as usize);
        if dem.is_nodata(r, c) {
            center
        } else {
            dem.get(r, c)
        }
    };
    let cell = dem.geo.cell_size;
    let dzdx = ((sample(-1, 1) + 2.0 * sample(0, 1) + sample(1, 1))
        - (sample(-1, -1) + 2.0 * sample(0, -1) + sample(1, -1)))
        / (8.0 * cell);
    let dzdy = ((sample(1, -1) + 2.0 * sample(1, 0) + sample(1, 1))
        - (sample(-1, -1) + 2.0 * sample(-1, 0) + sample(-1, 1)))
        / (8.0 * cell);
    let zenith = (90.0 - SUN_ALTITUDE_DEG).to_radians();
    let azimuth = (360.0 - SUN_AZIMUTH_DEG + 90.0).to_radians();
    let slope = (dzdx * dzdx + dzdy * dzdy).sqrt().atan();
    let aspect = if dzdx != 0.0 || dzdy != 0.0 {
        dzdy.atan2(-dzdx)
    } else {
        0.0
    };
    (zenith.cos() * slope.cos() + zenith.sin() * slope.sin() * (azimuth - aspect).cos()).max(0.0)
}

fn blend(base: [u8; 3], tint: [u8; 3], opacity: f64) -> [u8; 3] {
    let mut out = [0u8; 3];
    for i in 0..3 {
        let v = base[i] as f64 * (1.0 - opacity) + tint[i] as f64 * opacity;
        out[i] = v.round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// True when a wet cell touches a dry (or off-grid) 4-neighbor.
fn is_boundary(mask: &MaskGrid, row: usize, col: usize) -> bool {
    if !mask.get(row, col) {
        return false;
    }
    let neighbors = [
        (row.wrapping_sub(1), col),
        (row + 1, col),
        (row, col.wrapping_sub(1)),
        (row, col + 1),
    ];
    neighbors.iter().any(|&(r, c)| {
        r >= mask.geo.rows || c >= mask.geo.cols || !mask.get(r, c)
    })
}

/// Compose the image: grayscale hillshade, tier tints from widest to
/// narrowest so the highest tier paints last, then the truth outline.
pub fn render_risk(dem: &Grid, risk: &RiskMap, truth: Option<&MaskGrid>) -> Result<RgbImage> {
    let geo = dem.geo;
    if geo != risk.some.geo {
        bail!(
            "risk map geometry {}×{} does not match DEM {}×{}",
            risk.some.geo.rows,
            risk.some.geo.cols,
            geo.rows,
            geo.cols
        );
    }
    if let Some(t) = truth {
        if geo != t.geo {
            bail!("truth mask geometry does not match DEM");
        }
    }
    let mut img = RgbImage::new(geo.cols as u32, geo.rows as u32);
    for r in 0..geo.rows {
        for c in 0..geo.cols {
            let pixel = if dem.is_nodata(r, c) {
                NODATA_COLOR
            } else {
                let shade = (55.0 + 200.0 * hillshade(dem, r, c)).round() as u8;
                let mut color = [shade, shade, shade];
                if risk.some.get(r, c) {
                    color = blend(color, SOME_COLOR, TINT_OPACITY);
                }
                if risk.higher.get(r, c) {
                    color = blend(color, HIGHER_COLOR, TINT_OPACITY);
                }
                if risk.highest.get(r, c) {
                    color = blend(color, HIGHEST_COLOR, TINT_OPACITY);
                }
                color
            };
            let pixel = match truth {
                Some(t) if is_boundary(t, r, c) => TRUTH_COLOR,
                _ => pixel,
            };
            img.put_pixel(c as u32, r as u32, Rgb(pixel));
        }
    }
    Ok(img)
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path)
        .with_context(|| format!("writing image {}", path.display()))
}
