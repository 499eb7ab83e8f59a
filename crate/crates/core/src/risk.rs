//! Monte-Carlo risk mapping: perturb a forecast gauge level, turn the
//! resulting library extents into a per-cell inundation probability,
//! discretize to three nested risk tiers, and fuse with the threshold
//! model's masks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::library::SteadyLibrary;
use crate::raster::{Grid, MaskGrid, RasterError, DEFAULT_NODATA};
use crate::threshold::Prediction;

pub const DEFAULT_SIGMA: f64 = 0.25;
pub const DEFAULT_N_SAMPLES: usize = 100;
pub const DEFAULT_WET_DEPTH: f64 = 0.05;
pub const DEFAULT_P_SOME: f64 = 0.05;
pub const DEFAULT_P_HIGHER: f64 = 0.5;
pub const DEFAULT_P_HIGHEST: f64 = 0.95;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("invalid forecast input: {0}")]
    InvalidInput(String),
    #[error(
        "risk tier probabilities must satisfy 0 < some ≤ higher ≤ highest ≤ 1, \
         got ({some}, {higher}, {highest})"
    )]
    InvalidThresholds {
        some: f64,
        higher: f64,
        highest: f64,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// A gauge forecast plus the Monte-Carlo noise model applied to it.
#[derive(Debug, Clone, Copy)]
pub struct ForecastInput {
    pub level: f64,
    pub sigma: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl ForecastInput {
    pub fn new(level: f64, seed: u64) -> Self {
        Self {
            level,
            sigma: DEFAULT_SIGMA,
            n_samples: DEFAULT_N_SAMPLES,
            seed,
        }
    }

    fn validate(&self) -> Result<(), RiskError> {
        if !self.level.is_finite() {
            return Err(RiskError::InvalidInput(format!(
                "forecast level must be finite, got {}",
                self.level
            )));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(RiskError::InvalidInput(format!(
                "sigma must be finite and ≥ 0, got {}",
                self.sigma
            )));
        }
        if self.n_samples == 0 {
            return Err(RiskError::InvalidInput(
                "n_samples must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Three nested risk tiers plus the underlying inundation probability.
#[derive(Debug, Clone)]
pub struct RiskMap {
    pub some: MaskGrid,
    pub higher: MaskGrid,
    pub highest: MaskGrid,
    pub probability: Grid,
}

/// Draw the perturbed gauge levels: `n_samples` values from
/// Normal(level, sigma²) using a ChaCha8 generator seeded with `seed`.
/// `sigma = 0` yields exact copies of the forecast level.
pub fn sample_levels(fc: &ForecastInput) -> Result<Vec<f64>, RiskError> {
    fc.validate()?;
    let normal = Normal::new(fc.level, fc.sigma)
        .map_err(|e| RiskError::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(fc.seed);
    Ok((0..fc.n_samples).map(|_| normal.sample(&mut rng)).collect())
}

/// Per-cell fraction of samples whose library extent wets the cell.
/// Wet counts are accumulated as integers and divided once, so the result
/// is independent of sample order. Nodata cells in the library depth grids
/// stay nodata.
pub fn probability_map(library: &SteadyLibrary, levels: &[f64], wet_depth: f64) -> Grid {
    assert!(
        !library.entries.is_empty(),
        "probability_map needs a nonempty library"
    );
    assert!(!levels.is_empty(), "probability_map needs at least one sample");
    assert!(wet_depth > 0.0, "wet_depth must be positive");
    let mut hits = vec![0u64; library.entries.len()];
    for &level in levels {
        hits[library.query_index(level)] += 1;
    }
    let geo = library.entries[0].depth.geo;
    let mut wet_counts = vec![0u64; geo.len()];
    let mut nodata = vec![false; geo.len()];
    for (entry, &n) in library.entries.iter().zip(&hits) {
        for r in 0..geo.rows {
            for c in 0..geo.cols {
                let i = geo.index(r, c);
                if entry.depth.is_nodata(r, c) {
                    nodata[i] = true;
                } else if n > 0 && entry.depth.get(r, c) >= wet_depth {
                    wet_counts[i] += n;
                }
            }
        }
    }
    let total = levels.len() as f64;
    let mut prob = Grid::filled(geo, 0.0, DEFAULT_NODATA);
    for r in 0..geo.rows {
        for c in 0..geo.cols {
            let i = geo.index(r, c);
            let v = if nodata[i] {
                DEFAULT_NODATA
            } else {
                wet_counts[i] as f64 / total
            };
            prob.set(r, c, v);
        }
    }
    prob
}

/// Threshold the probability grid into three nested masks. Requires
/// `0 < p_some ≤ p_higher ≤ p_highest ≤ 1`.
pub fn discretize(
    prob: &Grid,
    p_some: f64,
    p_higher: f64,
    p_highest: f64,
) -> Result<RiskMap, RiskError> {
    let ordered = p_some > 0.0 && p_some <= p_higher && p_higher <= p_highest && p_highest <= 1.0;
    if !ordered {
        return Err(RiskError::InvalidThresholds {
            some: p_some,
            higher: p_higher,
            highest: p_highest,
        });
    }
    let geo = prob.geo;
    let mut some = MaskGrid::filled(geo, false);
    let mut higher = MaskGrid::filled(geo, false);
    let mut highest = MaskGrid::filled(geo, false);
    for (r, c, p) in prob.iter_valid() {
        some.set(r, c, p >= p_some);
        higher.set(r, c, p >= p_higher);
        highest.set(r, c, p >= p_highest);
    }
    Ok(RiskMap {
        some,
        higher,
        highest,
        probability: prob.clone(),
    })
}

/// Combine the simulation-based map with the threshold model's masks:
/// the final some-tier is the union of the two some regions, the final
/// highest-tier the intersection of the two highest regions, and the middle
/// tier is clipped back into that envelope to keep the tiers nested. The
/// probability grid passes through from the simulation unchanged.
pub fn fuse(sim: &RiskMap, model: &Prediction) -> Result<RiskMap, RiskError> {
    let some = sim.some.union(&model.some)?;
    let highest = sim.highest.intersect(&model.highest)?;
    let higher = sim.higher.union(&highest)?.intersect(&some)?;
    Ok(RiskMap {
        some,
        higher,
        highest,
        probability: sim.probability.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::LibraryEntry;
    use crate::raster::GeoTransform;

    fn assert_nested(map: &RiskMap) {
        assert!(map.highest.is_subset_of(&map.higher));
        assert!(map.higher.is_subset_of(&map.some));
    }

    fn fc(level: f64, sigma: f64, n: usize) -> ForecastInput {
        ForecastInput {
            level,
            sigma,
            n_samples: n,
            seed: 42,
        }
    }

    /// A 1×3 library with two entries: the low entry wets cell 0 only, the
    /// high entry wets cells 0 and 1; cell 2 stays dry in both.
    fn toy_library() -> SteadyLibrary {
        let geo = GeoTransform::new(0.0, 0.0, 10.0, 1, 3).unwrap();
        let low = Grid::new(geo, vec![0.5, 0.0, 0.0], DEFAULT_NODATA).unwrap();
        let high = Grid::new(geo, vec![0.8, 0.5, 0.0], DEFAULT_NODATA).unwrap();
        SteadyLibrary {
            terrain_fingerprint: "toy".into(),
            entries: vec![
                LibraryEntry {
                    inflow_level: 1.0,
                    gauge_level: 1.0,
                    depth: low,
                    steps: 1,
                    mass_error: 0.0,
                },
                LibraryEntry {
                    inflow_level: 2.0,
                    gauge_level: 2.0,
                    depth: high,
                    steps: 1,
                    mass_error: 0.0,
                },
            ],
        }
    }

    #[test]
    fn zero_sigma_copies_the_level() {
        let levels = sample_levels(&fc(10.0, 0.0, 5)).unwrap();
        assert_eq!(levels, vec![10.0; 5]);
    }

    #[test]
    fn fixed_seed_reproduces_the_sequence() {
        let a = sample_levels(&fc(3.0, 0.4, 64)).unwrap();
        let b = sample_levels(&fc(3.0, 0.4, 64)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let other_seed = sample_levels(&ForecastInput {
            seed: 43,
            ..fc(3.0, 0.4, 64)
        })
        .unwrap();
        assert_ne!(a, other_seed);
    }

    #[test]
    fn samples_match_the_normal_moments() {
        let n = 100_000;
        let levels = sample_levels(&fc(3.0, 0.5, n)).unwrap();
        let mean = levels.iter().sum::<f64>() / n as f64;
        let var = levels.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 3.0).abs() < 0.01, "sample mean {mean}");
        let std = var.sqrt();
        assert!((std - 0.5).abs() < 0.01, "sample std {std}");
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(sample_levels(&fc(f64::NAN, 0.1, 5)).is_err());
        assert!(sample_levels(&fc(1.0, -0.1, 5)).is_err());
        assert!(sample_levels(&fc(1.0, 0.1, 0)).is_err());
    }

    #[test]
    fn single_sample_probability_is_the_wet_mask() {
        let lib = toy_library();
        let prob = probability_map(&lib, &[2.0], 0.05);
        assert_eq!(prob.get(0, 0), 1.0);
        assert_eq!(prob.get(0, 1), 1.0);
        assert_eq!(prob.get(0, 2), 0.0);
    }

    #[test]
    fn split_samples_average_the_extents() {
        let lib = toy_library();
        let prob = probability_map(&lib, &[1.0, 2.0], 0.05);
        assert_eq!(prob.get(0, 0), 1.0);
        assert_eq!(prob.get(0, 1), 0.5);
        assert_eq!(prob.get(0, 2), 0.0);
    }

    #[test]
    fn repeated_entry_probability_is_exactly_one() {
        let lib = toy_library();
        let prob = probability_map(&lib, &[1.0, 1.0, 1.0], 0.05);
        assert_eq!(prob.get(0, 0).to_bits(), 1.0f64.to_bits());
    }

    #[test]
    fn nodata_cells_stay_nodata() {
        let geo = GeoTransform::new(0.0, 0.0, 10.0, 1, 2).unwrap();
        let depth = Grid::new(geo, vec![0.5, DEFAULT_NODATA], DEFAULT_NODATA).unwrap();
        let lib = SteadyLibrary {
            terrain_fingerprint: "toy".into(),
            entries: vec![LibraryEntry {
                inflow_level: 1.0,
                gauge_level: 1.0,
                depth,
                steps: 1,
                mass_error: 0.0,
            }],
        };
        let prob = probability_map(&lib, &[1.0], 0.05);
        assert!(prob.is_nodata(0, 1));
        assert_eq!(prob.get(0, 0), 1.0);
    }

    #[test]
    fn discretize_thresholds_each_tier() {
        let geo = GeoTransform::new(0.0, 0.0, 10.0, 1, 3).unwrap();
        let prob = Grid::new(geo, vec![0.2, 0.6, 0.95], DEFAULT_NODATA).unwrap();
        let map = discretize(&prob, 0.1, 0.5, 0.9).unwrap();
        assert_eq!(map.some.count(), 3);
        assert_eq!(map.higher.count(), 2);
        assert_eq!(map.highest.count(), 1);
        assert!(map.highest.get(0, 2));
        assert!(!map.higher.get(0, 0));
        assert_nested(&map);
    }

    #[test]
    fn discretize_handles_all_zero_and_all_one() {
        let geo = GeoTransform::new(0.0, 0.0, 10.0, 1, 4).unwrap();
        let zeros = Grid::filled(geo, 0.0, DEFAULT_NODATA);
        let map = discretize(&zeros, 0.05, 0.5, 0.95).unwrap();
        assert!(!map.some.any());
        assert!(!map.highest.any());
        let ones = Grid::filled(geo, 1.0, DEFAULT_NODATA);
        let map = discretize(&ones, 0.05, 0.5, 0.95).unwrap();
        assert_eq!(map.some.count(), 4);
        assert_eq!(map.higher.count(), 4);
        assert_eq!(map.highest.count(), 4);
    }

    #[test]
    fn unordered_tier_probabilities_are_rejected() {
        let geo = GeoTransform::new(0.0, 0.0, 10.0, 1, 1).unwrap();
        let prob = Grid::filled(geo, 0.5, DEFAULT_NODATA);
        assert!(discretize(&prob, 0.5, 0.1, 0.9).is_err());
        assert!(discretize(&prob, 0.0, 0.5, 0.9).is_err());
        assert!(discretize(&prob, 0.1, 0.5, 1.1).is_err());
    }

    fn mask_of(geo: GeoTransform, cells: &[usize]) -> MaskGrid {
        let mut m = MaskGrid::filled(geo, false);
        for &c in cells {
            m.set(0, c, true);
        }
        m
    }

    #[test]
    fn fuse_follows_the_set_algebra() {
        let geo = GeoTransform::new(0.0, 0.0, 10.0, 1, 3).unwrap();
        let sim = RiskMap {
            some: mask_of(geo, &[0, 1]),
            higher: mask_of(geo, &[0, 1]),
            highest: mask_of(geo, &[0]),
            probability: Grid::filled(geo, 0.5, DEFAULT_NODATA),
        };
        let model = Prediction {
            some: mask_of(geo, &[1, 2]),
            highest: mask_of(geo, &[0, 1]),
        };
        let fused = fuse(&sim, &model).unwrap();
        assert_eq!(fused.some.iter_set().collect::<Vec<_>>(), vec![(0, 0), (0, 1), (0, 2)]);
        assert_eq!(fused.highest.iter_set().collect::<Vec<_>>(), vec![(0, 0)]);
        assert_nested(&fused);
        assert!(fused.probability.bit_eq(&sim.probability));
    }

    #[test]
    fn fuse_identities_for_empty_and_full_model_masks() {
        let geo = GeoTransform::new(0.0, 0.0, 10.0, 1, 3).unwrap();
        let sim = RiskMap {
            some: mask_of(geo, &[0, 1]),
            higher: mask_of(geo, &[0]),
            highest: mask_of(geo, &[0]),
            probability: Grid::filled(geo, 0.5, DEFAULT_NODATA),
        };
        let empty = Prediction {
            some: MaskGrid::filled(geo, false),
            highest: MaskGrid::filled(geo, false),
        };
        let fused = fuse(&sim, &empty).unwrap();
        assert_eq!(fused.some.values(), sim.some.values());
        assert!(!fused.highest.any());
        assert_nested(&fused);
        let full = Prediction {
            some: MaskGrid::filled(geo, true),
            highest: MaskGrid::filled(geo, true),
        };
        let fused = fuse(&sim, &full).unwrap();
        assert_eq!(fused.some.count(), 3);
        assert_eq!(fused.highest.values(), sim.highest.values());
        assert_nested(&fused);
    }

    #[test]
    fn fusion_grows_some_and_shrinks_highest() {
        let geo = GeoTransform::new(0.0, 0.0, 10.0, 1, 3).unwrap();
        let sim = RiskMap {
            some: mask_of(geo, &[0]),
            higher: mask_of(geo, &[0]),
            highest: mask_of(geo, &[0]),
            probability: Grid::filled(geo, 1.0, DEFAULT_NODATA),
        };
        let model = Prediction {
            some: mask_of(geo, &[1, 2]),
            highest: mask_of(geo, &[1]),
        };
        let fused = fuse(&sim, &model).unwrap();
        assert!(fused.some.count() >= sim.some.count());
        assert!(fused.highest.count() <= sim.highest.count());
        assert_nested(&fused);
    }
}
