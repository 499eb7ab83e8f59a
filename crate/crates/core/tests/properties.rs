//! Property-based tests for the structural invariants: raster round-trips,
//! coordinate mapping, threshold nesting and monotonicity, library query
//! monotonicity, fusion set algebra, and metric bounds.

use flood_core::eval::evaluate;
use flood_core::library::{LibraryEntry, SteadyLibrary};
use flood_core::raster::{
    read_ascii_grid, write_ascii_grid, GeoTransform, Grid, MaskGrid, DEFAULT_NODATA,
};
use flood_core::risk::{discretize, fuse, RiskMap};
use flood_core::solver::{stable_dt, SolverParams};
use flood_core::terrain::{flatten_riverbed, FlowAxis};
use flood_core::threshold::{fit_thresholds, ObservationStack, Prediction};
use proptest::prelude::*;

fn geo_strategy() -> impl Strategy<Value = GeoTransform> {
    (
        1usize..6,
        1usize..6,
        prop_oneof![Just(1.0), Just(10.0), Just(25.0)],
        -100.0..100.0f64,
        -100.0..100.0f64,
    )
        .prop_map(|(rows, cols, cell, ox, oy)| GeoTransform::new(ox, oy, cell, rows, cols).unwrap())
}

fn grid_strategy() -> impl Strategy<Value = Grid> {
    geo_strategy().prop_flat_map(|geo| {
        proptest::collection::vec(
            prop_oneof![4 => -1e6..1e6f64, 1 => Just(DEFAULT_NODATA)],
            geo.len(),
        )
        .prop_map(move |values| Grid::new(geo, values, DEFAULT_NODATA).unwrap())
    })
}

/// Per-pixel wet/dry history for a 1×1 stack.
fn history_strategy() -> impl Strategy<Value = Vec<(f64, bool, bool)>> {
    proptest::collection::vec((-10.0..10.0f64, any::<bool>(), any::<bool>()), 1..8)
}

fn stack_from(history: &[(f64, bool, bool)]) -> ObservationStack {
    let geo = GeoTransform::new(0.0, 0.0, 10.0, 1, 1).unwrap();
    let mut obs = ObservationStack::new(geo);
    for &(level, wet, valid) in history {
        let mut wet_mask = MaskGrid::filled(geo, false);
        wet_mask.set(0, 0, wet);
        let mut valid_mask = MaskGrid::filled(geo, false);
        valid_mask.set(0, 0, valid);
        obs.push(level, wet_mask, valid_mask).unwrap();
    }
    obs
}

fn library_from(gauges: &[f64]) -> SteadyLibrary {
    let geo = GeoTransform::new(0.0, 0.0, 10.0, 1, 1).unwrap();
    SteadyLibrary {
        terrain_fingerprint: "prop".into(),
        entries: gauges
            .iter()
            .map(|&g| LibraryEntry {
                inflow_level: g,
                gauge_level: g,
                depth: Grid::filled(geo, 0.0, DEFAULT_NODATA),
                steps: 1,
                mass_error: 0.0,
            })
            .collect(),
    }
}

proptest! {
    #[test]
    fn ascii_grid_round_trips_bitwise(grid in grid_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.asc");
        write_ascii_grid(&grid, &path).unwrap();
        let back = read_ascii_grid(&path).unwrap();
        prop_assert!(back.bit_eq(&grid));
    }

    #[test]
    fn cell_centers_map_back_to_their_cell(geo in geo_strategy()) {
        for r in 0..geo.rows {
            for c in 0..geo.cols {
                let (x, y) = geo.cell_center(r, c);
                prop_assert_eq!(geo.world_to_cell(x, y), Some((r, c)));
            }
        }
    }

    #[test]
    fn interior_points_land_in_a_covering_cell(
        geo in geo_strategy(),
        u in 0.0..0.999f64,
        v in 0.0..0.999f64,
    ) {
        let x = geo.origin_x + u * geo.cell_size * geo.cols as f64;
        let y = geo.origin_y + v * geo.cell_size * geo.rows as f64;
        let (r, c) = geo.world_to_cell(x, y).expect("interior point must map");
        let x0 = geo.origin_x + c as f64 * geo.cell_size;
        let y0 = geo.origin_y + (geo.rows - 1 - r) as f64 * geo.cell_size;
        prop_assert!(x0 <= x && x < x0 + geo.cell_size);
        prop_assert!(y0 <= y && y < y0 + geo.cell_size);
    }

    #[test]
    fn flatten_is_idempotent(
        dem in grid_strategy(),
        mask_bits in proptest::collection::vec(any::<bool>(), 25),
        inlet in -5.0..5.0f64,
        drop in 0.0..5.0f64,
        axis in prop_oneof![Just(FlowAxis::Row), Just(FlowAxis::Col)],
    ) {
        let geo = dem.geo;
        let mut values: Vec<bool> = mask_bits.into_iter().take(geo.len()).collect();
        values.resize(geo.len(), false);
        values[0] = true;
        let mask = MaskGrid::new(geo, values).unwrap();
        let once = flatten_riverbed(&dem, &mask, inlet, inlet - drop, axis).unwrap();
        let twice = flatten_riverbed(&once, &mask, inlet, inlet - drop, axis).unwrap();
        prop_assert!(twice.bit_eq(&once));
    }

    #[test]
    fn thresholds_stay_ordered_and_predictions_nest(
        history in history_strategy(),
        level_a in -12.0..12.0f64,
        level_b in -12.0..12.0f64,
    ) {
        let field = fit_thresholds(&stack_from(&history)).unwrap();
        prop_assert!(field.t_recall.get(0, 0) <= field.t_precision.get(0, 0));
        let (lo, hi) = if level_a <= level_b {
            (level_a, level_b)
        } else {
            (level_b, level_a)
        };
        let p_lo = field.predict(lo);
        let p_hi = field.predict(hi);
        prop_assert!(p_lo.highest.is_subset_of(&p_lo.some));
        prop_assert!(p_hi.highest.is_subset_of(&p_hi.some));
        prop_assert!(p_lo.some.is_subset_of(&p_hi.some));
        prop_assert!(p_lo.highest.is_subset_of(&p_hi.highest));
    }

    #[test]
    fn fit_ignores_snapshot_order(history in history_strategy(), rotate in 0usize..8) {
        let field = fit_thresholds(&stack_from(&history)).unwrap();
        let mut reordered = history.clone();
        reordered.reverse();
        let pivot = rotate % reordered.len().max(1);
        reordered.rotate_left(pivot);
        let other = fit_thresholds(&stack_from(&reordered)).unwrap();
        prop_assert!(field.t_recall.bit_eq(&other.t_recall));
        prop_assert!(field.t_precision.bit_eq(&other.t_precision));
    }

    #[test]
    fn library_query_selection_is_monotone(
        raw_gauges in proptest::collection::vec(-100.0..100.0f64, 1..10),
        level_a in -120.0..120.0f64,
        level_b in -120.0..120.0f64,
    ) {
        let mut gauges = raw_gauges;
        gauges.sort_by(f64::total_cmp);
        gauges.dedup_by(|next, prev| *next - *prev < 1e-6);
        let lib = library_from(&gauges);
        let (lo, hi) = if level_a <= level_b {
            (level_a, level_b)
        } else {
            (level_b, level_a)
        };
        prop_assert!(lib.query(lo).gauge_level <= lib.query(hi).gauge_level);
    }

    #[test]
    fn discretize_always_nests(
        probs in proptest::collection::vec(0.0..=1.0f64, 12),
        raw in proptest::collection::vec(0.01..=1.0f64, 3),
    ) {
        let geo = GeoTransform::new(0.0, 0.0, 10.0, 3, 4).unwrap();
        let grid = Grid::new(geo, probs, DEFAULT_NODATA).unwrap();
        let mut ps = raw;
        ps.sort_by(f64::total_cmp);
        let map = discretize(&grid, ps[0], ps[1], ps[2]).unwrap();
        prop_assert!(map.highest.is_subset_of(&map.higher));
        prop_assert!(map.higher.is_subset_of(&map.some));
    }

    #[test]
    fn fuse_nests_grows_some_and_shrinks_highest(
        geo in geo_strategy(),
        all_bits in proptest::collection::vec(any::<bool>(), 250),
    ) {
        let take = |part: usize| {
            let mut values: Vec<bool> = all_bits
                .iter()
                .copied()
                .skip(part * geo.len())
                .take(geo.len())
                .collect();
            values.resize(geo.len(), false);
            MaskGrid::new(geo, values).unwrap()
        };
        let (a, b, c, m_some, m_highest) = (take(0), take(1), take(2), take(3), take(4));
        let some = a;
        let higher = some.intersect(&b).unwrap();
        let highest = higher.intersect(&c).unwrap();
        let sim = RiskMap {
            some: some.clone(),
            higher,
            highest: highest.clone(),
            probability: Grid::filled(geo, 0.0, DEFAULT_NODATA),
        };
        let model = Prediction { some: m_some.clone(), highest: m_highest.clone() };
        let fused = fuse(&sim, &model).unwrap();
        prop_assert!(fused.highest.is_subset_of(&fused.higher));
        prop_assert!(fused.higher.is_subset_of(&fused.some));
        prop_assert!(sim.some.is_subset_of(&fused.some));
        prop_assert!(fused.highest.is_subset_of(&sim.highest));

        // Enlarging the model masks never shrinks the fused regions.
        let bigger = Prediction {
            some: m_some.union(&sim.higher).unwrap(),
            highest: m_highest.union(&some).unwrap(),
        };
        let fused_bigger = fuse(&sim, &bigger).unwrap();
        prop_assert!(fused.some.is_subset_of(&fused_bigger.some));
        prop_assert!(fused.highest.is_subset_of(&fused_bigger.highest));
    }

    #[test]
    fn risk_area_ratio_is_at_least_one_under_nesting(
        geo in geo_strategy(),
        bits in proptest::collection::vec(any::<bool>(), 50),
        truth_bits in proptest::collection::vec(any::<bool>(), 50),
    ) {
        let take = |bits: &[bool]| {
            let mut values: Vec<bool> = bits.iter().copied().take(geo.len()).collect();
            values.resize(geo.len(), false);
            MaskGrid::new(geo, values).unwrap()
        };
        let some = take(&bits);
        let highest = take(&truth_bits).intersect(&some).unwrap();
        let risk = RiskMap {
            some: some.clone(),
            higher: some.clone(),
            highest,
            probability: Grid::filled(geo, 0.0, DEFAULT_NODATA),
        };
        let truth = take(&truth_bits);
        let report = evaluate(&risk, &truth, &MaskGrid::filled(geo, true)).unwrap();
        if let Some(rar) = report.rar {
            prop_assert!(rar >= 1.0);
        }
        if let Some(srr) = report.srr {
            prop_assert!((0.0..=1.0).contains(&srr));
        }
        if let Some(hrp) = report.hrp {
            prop_assert!((0.0..=1.0).contains(&hrp));
        }
    }

    #[test]
    fn stable_dt_is_positive_and_capped(
        h_max in 0.0..100.0f64,
        cell in 0.1..1000.0f64,
        alpha in 0.05..1.0f64,
    ) {
        let params = SolverParams {
            cfl_alpha: alpha,
            ..SolverParams::default()
        };
        let dt = stable_dt(&params, cell, h_max);
        prop_assert!(dt > 0.0);
        prop_assert!(dt <= params.max_dt);
    }
}
