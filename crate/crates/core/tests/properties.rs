use asi_nowcast::evaluation::{mae, rmse, skill_score};
use asi_nowcast::features::{make_windows, FeatureSeriesRow, HORIZONS, LOOKBACK};
use asi_nowcast::forecasters::{denormalize, normalize};
use asi_nowcast::imaging::{resample_plane, SkyGrid};
use asi_nowcast::segmentation::{nbr, saturation};
use asi_nowcast::solar::{clear_sky_ghi, daily_stats, ClearSkyModel, IrradianceSeries, SolarGeometry};
use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;

fn rows(n: usize, zenith: f64) -> Vec<FeatureSeriesRow> {
    let t0 = Utc.with_ymd_and_hms(2023, 6, 1, 8, 0, 0).unwrap();
    (0..n)
        .map(|i| FeatureSeriesRow {
            timestamp: t0 + Duration::seconds(10 * i as i64),
            cs_cam1: 0.2,
            cs_cam2: 0.3,
            cmv_u1: 0.0,
            cmv_v1: 0.0,
            cmv_u2: 0.0,
            cmv_v2: 0.0,
            median_cbh_m: 0.0,
            zenith_deg: zenith,
            azimuth_deg: 120.0,
            ghi_clear_wm2: 700.0,
        })
        .collect()
}

proptest! {
    #[test]
    fn color_indices_stay_in_range(r in 0.0f32..=1.0, g in 0.0f32..=1.0, b in 0.0f32..=1.0) {
        let s = saturation([r, g, b]);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
        let n = nbr([r, g, b]);
        prop_assert!((-1.0..=1.0).contains(&n));
    }

    #[test]
    fn clear_sky_is_bounded(z in -10.0f64..190.0) {
        let g = clear_sky_ghi(&SolarGeometry { zenith_deg: z, azimuth_deg: 0.0 }, &ClearSkyModel::default());
        prop_assert!((0.0..=1361.0).contains(&g));
    }

    #[test]
    fn daily_stats_nonnegative(k in prop::collection::vec(0.0f64..1.5, 2..200)) {
        let s = daily_stats(&k).unwrap();
        prop_assert!(s.mean_clearness >= 0.0 && s.mean_variability >= 0.0);
    }

    #[test]
    fn rmse_dominates_mae(p in prop::collection::vec(-500.0f64..500.0, 1..60)) {
        let t: Vec<f64> = p.iter().map(|v| v * 0.5 + 3.0).collect();
        prop_assert!(rmse(&p, &t).unwrap() + 1e-9 >= mae(&p, &t).unwrap());
        prop_assert_eq!(rmse(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn equal_errors_have_zero_skill(r in 1e-6f64..1e4) {
        prop_assert_eq!(skill_score(r, r), Some(0.0));
    }

    #[test]
    fn normalization_roundtrips(g in 0.0f64..1400.0) {
        prop_assert!((denormalize(normalize(g, 1361.0), 1361.0) - g).abs() < 1e-9);
    }

    #[test]
    fn contiguous_run_window_count(n in 0usize..400, zenith in 0.0f64..95.0) {
        let r = rows(n, zenith);
        let irr = IrradianceSeries::new(r.iter().map(|x| x.timestamp).collect(), vec![300.0; n]).unwrap();
        let got = make_windows(&r, &irr, 1361.0).unwrap().len();
        let expected = if 90.0 - zenith >= 10.0 { (n + 1).saturating_sub(LOOKBACK + HORIZONS) } else { 0 };
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn grid_position_roundtrip(size in 20usize..300, x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let g = SkyGrid::new(size, 80.0);
        let (px, py) = (x * size as f64, y * size as f64);
        let (qx, qy) = g.position_of(&g.dir_at(px, py));
        prop_assert!((px - qx).abs() < 1e-6 && (py - qy).abs() < 1e-6);
    }

    #[test]
    fn resampling_keeps_constants(v in 0.0f64..1.0, n in 8usize..64, k in 1usize..8) {
        let out_n = (n / k).max(1);
        let out = resample_plane(&vec![v; n * n], n, n, out_n, out_n);
        prop_assert!(out.iter().all(|o| (o - v).abs() < 1e-9));
    }
}
