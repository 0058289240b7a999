//! Independent-recomputation and generator-truth oracles.

mod common;

use asi_nowcast::evaluation::{
    evaluate, horizon_seconds, permutation_importance, pi_for_permutation, PiConfig, Predictor,
};
use asi_nowcast::features::{HORIZONS, METHOD_C_CHANNELS};
use asi_nowcast::forecasters::ForecastRecord;
use asi_nowcast::imaging::{calibrate_azimuth, FrameMeta, SkyGrid, SkyImage, SunObservation, SunPixel};
use asi_nowcast::motion::{cross_camera_filter, polynomial_expansion, CmvSample};
use asi_nowcast::nn::{train, Param, Tensor, TrainConfig, Trainable};
use asi_nowcast::segmentation::{
    modality, saturation, saturation_std, segment, segment_with_sun, Modality, SegThresholds, SegmentationConfig,
};
use asi_nowcast::solar::{daily_stats, solar_position, GeoLocation};
use asi_nowcast::stereo_cbh::{match_height, CbhSearch};
use asi_nowcast::synth::{benchmark_suite, truth, Camera, Regime, Scene, SceneSpec};
use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn ephemeris_matches_almanac_algorithm() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Utc.with_ymd_and_hms(1950, 1, 1, 0, 0, 0).unwrap().timestamp();
    let end = Utc.with_ymd_and_hms(2050, 1, 1, 0, 0, 0).unwrap().timestamp();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let t = Utc.timestamp_opt(rng.gen_range(start..end), 0).unwrap();
        let (lat, lon) = (rng.gen_range(-80.0..80.0), rng.gen_range(-180.0..180.0));
        let z = solar_position(t, &GeoLocation::new(lat, lon).unwrap()).zenith_deg;
        worst = worst.max((z - common::almanac_zenith(t, lat, lon)).abs());
    }
    assert!(worst < 0.05, "worst zenith difference {worst} deg");
}

#[test]
fn daily_stats_match_direct_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let k: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..1.2)).collect();
        let mut sum = 0.0;
        for v in &k {
            sum += v;
        }
        let mut sq = 0.0;
        for i in 1..k.len() {
            sq += (k[i] - k[i - 1]) * (k[i] - k[i - 1]);
        }
        let s = daily_stats(&k).unwrap();
        assert!((s.mean_clearness - sum / 100.0).abs() < 1e-12);
        assert!((s.mean_variability - (sq / 99.0).sqrt()).abs() < 1e-12);
    }
}

fn sun_track(rotation_deg: f64, seed: u64) -> Vec<SunObservation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..40)
        .map(|i| {
            let az = 60.0 + 6.0 * i as f64;
            let img_az = (az - rotation_deg).to_radians();
            let r = 300.0 + rng.gen_range(-50.0..50.0);
            SunObservation {
                sun: SunPixel {
                    x: 499.5 + r * img_az.sin(),
                    y: 499.5 - r * img_az.cos(),
                    count: 80,
                },
                ephemeris_azimuth_deg: az,
            }
        })
        .collect()
}

#[test]
fn azimuth_calibration_recovers_rotation() {
    let c = calibrate_azimuth(&sun_track(10.0, 3), 1000, 1000).unwrap();
    assert!((c.azimuth_correction_deg - 10.0).abs() < 0.1, "{c:?}");
    let z = calibrate_azimuth(&sun_track(0.0, 4), 1000, 1000).unwrap();
    assert!(z.azimuth_correction_deg.abs() < 0.1);
}

fn grid_image(size: usize, mut color: impl FnMut(usize, usize) -> [f32; 3]) -> SkyImage {
    let grid = SkyGrid::new(size, 90.0);
    let mask = grid.mask();
    let pixels = (0..size * size)
        .map(|i| if mask[i] { color(i % size, i / size) } else { [0.0; 3] })
        .collect();
    SkyImage::from_pixels(grid, pixels, FrameMeta::default()).unwrap()
}

#[test]
fn saturation_std_matches_brute_force() {
    let img = grid_image(60, |x, _| if x < 30 { [0.15, 0.35, 0.85] } else { [0.55, 0.55, 0.57] });
    let s: Vec<f64> = (0..img.pixels.len()).filter(|i| img.valid[*i]).map(|i| saturation(img.pixels[i])).collect();
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    let sd = (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / s.len() as f64).sqrt();
    assert!((saturation_std(&img).unwrap() - sd).abs() < 1e-9);
    let t = SegThresholds::default();
    let expected = if sd > t.saturation_std_threshold { Modality::Multimodal } else { Modality::Unimodal };
    assert_eq!(modality(&img, &t).unwrap(), expected);
}

#[test]
fn separated_color_blobs_are_labelled() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut jitter = |c: [f32; 3]| c.map(|v| (v + rng.gen_range(-0.05f32..0.05)).clamp(0.0, 1.0));
    let size = 80;
    let cloud_at = |x: usize, y: usize| (x as f64 - 25.0).hypot(y as f64 - 40.0) < 18.0;
    let img = grid_image(size, |x, y| {
        if cloud_at(x, y) {
            jitter([0.85, 0.85, 0.88])
        } else {
            jitter([0.15, 0.35, 0.85])
        }
    });
    let map = segment(&img, &SegmentationConfig::default()).unwrap();
    let est = map.cloud_mask();
    let (mut hit, mut n) = (0, 0);
    for i in 0..size * size {
        if img.valid[i] {
            n += 1;
            hit += usize::from(est[i] == cloud_at(i % size, i / size));
        }
    }
    let acc = hit as f64 / n as f64;
    assert!(acc >= 0.98, "accuracy {acc}");
}

#[test]
fn multimodal_clear_sky_has_no_cloud() {
    let img = grid_image(60, |x, y| if (x / 10 + y / 10) % 2 == 0 { [0.1, 0.3, 0.9] } else { [0.35, 0.5, 0.9] });
    assert_eq!(modality(&img, &SegThresholds::default()).unwrap(), Modality::Multimodal);
    let cf = segment(&img, &SegmentationConfig::default()).unwrap().cloud_fraction();
    assert!(cf < 0.02, "cloud fraction {cf}");
}

#[test]
fn overcast_with_blue_gap() {
    let size = 80;
    let gap = |x: usize, y: usize| (x as f64 - 50.0).hypot(y as f64 - 35.0) < 12.0;
    let img = grid_image(size, |x, y| if gap(x, y) { [0.15, 0.35, 0.85] } else { [0.6, 0.6, 0.62] });
    let n = img.valid_count() as f64;
    let gap_px = (0..size * size).filter(|i| img.valid[*i] && gap(i % size, i / size)).count() as f64;
    let cf = segment(&img, &SegmentationConfig::default()).unwrap().cloud_fraction();
    assert!((cf - (1.0 - gap_px / n)).abs() <= 0.01, "cloud fraction {cf}, expected {}", 1.0 - gap_px / n);
}

#[test]
fn expansion_reconstructs_smooth_signal() {
    let (w, h) = (48, 40);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| (rng.gen_range(0.1..0.5), rng.gen_range(0.01..0.05), rng.gen_range(0.01..0.05), rng.gen_range(0.0..6.0)))
        .collect();
    let f = |x: f64, y: f64| waves.iter().map(|(a, kx, ky, p)| a * (kx * x + ky * y + p).sin()).sum::<f64>();
    let gray: Vec<f64> = (0..w * h).map(|i| f((i % w) as f64, (i / w) as f64)).collect();
    let pc = polynomial_expansion(&gray, w, h, 3, 1.2).unwrap();
    for y in 4..h - 4 {
        for x in 4..w - 4 {
            assert!((pc.eval(x, y, 0.0, 0.0) - gray[y * w + x]).abs() < 1e-3, "({x}, {y})");
        }
    }
}

#[test]
fn injected_spikes_are_exactly_flagged() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t0 = Utc.with_ymd_and_hms(2023, 6, 1, 10, 0, 0).unwrap();
    let n = 300;
    let a: Vec<CmvSample> = (0..n)
        .map(|i| {
            let t = i as f64 / 30.0;
            CmvSample::new(t0 + Duration::seconds(10 * i as i64), "1", 2.0 * t.sin(), t.cos())
        })
        .collect();
    let mut b: Vec<CmvSample> = a
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.camera_id = "2".into();
            s.mean_u += rng.gen_range(-0.3..0.3);
            s.mean_v += rng.gen_range(-0.3..0.3);
            s
        })
        .collect();
    let mut spikes = std::collections::BTreeSet::new();
    while spikes.len() < 10 {
        spikes.insert(rng.gen_range(0..n));
    }
    for &k in &spikes {
        b[k].mean_u += if rng.gen_bool(0.5) { 5.0 } else { -5.0 };
    }
    let (fa, fb) = cross_camera_filter(&a, &b, 2.0).unwrap();
    let flagged: std::collections::BTreeSet<usize> = (0..n).filter(|&i| fa[i].filled_by_locf).collect();
    assert_eq!(flagged, spikes);
    assert!((0..n).all(|i| fa[i].filled_by_locf == fb[i].filled_by_locf));
}

#[test]
fn lower_layer_gives_lower_height() {
    let median = |h: f64| {
        let mut spec = SceneSpec::new("order", 0.5, h, 8);
        spec.frame_count = 2;
        let scene = Scene::new(spec).unwrap();
        let size = scene.spec.image_size;
        let i1 = scene.render_sky(Camera::Cam1, 0, size);
        let i2 = scene.render_sky(Camera::Cam2, 0, size);
        let mask = scene.cloud_mask(Camera::Cam1, 0, size);
        let search = CbhSearch {
            pixel_stride: 5,
            ..CbhSearch::default()
        };
        match_height(&i1, &i2, &mask, &search, &scene.spec.rig, Some(&scene.sun(0)))
            .unwrap()
            .median_m()
            .unwrap()
    };
    assert!(median(1000.0) < median(4000.0));
}

#[test]
fn cloud_fraction_follows_the_generator() {
    let mut spec = SceneSpec::new("cf", 0.5, 2000.0, 9);
    spec.frame_count = 2;
    let scene = Scene::new(spec).unwrap();
    let size = scene.spec.image_size;
    let img = scene.render_sky(Camera::Cam1, 0, size);
    let est = segment_with_sun(&img, &SegmentationConfig::default(), Some(&scene.sun(0)))
        .unwrap()
        .cloud_fraction();
    let mask = scene.cloud_mask(Camera::Cam1, 0, size);
    let n = img.valid_count() as f64;
    let cloudy = (0..size * size).filter(|&i| img.valid[i] && mask[i]).count() as f64;
    assert!((est - cloudy / n).abs() <= 0.01, "{est} vs {}", cloudy / n);
}

#[test]
fn roster_spans_both_variability_regimes() {
    let mut vbar = Vec::new();
    for b in benchmark_suite(1, 120) {
        if matches!(b.regime, Regime::Clear | Regime::Broken) {
            let t = truth(&Scene::new(b.spec).unwrap());
            let k: Vec<f64> = t.ghi.iter().zip(&t.ghi_clear).map(|(g, c)| g / c).collect();
            vbar.push(daily_stats(&k).unwrap().mean_variability);
        }
    }
    assert!(vbar.iter().any(|v| *v < 0.01));
    assert!(vbar.iter().any(|v| *v > 0.04));
}

#[test]
fn metric_table_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let days = [NaiveDate::from_ymd_opt(2023, 6, 1).unwrap(), NaiveDate::from_ymd_opt(2023, 6, 2).unwrap()];
    let mut f = Vec::new();
    let mut r = Vec::new();
    let mut truth = Vec::new();
    for d in days {
        for i in 0..7 {
            let t = d.and_hms_opt(10, 0, 0).unwrap().and_utc() + Duration::seconds(10 * i);
            let rec = |rng: &mut ChaCha8Rng, m: &str| ForecastRecord {
                issue_time: t,
                values: (0..HORIZONS).map(|_| rng.gen_range(0.0..900.0)).collect(),
                method: m.into(),
            };
            f.push(rec(&mut rng, "x"));
            r.push(rec(&mut rng, "p"));
            truth.push((0..HORIZONS).map(|_| rng.gen_range(0.0..900.0)).collect::<Vec<f64>>());
        }
    }
    let table = evaluate("x", &f, &r, &truth).unwrap();
    for cell in &table.cells {
        let h = (0..HORIZONS).find(|h| Some(horizon_seconds(*h)) == cell.horizon_s).unwrap();
        let rows: Vec<usize> = (0..f.len()).filter(|&i| Some(f[i].issue_time.date_naive()) == cell.day).collect();
        let mut se = 0.0;
        let mut ae = 0.0;
        let mut se_ref = 0.0;
        for &i in &rows {
            se += (f[i].values[h] - truth[i][h]).powi(2);
            ae += (f[i].values[h] - truth[i][h]).abs();
            se_ref += (r[i].values[h] - truth[i][h]).powi(2);
        }
        let n = rows.len() as f64;
        let (rm, rr) = ((se / n).sqrt(), (se_ref / n).sqrt());
        assert_eq!(cell.samples, rows.len());
        assert!((cell.rmse - rm).abs() < 1e-9);
        assert!((cell.mae - ae / n).abs() < 1e-9);
        assert!((cell.ss.unwrap() - (1.0 - rm / rr)).abs() < 1e-12);
    }
    assert_eq!(table.cells.len(), 2 * HORIZONS);
}

#[test]
fn identity_permutation_gives_zero_importance() {
    let ds = common::planted_dataset(50, 11);
    let model = common::PlantedModel;
    let y = model.predict_normalized(&ds.data).unwrap();
    let reference: Vec<f64> = (0..HORIZONS)
        .map(|h| {
            ds.truth
                .iter()
                .enumerate()
                .map(|(i, t)| ((y.data[i * HORIZONS + h] as f64 * 1361.0).max(0.0) - t[h]).abs())
                .sum::<f64>()
                / ds.truth.len() as f64
        })
        .collect();
    let identity: Vec<usize> = (0..ds.distinct_rows().len()).collect();
    let d = pi_for_permutation(&model, &ds, common::PLANTED, &identity, &reference, 1361.0).unwrap();
    assert!(d.iter().all(|v| *v == 0.0), "{d:?}");
}

#[test]
fn planted_channel_is_the_only_important_one() {
    let ds = common::planted_dataset(200, 12);
    let all: Vec<usize> = (0..=METHOD_C_CHANNELS).collect();
    let cfg = PiConfig {
        repetitions: 4,
        ..PiConfig::default()
    };
    let rep = permutation_importance(&common::PlantedModel, &ds, &all, &cfg).unwrap();
    for (i, row) in rep.rows.iter().enumerate() {
        if i == common::PLANTED {
            assert!(row.delta_mae.iter().all(|v| *v > 0.0));
            assert!(row.delta_mae.windows(2).all(|w| w[1] >= w[0]));
        } else {
            assert!(row.delta_mae.iter().all(|v| v.abs() < 1e-6), "{}: {:?}", row.feature, row.delta_mae);
        }
    }
}

/// `y = w x + b` on scalars, for exercising the training loop.
struct Linear {
    w: Param<f64>,
    b: Param<f64>,
}

impl Linear {
    fn new() -> Self {
        Self {
            w: Param::new("w", Tensor::zeros(&[1])),
            b: Param::new("b", Tensor::zeros(&[1])),
        }
    }
}

impl Trainable<f64> for Linear {
    type Data = Vec<(f64, f64)>;

    fn data_len(data: &Self::Data) -> usize {
        data.len()
    }

    fn loss_and_grad(&mut self, data: &Self::Data, idx: &[usize], _rng: &mut ChaCha8Rng) -> asi_nowcast::error::Result<f64> {
        let n = idx.len() as f64;
        let mut loss = 0.0;
        for &i in idx {
            let (x, y) = data[i];
            let e = self.w.value.data[0] * x + self.b.value.data[0] - y;
            loss += e.abs() / n;
            let g = e.signum() / n;
            self.w.grad.data[0] += g * x;
            self.b.grad.data[0] += g;
        }
        Ok(loss)
    }

    fn loss(&self, data: &Self::Data, idx: &[usize]) -> asi_nowcast::error::Result<f64> {
        Ok(idx
            .iter()
            .map(|&i| (self.w.value.data[0] * data[i].0 + self.b.value.data[0] - data[i].1).abs())
            .sum::<f64>()
            / idx.len() as f64)
    }

    fn params(&self) -> Vec<&Param<f64>> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        vec![&mut self.w, &mut self.b]
    }
}

#[test]
fn toy_regression_learns_then_stops() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut sample = |n: usize| -> Vec<(f64, f64)> {
        (0..n)
            .map(|_| {
                let x: f64 = rng.gen_range(-1.0..1.0);
                (x, 0.7 * x - 0.2 + rng.gen_range(-0.01..0.01))
            })
            .collect()
    };
    let (tr, va) = (sample(200), sample(50));
    let cfg = TrainConfig {
        batch_size: 16,
        max_epochs: 500,
        patience: 5,
        seed: 1,
        lr: 0.02,
    };
    let mut m = Linear::new();
    let h = train(&mut m, &tr, Some(&va), &cfg).unwrap();
    assert!(h.val_loss[h.best_epoch] < 0.5 * h.val_loss[0]);
    assert!(h.stopped_early);
    assert!((m.w.value.data[0] - 0.7).abs() < 0.05);
    let mut again = Linear::new();
    assert_eq!(train(&mut again, &tr, Some(&va), &cfg).unwrap(), h);
}

#[test]
fn patience_one_on_unlearnable_data_stops_after_two_epochs() {
    // zero inputs and balanced +-1 targets: the loss is flat around the initial weights
    let data: Vec<(f64, f64)> = (0..40).map(|i| (0.0, if i % 2 == 0 { 1.0 } else { -1.0 })).collect();
    let cfg = TrainConfig {
        batch_size: 40,
        max_epochs: 50,
        patience: 1,
        seed: 0,
        lr: 1e-3,
    };
    let h = train(&mut Linear::new(), &data, Some(&data), &cfg).unwrap();
    assert_eq!(h.val_loss.len(), 2, "{h:?}");
    assert!(h.stopped_early);
}
