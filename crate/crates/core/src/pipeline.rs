//! End-to-end glue: dataset calibration, frame preprocessing, per-day feature
//! extraction, window assembly and prediction tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::features::{
    make_windows, method_a_frame, method_b_frame, sun_distance_map, FeatureFrame, FeatureSeriesRow, SampleWindow,
    HORIZONS,
};
use crate::forecasters::{smart_persistence_for, ForecastRecord};
use crate::imaging::{
    calibrate_azimuth, detect_sun, downsample, fit_deviation_poly, read_lens_table, CameraCalibration, FrameMeta,
    LensModel, RawImage, Reprojection, SkyDir, SkyImage, SunObservation, MIN_CALIBRATION_PAIRS,
};
use crate::manifest::{frame_file_name, read_ghi_csv, write_ghi_csv, DatasetManifest, DayEntry, MANIFEST_VERSION};
use crate::motion::{aggregate_cmv, cross_camera_filter, sky_flow, CmvSample, FlowField};
use crate::nn::TensorF32;
use crate::segmentation::segment_with_sun;
use crate::solar::{clear_sky_ghi, solar_position, IrradianceSeries, SolarGeometry};
use crate::stereo_cbh::{match_height, temporal_fill, CbhMap};
use crate::synth::{truth, BenchmarkScene, Camera, Scene, SceneSpec};

pub const CAMERAS: [&str; 2] = ["cam1", "cam2"];
pub const CALIBRATION_FILE: &str = "calibration.json";

/// Raw frames per day sampled for the azimuth calibration.
const CALIBRATION_SAMPLES_PER_DAY: usize = 12;
/// Detections larger than this share of the frame are glare, not the sun disk.
const MAX_SUN_PIXEL_SHARE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub lens: [LensModel; 2],
    pub cameras: [CameraCalibration; 2],
    pub raw_width: usize,
    pub raw_height: usize,
}

impl Calibration {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn lens_table_path(root: &Path, cfg: &RunConfig, cam: usize) -> Option<PathBuf> {
    let configured = if cam == 0 { &cfg.lens.cam1_table } else { &cfg.lens.cam2_table };
    match configured {
        Some(p) if p.is_absolute() => Some(p.clone()),
        Some(p) => Some(root.join(p)),
        None => Some(root.join(format!("lens_{}.csv", CAMERAS[cam]))).filter(|p| p.exists()),
    }
}

/// Lens model from a table when one is available, equidistant otherwise.
pub fn fit_lens(root: &Path, cfg: &RunConfig, cam: usize, raw_width: usize) -> Result<LensModel> {
    let mut lens = cfg.lens.equidistant(raw_width);
    if let Some(path) = lens_table_path(root, cfg, cam) {
        let fit = fit_deviation_poly(&read_lens_table(&path)?, lens.theta_fov_deg)?;
        log::info!("{}: deviation fit MAE {:.3} deg", path.display(), fit.mae_deg);
        lens.deviation_poly = fit.coefficients;
    }
    lens.validate()?;
    Ok(lens)
}

pub fn sun_dir(g: &SolarGeometry) -> SkyDir {
    SkyDir {
        zenith_deg: g.zenith_deg,
        azimuth_deg: g.azimuth_deg,
    }
}

fn read_raw(root: &Path, day: &DayEntry, cam: usize, frame: &str) -> Result<RawImage> {
    let t = crate::manifest::parse_frame_time(frame)?;
    RawImage::read_png(&day.camera_dir(root, CAMERAS[cam]).join(frame), FrameMeta::new(t, CAMERAS[cam]))
}

/// Fits both lenses and the azimuth rotation of both cameras from sun
/// detections on a sample of raw frames.
pub fn calibrate_dataset(root: &Path, manifest: &DatasetManifest, cfg: &RunConfig) -> Result<Calibration> {
    let first = manifest
        .days
        .iter()
        .find_map(|d| d.frames.first().map(|f| (d, f)))
        .ok_or_else(|| Error::InsufficientData("dataset has no frames".into()))?;
    let probe = read_raw(root, first.0, 0, first.1)?;
    let (w, h) = (probe.width, probe.height);
    let location = cfg.site.location()?;
    let lens = [fit_lens(root, cfg, 0, w)?, fit_lens(root, cfg, 1, w)?];
    let mut cameras = [CameraCalibration::default(); 2];
    for (cam, out) in cameras.iter_mut().enumerate() {
        let jobs: Vec<(&DayEntry, &String)> = manifest
            .days
            .iter()
            .flat_map(|d| {
                let step = (d.frames.len() / CALIBRATION_SAMPLES_PER_DAY).max(1);
                d.frames.iter().step_by(step).map(move |f| (d, f))
            })
            .collect();
        let found: Vec<Option<SunObservation>> = jobs
            .par_iter()
            .map(|(d, f)| -> Result<Option<SunObservation>> {
                let raw = read_raw(root, d, cam, f)?;
                let geom = solar_position(raw.meta.timestamp, &location);
                if geom.zenith_deg >= lens[cam].theta_fov_deg {
                    return Ok(None);
                }
                Ok(detect_sun(&raw)
                    .filter(|s| (s.count as f64) < MAX_SUN_PIXEL_SHARE * (w * h) as f64)
                    .map(|sun| SunObservation {
                        sun,
                        ephemeris_azimuth_deg: geom.azimuth_deg,
                    }))
            })
            .collect::<Result<_>>()?;
        let obs: Vec<SunObservation> = found.into_iter().flatten().collect();
        *out = if obs.len() >= MIN_CALIBRATION_PAIRS {
            calibrate_azimuth(&obs, w, h)?
        } else {
            log::warn!("{}: only {} sun detections; assuming no rotation", CAMERAS[cam], obs.len());
            CameraCalibration::default()
        };
        log::info!("{}: azimuth correction {:.2} deg", CAMERAS[cam], out.azimuth_correction_deg);
    }
    Ok(Calibration {
        lens,
        cameras,
        raw_width: w,
        raw_height: h,
    })
}

/// Reprojection onto the sky grid followed by Lanczos downsampling.
pub struct Preprocessor {
    maps: [Reprojection; 2],
    image_size: usize,
}

impl Preprocessor {
    pub fn new(cal: &Calibration, cfg: &RunConfig) -> Result<Self> {
        let map = |k: usize| {
            Reprojection::with_fov(
                &cal.lens[k],
                &cal.cameras[k],
                cal.raw_width,
                cal.raw_height,
                cfg.imaging.undistort_size,
                cfg.imaging.grid_fov_deg,
            )
        };
        Ok(Self {
            maps: [map(0)?, map(1)?],
            image_size: cfg.imaging.image_size,
        })
    }

    pub fn apply(&self, cam: usize, raw: &RawImage) -> Result<SkyImage> {
        let full = self.maps[cam].apply(raw)?;
        if full.size() == self.image_size {
            Ok(full)
        } else {
            downsample(&full, self.image_size)
        }
    }

    /// Both cameras of one manifest day, in frame order.
    pub fn load_day(&self, root: &Path, day: &DayEntry) -> Result<[Vec<SkyImage>; 2]> {
        let cam = |k: usize| -> Result<Vec<SkyImage>> {
            day.frames
                .par_iter()
                .map(|f| self.apply(k, &read_raw(root, day, k, f)?))
                .collect()
        };
        Ok([cam(0)?, cam(1)?])
    }
}

/// Which per-frame image tensors to keep alongside the series rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KeepFrames {
    pub method_a: bool,
    pub method_b: bool,
}

#[derive(Debug, Clone, Default)]
pub struct DayFeatures {
    pub rows: Vec<FeatureSeriesRow>,
    /// `[H, W, 3]` per row when requested.
    pub frames_a: Vec<TensorF32>,
    /// `[H, W, 9]` per row when requested.
    pub frames_b: Vec<TensorF32>,
}

/// Segmentation, motion and CBH over one day of paired sky frames.
///
/// Flow at frame `i` is measured from `i - 1` to `i`; the first frame has
/// zero motion. Stereo matching runs every `cbh_frame_interval` frames and
/// the last map is carried forward in between.
pub fn extract_features(cam1: &[SkyImage], cam2: &[SkyImage], cfg: &RunConfig, keep: KeepFrames) -> Result<DayFeatures> {
    if cam1.len() != cam2.len() {
        return Err(Error::shape("feature extraction", cam1.len(), cam2.len()));
    }
    if let Some((a, b)) = cam1.iter().zip(cam2).find(|(a, b)| a.meta.timestamp != b.meta.timestamp) {
        return Err(Error::InvalidInput(format!(
            "camera frames misaligned: {} vs {}",
            a.meta.timestamp, b.meta.timestamp
        )));
    }
    let location = cfg.site.location()?;
    let rig = cfg.site.rig()?;
    let model = cfg.clear_sky();
    let n = cam1.len();
    let geoms: Vec<SolarGeometry> = cam1.iter().map(|f| solar_position(f.meta.timestamp, &location)).collect();

    let segs: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sun = sun_dir(&geoms[i]);
            Ok((
                segment_with_sun(&cam1[i], &cfg.segmentation, Some(&sun))?,
                segment_with_sun(&cam2[i], &cfg.segmentation, Some(&sun))?,
            ))
        })
        .collect::<Result<_>>()?;
    let flows: Vec<(FlowField, FlowField)> = (0..n)
        .into_par_iter()
        .map(|i| {
            if i == 0 {
                let s = cam1[0].size();
                return Ok((FlowField::zeros(s, s), FlowField::zeros(s, s)));
            }
            Ok((
                sky_flow(&cam1[i - 1], &cam1[i], &cfg.motion.flow)?,
                sky_flow(&cam2[i - 1], &cam2[i], &cfg.motion.flow)?,
            ))
        })
        .collect::<Result<_>>()?;

    let mut cmv1: Vec<CmvSample> = Vec::with_capacity(n);
    let mut cmv2: Vec<CmvSample> = Vec::with_capacity(n);
    for i in 0..n {
        let t = cam1[i].meta.timestamp;
        cmv1.push(aggregate_cmv(&flows[i].0, &segs[i].0.cloud_mask(), CAMERAS[0], t)?);
        cmv2.push(aggregate_cmv(&flows[i].1, &segs[i].1.cloud_mask(), CAMERAS[1], t)?);
    }
    let (cmv1, cmv2) = cross_camera_filter(&cmv1, &cmv2, cfg.motion.inconsistency_px)?;

    let interval = cfg.pipeline.cbh_frame_interval.max(1);
    let mut cbh: Vec<CbhMap> = Vec::with_capacity(n);
    for i in 0..n {
        let mask = segs[i].0.cloud_mask();
        let map = if i % interval == 0 {
            let cur = match_height(&cam1[i], &cam2[i], &mask, &cfg.cbh, &rig, Some(&sun_dir(&geoms[i])))?;
            temporal_fill(&cur, cbh.last(), &mask)?
        } else {
            cbh[i - 1].clone()
        };
        cbh.push(map);
    }

    let mut out = DayFeatures::default();
    for i in 0..n {
        let g = geoms[i];
        out.rows.push(FeatureSeriesRow {
            timestamp: cam1[i].meta.timestamp,
            cs_cam1: segs[i].0.cloud_fraction(),
            cs_cam2: segs[i].1.cloud_fraction(),
            cmv_u1: cmv1[i].mean_u,
            cmv_v1: cmv1[i].mean_v,
            cmv_u2: cmv2[i].mean_u,
            cmv_v2: cmv2[i].mean_v,
            median_cbh_m: cbh[i].median_m().unwrap_or(0.0),
            zenith_deg: g.zenith_deg,
            azimuth_deg: g.azimuth_deg,
            ghi_clear_wm2: clear_sky_ghi(&g, &model),
        });
        if keep.method_a {
            out.frames_a.push(method_a_frame(&cam1[i]));
        }
        if keep.method_b {
            let sun = sun_dir(&g);
            let frame = FeatureFrame {
                timestamp: cam1[i].meta.timestamp,
                seg1: segs[i].0.clone(),
                seg2: segs[i].1.clone(),
                flow1: flows[i].0.clone(),
                flow2: flows[i].1.clone(),
                sunpos1: sun_distance_map(&cam1[i].grid, &sun),
                sunpos2: sun_distance_map(&cam2[i].grid, &sun),
                cbh1: cbh[i].clone(),
            };
            out.frames_b.push(method_b_frame(&frame)?);
        }
    }
    Ok(out)
}

/// A day of features with its measured GHI.
#[derive(Debug, Clone)]
pub struct DayData {
    pub date: NaiveDate,
    pub features: DayFeatures,
    pub irradiance: IrradianceSeries,
}

/// Windows of every day with `start` offset into the concatenated row list,
/// so window starts index the concatenated frame tensors as well.
pub fn assemble_windows(days: &[DayData], solar_constant: f64) -> Result<Vec<SampleWindow>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for d in days {
        let mut w = make_windows(&d.features.rows, &d.irradiance, solar_constant)?;
        w.iter_mut().for_each(|w| w.start += offset);
        offset += d.features.rows.len();
        out.extend(w);
    }
    Ok(out)
}

/// Synthetic day rendered straight onto the sky grid (no raw frames).
pub fn synthetic_day(spec: &SceneSpec, cfg: &RunConfig, keep: KeepFrames) -> Result<DayData> {
    let mut spec = spec.clone();
    spec.fov_deg = cfg.imaging.grid_fov_deg;
    spec.image_size = cfg.imaging.image_size;
    let scene = Scene::new(spec)?;
    let n = scene.spec.frame_count;
    let size = cfg.imaging.image_size;
    let render = |cam: Camera| -> Vec<SkyImage> { (0..n).into_par_iter().map(|f| scene.render_sky(cam, f, size)).collect() };
    let (cam1, cam2) = (render(Camera::Cam1), render(Camera::Cam2));
    let features = extract_features(&cam1, &cam2, cfg, keep)?;
    let model = cfg.clear_sky();
    let ghi: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|f| clear_sky_ghi(&scene.solar_geometry(f), &model) * (1.0 - scene.spec.attenuation * scene.sun_occluded_fraction(f)))
        .collect();
    let irradiance = IrradianceSeries::new((0..n).map(|f| scene.spec.timestamp(f)).collect(), ghi)?;
    Ok(DayData {
        date: scene.spec.start.date_naive(),
        features,
        irradiance,
    })
}

/// Lens table sampled from a lens model, `radius_norm,angle_deg`.
pub fn write_lens_table(path: &Path, lens: &LensModel) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["radius_norm", "angle_deg"])?;
    for k in 0..=40 {
        let rho = k as f64 / 40.0;
        w.write_record([rho.to_string(), lens.zenith_deg(rho).to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes raw frames, GHI, lens tables, per-day truth and the manifest.
pub fn write_synthetic_dataset(root: &Path, suite: &[BenchmarkScene]) -> Result<DatasetManifest> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    if let Some(first) = suite.first() {
        for cam in 0..2 {
            write_lens_table(&root.join(format!("lens_{}.csv", CAMERAS[cam])), &first.spec.lens)?;
        }
    }
    let days = suite
        .par_iter()
        .map(|b| -> Result<DayEntry> {
            let scene = Scene::new(b.spec.clone())?;
            let day = DayEntry {
                date: b.spec.start.date_naive(),
                split: b.split,
                frames: (0..b.spec.frame_count).map(|f| frame_file_name(b.spec.timestamp(f))).collect(),
            };
            for (k, cam) in [Camera::Cam1, Camera::Cam2].into_iter().enumerate() {
                let dir = day.camera_dir(root, CAMERAS[k]);
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                for (f, name) in day.frames.iter().enumerate() {
                    scene.render_raw(cam, f).write_png(&dir.join(name))?;
                }
            }
            let t = truth(&scene);
            write_ghi_csv(&day.ghi_path(root), &t.timestamps, &t.ghi)?;
            let tp = day.dir(root).join("truth.json");
            let summary = serde_json::json!({
                "regime": b.regime,
                "spec": b.spec,
                "cbh_m": t.cbh_m,
                "flow_px_per_frame": t.flow_px_per_frame,
                "ghi": t.ghi,
                "ghi_clear": t.ghi_clear,
            });
            std::fs::write(&tp, serde_json::to_string_pretty(&summary)? + "\n").map_err(|e| Error::io(&tp, e))?;
            Ok(day)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        cadence_s: suite.first().map_or(10, |b| b.spec.cadence_s),
        days,
    };
    manifest.save(root)?;
    Ok(manifest)
}

pub fn feature_csv_path(dir: &Path, date: NaiveDate) -> PathBuf {
    dir.join(format!("{date}.csv"))
}

pub fn frame_tensor_path(dir: &Path, date: NaiveDate, method: &str) -> PathBuf {
    dir.join(format!("{date}_{method}.tensor"))
}

/// Loads feature rows (and GHI) of every manifest day from a features directory.
pub fn load_days(data: &Path, features: &Path, manifest: &DatasetManifest) -> Result<Vec<DayData>> {
    manifest
        .days
        .iter()
        .map(|d| {
            Ok(DayData {
                date: d.date,
                features: DayFeatures {
                    rows: crate::features::read_feature_csv(&feature_csv_path(features, d.date))?,
                    ..DayFeatures::default()
                },
                irradiance: read_ghi_csv(&d.ghi_path(data))?,
            })
        })
        .collect()
}

/// One row per (issue time, horizon).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub issue_time: DateTime<Utc>,
    pub horizon_s: u32,
    pub forecast_wm2: f64,
    pub persistence_wm2: f64,
    pub truth_wm2: f64,
    pub method: String,
}

pub fn prediction_rows(
    forecasts: &[ForecastRecord],
    windows: &[SampleWindow],
    solar_constant: f64,
) -> Result<Vec<PredictionRow>> {
    if forecasts.len() != windows.len() {
        return Err(Error::shape("prediction rows", windows.len(), forecasts.len()));
    }
    let mut out = Vec::with_capacity(windows.len() * HORIZONS);
    for (f, w) in forecasts.iter().zip(windows) {
        let p = smart_persistence_for(w)?;
        for h in 0..HORIZONS {
            out.push(PredictionRow {
                issue_time: w.issue_time,
                horizon_s: crate::evaluation::horizon_seconds(h),
                forecast_wm2: f.values[h],
                persistence_wm2: p.values[h],
                truth_wm2: w.targets[h] * solar_constant,
                method: f.method.clone(),
            });
        }
    }
    Ok(out)
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Regroups prediction rows into forecast, persistence and truth records
/// per issue time.
pub fn records_from_predictions(rows: &[PredictionRow]) -> Result<(Vec<ForecastRecord>, Vec<ForecastRecord>, Vec<Vec<f64>>)> {
    let mut by_issue: BTreeMap<DateTime<Utc>, Vec<&PredictionRow>> = BTreeMap::new();
    for r in rows {
        by_issue.entry(r.issue_time).or_default().push(r);
    }
    let (mut f, mut p, mut t) = (Vec::new(), Vec::new(), Vec::new());
    for (issue, mut group) in by_issue {
        group.sort_by_key(|r| r.horizon_s);
        let expected: Vec<u32> = (0..HORIZONS).map(crate::evaluation::horizon_seconds).collect();
        if group.iter().map(|r| r.horizon_s).collect::<Vec<_>>() != expected {
            return Err(Error::InvalidInput(format!("issue time {issue} lacks a full horizon set")));
        }
        let method = group[0].method.clone();
        f.push(ForecastRecord {
            issue_time: issue,
            values: group.iter().map(|r| r.forecast_wm2).collect(),
            method,
        });
        p.push(ForecastRecord {
            issue_time: issue,
            values: group.iter().map(|r| r.persistence_wm2).collect(),
            method: "persistence".into(),
        });
        t.push(group.iter().map(|r| r.truth_wm2).collect());
    }
    Ok((f, p, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{benchmark_suite, Split};

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.imaging.image_size = 48;
        cfg.imaging.undistort_size = 96;
        cfg.cbh.pixel_stride = 8;
        cfg.pipeline.cbh_frame_interval = 2;
        cfg
    }

    #[test]
    fn disk_and_memory_paths_agree_on_motion() {
        let dir = tempfile::tempdir().unwrap();
        let mut suite = benchmark_suite(3, 4);
        suite.truncate(2);
        suite[1].split = Split::Test;
        let manifest = write_synthetic_dataset(dir.path(), &suite).unwrap();
        let cfg = small_cfg();
        let cal = calibrate_dataset(dir.path(), &manifest, &cfg).unwrap();
        assert!(cal.lens[0].deviation_poly[1] > 1.0);
        let pre = Preprocessor::new(&cal, &cfg).unwrap();
        let [c1, c2] = pre.load_day(dir.path(), &manifest.days[1]).unwrap();
        assert_eq!(c1[0].size(), 48);
        let disk = extract_features(&c1, &c2, &cfg, KeepFrames { method_a: true, method_b: true }).unwrap();
        assert_eq!(disk.rows.len(), 4);
        assert_eq!(disk.frames_b[0].shape, vec![48, 48, 9]);
        assert_eq!((disk.rows[0].cmv_u1, disk.rows[0].cmv_v1), (0.0, 0.0));
        let mem = synthetic_day(&suite[1].spec, &cfg, KeepFrames::default()).unwrap();
        for (a, b) in disk.rows.iter().zip(&mem.features.rows) {
            assert_eq!(a.timestamp, b.timestamp);
            assert!((a.cs_cam1 - b.cs_cam1).abs() < 0.1, "{} vs {}", a.cs_cam1, b.cs_cam1);
        }
    }

    #[test]
    fn predictions_roundtrip() {
        let t0 = chrono::TimeZone::with_ymd_and_hms(&Utc, 2023, 6, 1, 12, 0, 0).unwrap();
        let w = SampleWindow {
            issue_time: t0,
            start: 0,
            inputs: vec![[0.0; 10]; 15],
            ghi_history: vec![0.5; 15],
            targets: vec![0.4; HORIZONS],
            ghi_now: 500.0,
            ghi_clear_now: 800.0,
            ghi_clear_future: vec![800.0; HORIZONS],
        };
        let f = ForecastRecord {
            issue_time: t0,
            values: vec![450.0; HORIZONS],
            method: "C".into(),
        };
        let rows = prediction_rows(&[f.clone()], &[w], 1000.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        write_predictions(&p, &rows).unwrap();
        let back = read_predictions(&p).unwrap();
        assert_eq!(back, rows);
        let (fr, pr, tr) = records_from_predictions(&back).unwrap();
        assert_eq!(fr, vec![f]);
        assert!((pr[0].values[0] - 500.0).abs() < 1e-9);
        assert!((tr[0][5] - 400.0).abs() < 1e-9);
    }
}
