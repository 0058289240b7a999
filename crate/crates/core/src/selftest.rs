//! Oracle checks on synthetic scenes with known ground truth. Used by the
//! `selftest` command and by the acceptance suite.

use crate::error::Result;
use crate::evaluation::{evaluate, skill_score};
use crate::features::{make_windows, FeatureSeriesRow};
use crate::forecasters::{smart_persistence, ForecastRecord};
use crate::motion::{sky_flow, FlowParams};
use crate::segmentation::{segment_with_sun, SegmentationConfig};
use crate::solar::IrradianceSeries;
use crate::stereo_cbh::{match_height, CbhSearch};
use crate::synth::{truth, Camera, Scene, SceneSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        pass,
        detail,
    }
}

/// Mean absolute (u, v) error of the flow between frames 0 and 1 of a
/// half-cloudy scene drifting by `wind` px/frame. Scored over cloud pixels
/// (clear sky carries no texture) at least one averaging window away from
/// the disk edge.
pub fn flow_translation_error(wind: (f64, f64), seed: u64) -> Result<(f64, f64)> {
    let mut spec = SceneSpec::new("flow", 0.5, 2000.0, seed);
    spec.wind_px_per_frame = wind;
    spec.frame_count = 2;
    let scene = Scene::new(spec)?;
    let size = scene.spec.image_size;
    let a = scene.render_sky(Camera::Cam1, 0, size);
    let b = scene.render_sky(Camera::Cam1, 1, size);
    let params = FlowParams::default();
    let flow = sky_flow(&a, &b, &params)?;
    let cloud = scene.cloud_mask(Camera::Cam1, 0, size);
    let margin = params.window_px(size) as f64 + wind.0.abs().max(wind.1.abs());
    let r_max = size as f64 / 2.0 - margin;
    let (mut eu, mut ev, mut n) = (0.0, 0.0, 0usize);
    for i in 0..size * size {
        let (x, y) = ((i % size) as f64 + 0.5 - size as f64 / 2.0, (i / size) as f64 + 0.5 - size as f64 / 2.0);
        if a.valid[i] && cloud[i] && x.hypot(y) <= r_max {
            eu += (flow.u[i] - wind.0).abs();
            ev += (flow.v[i] - wind.1).abs();
            n += 1;
        }
    }
    Ok((eu / n as f64, ev / n as f64))
}

/// Pixel accuracy against the true cloud mask, and the estimated and true
/// cloud fractions, for frame 0 of a scene with the given cloud fraction.
pub fn segmentation_scores(cloud_fraction: f64, seed: u64) -> Result<(f64, f64, f64)> {
    let mut spec = SceneSpec::new("seg", cloud_fraction, 2000.0, seed);
    spec.frame_count = 2;
    let scene = Scene::new(spec)?;
    let size = scene.spec.image_size;
    let img = scene.render_sky(Camera::Cam1, 0, size);
    let seg = segment_with_sun(&img, &SegmentationConfig::default(), Some(&scene.sun(0)))?;
    let est = seg.cloud_mask();
    let t = scene.cloud_mask(Camera::Cam1, 0, size);
    let (mut hit, mut n, mut cloudy) = (0usize, 0usize, 0usize);
    for i in 0..size * size {
        if img.valid[i] {
            n += 1;
            hit += usize::from(est[i] == t[i]);
            cloudy += usize::from(t[i]);
        }
    }
    Ok((hit as f64 / n as f64, seg.cloud_fraction(), cloudy as f64 / n as f64))
}

/// Median stereo height of a layer at `height_m` seen on `size`-px grids.
pub fn cbh_median(height_m: f64, size: usize, stride: usize, seed: u64) -> Result<Option<f64>> {
    let mut spec = SceneSpec::new("cbh", 0.5, height_m, seed);
    spec.frame_count = 2;
    spec.image_size = size;
    let scene = Scene::new(spec)?;
    let i1 = scene.render_sky(Camera::Cam1, 0, size);
    let i2 = scene.render_sky(Camera::Cam2, 0, size);
    let mask = scene.cloud_mask(Camera::Cam1, 0, size);
    let search = CbhSearch {
        pixel_stride: stride,
        ..CbhSearch::default()
    };
    let map = match_height(&i1, &i2, &mask, &search, &scene.spec.rig, Some(&scene.sun(0)))?;
    Ok(map.median_m())
}

/// Skill score of smart persistence scored against itself on a synthetic day.
pub fn persistence_self_skill(seed: u64) -> Result<Vec<Option<f64>>> {
    let mut spec = SceneSpec::new("pers", 0.4, 1500.0, seed);
    spec.frame_count = 120;
    let scene = Scene::new(spec)?;
    let t = truth(&scene);
    let rows: Vec<FeatureSeriesRow> = (0..t.timestamps.len())
        .map(|f| {
            let g = scene.solar_geometry(f);
            FeatureSeriesRow {
                timestamp: t.timestamps[f],
                cs_cam1: 0.0,
                cs_cam2: 0.0,
                cmv_u1: 0.0,
                cmv_v1: 0.0,
                cmv_u2: 0.0,
                cmv_v2: 0.0,
                median_cbh_m: 0.0,
                zenith_deg: g.zenith_deg,
                azimuth_deg: g.azimuth_deg,
                ghi_clear_wm2: t.ghi_clear[f],
            }
        })
        .collect();
    let g0 = crate::solar::DEFAULT_SOLAR_CONSTANT;
    let windows = make_windows(&rows, &IrradianceSeries::new(t.timestamps.clone(), t.ghi.clone())?, g0)?;
    let p: Vec<ForecastRecord> = windows
        .iter()
        .map(|w| smart_persistence(w.issue_time, w.ghi_now, w.ghi_clear_now, &w.ghi_clear_future))
        .collect::<Result<_>>()?;
    let truth: Vec<Vec<f64>> = windows.iter().map(|w| w.targets.iter().map(|v| v * g0).collect()).collect();
    let table = evaluate("persistence", &p, &p, &truth)?;
    Ok(table.cells.iter().map(|c| c.ss).collect())
}

/// Quick checks, a few seconds in total.
pub fn run() -> Vec<Check> {
    let mut out = Vec::new();
    let wrap = |name: &str, r: Result<Check>| r.unwrap_or_else(|e| check(name, false, format!("error: {e}")));

    out.push(wrap(
        "skill score arithmetic",
        Ok({
            let ss = skill_score(80.0, 100.0);
            check("skill score arithmetic", ss.is_some_and(|s| (s - 0.2).abs() < 1e-12), format!("{ss:?}"))
        }),
    ));
    out.push(wrap(
        "flow translation",
        flow_translation_error((3.0, 0.0), 1).map(|(u, v)| {
            check("flow translation", u < 0.5 && v < 0.5, format!("mean abs error u {u:.3} v {v:.3} px"))
        }),
    ));
    out.push(wrap(
        "segmentation accuracy",
        segmentation_scores(0.5, 2).map(|(acc, est, tru)| {
            check(
                "segmentation accuracy",
                acc >= 0.95,
                format!("accuracy {acc:.4}, cloud fraction {est:.3} vs {tru:.3}"),
            )
        }),
    ));
    out.push(wrap(
        "segmentation clear/overcast",
        segmentation_scores(0.0, 3).and_then(|(_, c, _)| {
            let (_, o, _) = segmentation_scores(1.0, 3)?;
            Ok(check(
                "segmentation clear/overcast",
                c <= 0.02 && o >= 0.98,
                format!("clear {c:.3}, overcast {o:.3}"),
            ))
        }),
    ));
    out.push(wrap(
        "cbh 2000 m layer",
        cbh_median(2000.0, 100, 4, 4).map(|m| {
            let err = m.map_or(f64::INFINITY, |m| (m - 2000.0).abs() / 2000.0);
            check("cbh 2000 m layer", err < 0.10, format!("median {m:?} m"))
        }),
    ));
    out.push(wrap(
        "persistence self skill",
        persistence_self_skill(5).map(|ss| {
            let ok = ss.iter().any(Option::is_some) && ss.iter().all(|s| s.is_none_or(|v| v == 0.0));
            check("persistence self skill", ok, format!("{} cells", ss.len()))
        }),
    ));
    out
}
