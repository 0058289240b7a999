//! Model inputs for the three methods and supervised sample windows.
//!
//! Method B channel order: `[sunpos1, cs1, u1, v1, sunpos2, cs2, u2, v2, cbh1]`.
//! Scaling: sun distance / pi, cloud mask 0/1, flow / 10 clamped to [-1, 1],
//! CBH / 10000 m (0 where undefined).
//!
//! Method C channel order follows [`FeatureSeriesRow`]: cloud fractions,
//! the four CMV components (/10, clamped), median CBH (/10000, 0 when
//! undefined), zenith (/180), azimuth (/360), clear-sky GHI (/G0). The
//! normalized GHI history is appended as an extra per-step input.

use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{SkyDir, SkyGrid, SkyImage};
use crate::motion::FlowField;
use crate::nn::TensorF32;
use crate::segmentation::{PixelClass, SegmentationMap};
use crate::solar::IrradianceSeries;
use crate::stereo_cbh::{CbhCell, CbhMap};

pub const LOOKBACK: usize = 15;
pub const HORIZONS: usize = 90;
pub const CADENCE_S: i64 = 10;
pub const MIN_ELEVATION_DEG: f64 = 10.0;
pub const METHOD_B_CHANNELS: usize = 9;
pub const METHOD_C_CHANNELS: usize = 10;
pub const CMV_SCALE: f64 = 10.0;
pub const CBH_SCALE_M: f64 = 10_000.0;

pub const METHOD_B_CHANNEL_NAMES: [&str; METHOD_B_CHANNELS] =
    ["sunpos1", "cs1", "u1", "v1", "sunpos2", "cs2", "u2", "v2", "cbh1"];

pub const METHOD_C_CHANNEL_NAMES: [&str; METHOD_C_CHANNELS] = [
    "cs_cam1",
    "cs_cam2",
    "cmv_u1",
    "cmv_v1",
    "cmv_u2",
    "cmv_v2",
    "median_cbh_m",
    "zenith_deg",
    "azimuth_deg",
    "ghi_clear_wm2",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub timestamp: DateTime<Utc>,
    pub seg1: SegmentationMap,
    pub seg2: SegmentationMap,
    pub flow1: FlowField,
    pub flow2: FlowField,
    /// Per-pixel angular distance to the sun, radians.
    pub sunpos1: Vec<f32>,
    pub sunpos2: Vec<f32>,
    pub cbh1: CbhMap,
}

/// Angular distance from every grid pixel to the sun (0 outside the disk).
pub fn sun_distance_map(grid: &SkyGrid, sun: &SkyDir) -> Vec<f32> {
    (0..grid.size * grid.size)
        .map(|i| {
            grid.pixel_dir(i % grid.size, i / grid.size)
                .map_or(0.0, |d| d.angular_distance(sun) as f32)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSeriesRow {
    pub timestamp: DateTime<Utc>,
    pub cs_cam1: f64,
    pub cs_cam2: f64,
    pub cmv_u1: f64,
    pub cmv_v1: f64,
    pub cmv_u2: f64,
    pub cmv_v2: f64,
    /// 0 when no cloud pixel has a valid height.
    pub median_cbh_m: f64,
    pub zenith_deg: f64,
    pub azimuth_deg: f64,
    pub ghi_clear_wm2: f64,
}

impl FeatureSeriesRow {
    pub fn channels(&self) -> [f64; METHOD_C_CHANNELS] {
        [
            self.cs_cam1,
            self.cs_cam2,
            self.cmv_u1,
            self.cmv_v1,
            self.cmv_u2,
            self.cmv_v2,
            self.median_cbh_m,
            self.zenith_deg,
            self.azimuth_deg,
            self.ghi_clear_wm2,
        ]
    }

    /// Method C scaling of the ten channels.
    pub fn scaled(&self, solar_constant: f64) -> [f64; METHOD_C_CHANNELS] {
        scale_channels(&self.channels(), solar_constant)
    }

    pub fn is_finite(&self) -> bool {
        self.channels().iter().all(|v| v.is_finite())
    }
}

pub fn scale_channels(c: &[f64; METHOD_C_CHANNELS], solar_constant: f64) -> [f64; METHOD_C_CHANNELS] {
    let cmv = |v: f64| (v / CMV_SCALE).clamp(-1.0, 1.0);
    [
        c[0],
        c[1],
        cmv(c[2]),
        cmv(c[3]),
        cmv(c[4]),
        cmv(c[5]),
        c[6] / CBH_SCALE_M,
        c[7] / 180.0,
        c[8] / 360.0,
        c[9] / solar_constant,
    ]
}

pub fn write_feature_csv(path: &Path, rows: &[FeatureSeriesRow]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record([
            "timestamp",
            "cs_cam1",
            "cs_cam2",
            "cmv_u1",
            "cmv_v1",
            "cmv_u2",
            "cmv_v2",
            "median_cbh_m",
            "zenith_deg",
            "azimuth_deg",
            "ghi_clear_wm2",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_feature_csv(path: &Path) -> Result<Vec<FeatureSeriesRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<FeatureSeriesRow>, _>>()?;
    if let Some(bad) = rows.iter().find(|r| !r.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite feature row at {}", bad.timestamp)));
    }
    Ok(rows)
}

/// One supervised example: 15 lookback steps ending at the issue time and 90 targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWindow {
    pub issue_time: DateTime<Utc>,
    /// Index of the first lookback row in the feature table.
    pub start: usize,
    /// Scaled Method C channels, `LOOKBACK` rows.
    pub inputs: Vec<[f64; METHOD_C_CHANNELS]>,
    /// GHI / G0 over the lookback.
    pub ghi_history: Vec<f64>,
    /// GHI / G0 at +10 s .. +900 s.
    pub targets: Vec<f64>,
    pub ghi_now: f64,
    pub ghi_clear_now: f64,
    pub ghi_clear_future: Vec<f64>,
}

impl SampleWindow {
    pub fn day(&self) -> NaiveDate {
        self.issue_time.date_naive()
    }

    pub fn first_time(&self) -> DateTime<Utc> {
        self.issue_time - chrono::Duration::seconds(CADENCE_S * (LOOKBACK as i64 - 1))
    }

    pub fn last_time(&self) -> DateTime<Utc> {
        self.issue_time + chrono::Duration::seconds(CADENCE_S * HORIZONS as i64)
    }
}

/// Rows usable in a window: daytime (elevation >= 10 deg) with a measured GHI.
pub fn eligible(row: &FeatureSeriesRow, ghi: Option<f64>) -> bool {
    90.0 - row.zenith_deg >= MIN_ELEVATION_DEG && ghi.is_some_and(f64::is_finite) && row.is_finite()
}

/// Maximal runs `[start, end)` of eligible rows at exactly the 10 s cadence.
pub fn contiguous_runs(rows: &[FeatureSeriesRow], irradiance: &IrradianceSeries) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..rows.len() {
        let ok = eligible(&rows[i], irradiance.get(rows[i].timestamp));
        let continues = i > 0
            && start.is_some()
            && (rows[i].timestamp - rows[i - 1].timestamp).num_seconds() == CADENCE_S;
        match (ok, start) {
            (true, Some(_)) if continues => {}
            (true, _) => {
                if let Some(s) = start {
                    runs.push((s, i));
                }
                start = Some(i);
            }
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            (false, None) => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, rows.len()));
    }
    runs
}

/// Sliding windows over every contiguous run; GHI normalized by the solar constant.
pub fn make_windows(
    rows: &[FeatureSeriesRow],
    irradiance: &IrradianceSeries,
    solar_constant: f64,
) -> Result<Vec<SampleWindow>> {
    if let Some(w) = rows.windows(2).find(|w| w[1].timestamp <= w[0].timestamp) {
        return Err(Error::InvalidInput(format!("feature rows not increasing at {}", w[1].timestamp)));
    }
    let span = LOOKBACK + HORIZONS;
    let mut out = Vec::new();
    for (s, e) in contiguous_runs(rows, irradiance) {
        if e - s < span {
            continue;
        }
        let ghi: Vec<f64> = rows[s..e]
            .iter()
            .map(|r| irradiance.get(r.timestamp).expect("eligible rows have GHI"))
            .collect();
        for k in 0..=(e - s - span) {
            let lb = &rows[s + k..s + k + LOOKBACK];
            let issue = &lb[LOOKBACK - 1];
            let fut = &rows[s + k + LOOKBACK..s + k + span];
            out.push(SampleWindow {
                issue_time: issue.timestamp,
                start: s + k,
                inputs: lb.iter().map(|r| r.scaled(solar_constant)).collect(),
                ghi_history: ghi[k..k + LOOKBACK].iter().map(|g| g / solar_constant).collect(),
                targets: ghi[k + LOOKBACK..k + span].iter().map(|g| g / solar_constant).collect(),
                ghi_now: ghi[k + LOOKBACK - 1],
                ghi_clear_now: issue.ghi_clear_wm2,
                ghi_clear_future: fut.iter().map(|r| r.ghi_clear_wm2).collect(),
            });
        }
    }
    Ok(out)
}

/// Method C input `[bs, 15, 10]`.
pub fn build_method_c_input(windows: &[&SampleWindow]) -> Result<TensorF32> {
    let mut data = Vec::with_capacity(windows.len() * LOOKBACK * METHOD_C_CHANNELS);
    for w in windows {
        if w.inputs.len() != LOOKBACK {
            return Err(Error::shape("method C input", LOOKBACK, w.inputs.len()));
        }
        for row in &w.inputs {
            data.extend(row.iter().map(|v| *v as f32));
        }
    }
    TensorF32::from_vec(&[windows.len(), LOOKBACK, METHOD_C_CHANNELS], data)
}

/// Method A input `[bs, 15, H, W, 3]`, RGB in [0, 1].
pub fn build_method_a_input(windows: &[&[SkyImage]]) -> Result<TensorF32> {
    let size = windows
        .first()
        .and_then(|w| w.first())
        .map_or(0, SkyImage::size);
    let mut data = Vec::with_capacity(windows.len() * LOOKBACK * size * size * 3);
    for w in windows {
        if w.len() != LOOKBACK {
            return Err(Error::shape("method A input", LOOKBACK, w.len()));
        }
        for img in *w {
            if img.size() != size {
                return Err(Error::shape("method A input", size, img.size()));
            }
            data.extend(img.pixels.iter().flat_map(|p| p.map(|c| c.clamp(0.0, 1.0))));
        }
    }
    TensorF32::from_vec(&[windows.len(), LOOKBACK, size, size, 3], data)
}

fn push_frame_b(frame: &FeatureFrame, out: &mut Vec<f32>) -> Result<()> {
    let n = frame.seg1.classes.len();
    let sizes = [
        frame.seg2.classes.len(),
        frame.flow1.u.len(),
        frame.flow2.u.len(),
        frame.sunpos1.len(),
        frame.sunpos2.len(),
        frame.cbh1.cells.len(),
    ];
    if let Some(bad) = sizes.iter().find(|s| **s != n) {
        return Err(Error::shape("method B frame", n, bad));
    }
    let cs = |c: PixelClass| if c == PixelClass::Cloud { 1.0 } else { 0.0 };
    let cmv = |v: f64| (v / CMV_SCALE).clamp(-1.0, 1.0) as f32;
    let pi = std::f32::consts::PI;
    for i in 0..n {
        let cbh = match frame.cbh1.cells[i] {
            CbhCell::Height(h) => h / CBH_SCALE_M as f32,
            _ => 0.0,
        };
        out.extend_from_slice(&[
            frame.sunpos1[i] / pi,
            cs(frame.seg1.classes[i]),
            cmv(frame.flow1.u[i]),
            cmv(frame.flow1.v[i]),
            frame.sunpos2[i] / pi,
            cs(frame.seg2.classes[i]),
            cmv(frame.flow2.u[i]),
            cmv(frame.flow2.v[i]),
            cbh,
        ]);
    }
    Ok(())
}

/// One Method A frame `[H, W, 3]`.
pub fn method_a_frame(img: &SkyImage) -> TensorF32 {
    let n = img.size();
    let data = img.pixels.iter().flat_map(|p| p.map(|c| c.clamp(0.0, 1.0))).collect();
    TensorF32::from_vec(&[n, n, 3], data).expect("square image")
}

/// One Method B frame `[H, W, 9]`.
pub fn method_b_frame(frame: &FeatureFrame) -> Result<TensorF32> {
    let n = frame.seg1.size;
    let mut data = Vec::with_capacity(n * n * METHOD_B_CHANNELS);
    push_frame_b(frame, &mut data)?;
    TensorF32::from_vec(&[n, n, METHOD_B_CHANNELS], data)
}

/// Method B input `[bs, 15, H, W, 9]`.
pub fn build_method_b_input(windows: &[&[FeatureFrame]]) -> Result<TensorF32> {
    let size = windows.first().and_then(|w| w.first()).map_or(0, |f| f.seg1.size);
    let mut data = Vec::with_capacity(windows.len() * LOOKBACK * size * size * METHOD_B_CHANNELS);
    for w in windows {
        if w.len() != LOOKBACK {
            return Err(Error::shape("method B input", LOOKBACK, w.len()));
        }
        for f in *w {
            if f.seg1.size != size {
                return Err(Error::shape("method B input", size, f.seg1.size));
            }
            push_frame_b(f, &mut data)?;
        }
    }
    TensorF32::from_vec(&[windows.len(), LOOKBACK, size, size, METHOD_B_CHANNELS], data)
}

/// GHI history `[bs, 15]` matching a batch of windows.
pub fn build_ghi_history(windows: &[&SampleWindow]) -> TensorF32 {
    let data = windows
        .iter()
        .flat_map(|w| w.ghi_history.iter().map(|v| *v as f32))
        .collect();
    TensorF32::from_vec(&[windows.len(), LOOKBACK], data).expect("fixed lookback")
}

pub fn build_targets(windows: &[&SampleWindow]) -> TensorF32 {
    let data = windows.iter().flat_map(|w| w.targets.iter().map(|v| *v as f32)).collect();
    TensorF32::from_vec(&[windows.len(), HORIZONS], data).expect("fixed horizon count")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitBoundaries {
    pub val_start: DateTime<Utc>,
    pub test_start: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowSplit {
    pub train: Vec<SampleWindow>,
    pub val: Vec<SampleWindow>,
    pub test: Vec<SampleWindow>,
}

/// Assigns windows by their full span (lookback and horizon); a window
/// crossing a boundary is a split violation.
pub fn chronological_split(windows: Vec<SampleWindow>, b: &SplitBoundaries) -> Result<WindowSplit> {
    if b.test_start < b.val_start {
        return Err(Error::Split("test boundary precedes validation boundary".into()));
    }
    let mut out = WindowSplit::default();
    for w in windows {
        let (first, last) = (w.first_time(), w.last_time());
        if last < b.val_start {
            out.train.push(w);
        } else if first >= b.val_start && last < b.test_start {
            out.val.push(w);
        } else if first >= b.test_start {
            out.test.push(w);
        } else {
            return Err(Error::Split(format!(
                "window {first} .. {last} overlaps a split boundary"
            )));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};

    fn rows(n: usize, start: DateTime<Utc>) -> Vec<FeatureSeriesRow> {
        (0..n)
            .map(|i| FeatureSeriesRow {
                timestamp: start + Duration::seconds(10 * i as i64),
                cs_cam1: 0.5,
                cs_cam2: 0.4,
                cmv_u1: 1.0,
                cmv_v1: -30.0,
                cmv_u2: 0.0,
                cmv_v2: 0.0,
                median_cbh_m: 2000.0,
                zenith_deg: 60.0,
                azimuth_deg: 180.0,
                ghi_clear_wm2: 680.5,
            })
            .collect()
    }

    fn series(rows: &[FeatureSeriesRow]) -> IrradianceSeries {
        IrradianceSeries::new(rows.iter().map(|r| r.timestamp).collect(), vec![400.0; rows.len()]).unwrap()
    }

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2023, 6, 1, 10, 0, 0).unwrap()
    }

    #[test]
    fn window_counts() {
        let r = rows(120, t0());
        assert_eq!(make_windows(&r, &series(&r), 1361.0).unwrap().len(), 16);
        let r = rows(104, t0());
        assert_eq!(make_windows(&r, &series(&r), 1361.0).unwrap().len(), 0);
        let mut r = rows(250, t0());
        r.remove(120);
        // runs of 120 and 129 rows
        assert_eq!(make_windows(&r, &series(&r), 1361.0).unwrap().len(), 16 + 25);
    }

    #[test]
    fn scaling_constants() {
        let r = rows(1, t0());
        let s = r[0].scaled(1361.0);
        assert_eq!(s[9], 0.5);
        assert_eq!(s[3], -1.0);
        assert_eq!(s[2], 0.1);
        assert_eq!(s[6], 0.2);
        assert_eq!((s[7], s[8]), (60.0 / 180.0, 0.5));
    }

    #[test]
    fn method_c_shape() {
        let r = rows(120, t0());
        let w = make_windows(&r, &series(&r), 1361.0).unwrap();
        let refs: Vec<&SampleWindow> = w.iter().take(4).collect();
        let t = build_method_c_input(&refs).unwrap();
        assert_eq!(t.shape, vec![4, 15, 10]);
        assert_eq!(build_targets(&refs).shape, vec![4, 90]);
        assert!((w[0].targets[0] - 400.0 / 1361.0).abs() < 1e-15);
    }

    #[test]
    fn method_a_shapes_and_constant() {
        let img = SkyImage::uniform(SkyGrid::new(20, 80.0), [0.25, 0.5, 0.75]);
        let frames = vec![img; LOOKBACK];
        for bs in [1, 4] {
            let ws: Vec<&[SkyImage]> = (0..bs).map(|_| frames.as_slice()).collect();
            let t = build_method_a_input(&ws).unwrap();
            assert_eq!(t.shape, vec![bs, 15, 20, 20, 3]);
        }
    }

    #[test]
    fn split_by_day() {
        let mut r = rows(200, t0());
        r.extend(rows(200, t0() + Duration::days(1)));
        r.extend(rows(200, t0() + Duration::days(2)));
        let w = make_windows(&r, &series(&r), 1361.0).unwrap();
        let b = SplitBoundaries {
            val_start: Utc.with_ymd_and_hms(2023, 6, 2, 0, 0, 0).unwrap(),
            test_start: Utc.with_ymd_and_hms(2023, 6, 3, 0, 0, 0).unwrap(),
        };
        let s = chronological_split(w.clone(), &b).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (96, 96, 96));
        let bad = SplitBoundaries {
            val_start: t0() + Duration::seconds(1000),
            ..b
        };
        assert!(matches!(chronological_split(w, &bad), Err(Error::Split(_))));
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let r = rows(3, t0());
        write_feature_csv(&p, &r).unwrap();
        assert_eq!(read_feature_csv(&p).unwrap(), r);
        let header = std::fs::read_to_string(&p).unwrap();
        assert!(header.starts_with(
            "timestamp,cs_cam1,cs_cam2,cmv_u1,cmv_v1,cmv_u2,cmv_v2,median_cbh_m,zenith_deg,azimuth_deg,ghi_clear_wm2\n"
        ));
    }
}
