//! Cloud motion: dense optical flow, per-camera CMV aggregation and the
//! cross-camera consistency filter with last-observation-carried-forward.

mod farneback;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::SkyImage;

pub use farneback::{dense_flow, dense_flow_masked, polynomial_expansion, FlowField, FlowParams, PolyCoeffs};

/// Default Euclidean CMV disagreement (px/frame) above which a timestamp is rejected.
pub const DEFAULT_INCONSISTENCY_PX: f64 = 2.0;

/// Flow between two reprojected frames, computed on the channel-mean gray image.
pub fn sky_flow(prev: &SkyImage, next: &SkyImage, params: &FlowParams) -> Result<FlowField> {
    if prev.size() != next.size() {
        return Err(Error::shape("sky flow", prev.size(), next.size()));
    }
    let g1: Vec<f64> = prev.gray().into_iter().map(f64::from).collect();
    let g2: Vec<f64> = next.gray().into_iter().map(f64::from).collect();
    dense_flow_masked(&g1, &g2, Some(&prev.valid), prev.size(), prev.size(), params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmvSample {
    pub timestamp: DateTime<Utc>,
    pub camera_id: String,
    pub mean_u: f64,
    pub mean_v: f64,
    /// No cloud pixel contributed; the vector is zero by convention.
    pub empty_mask: bool,
    pub filled_by_locf: bool,
}

impl CmvSample {
    pub fn new(timestamp: DateTime<Utc>, camera_id: impl Into<String>, u: f64, v: f64) -> Self {
        Self {
            timestamp,
            camera_id: camera_id.into(),
            mean_u: u,
            mean_v: v,
            empty_mask: false,
            filled_by_locf: false,
        }
    }
}

/// Component-wise mean flow over cloud pixels.
pub fn aggregate_cmv(
    flow: &FlowField,
    cloud_mask: &[bool],
    camera_id: &str,
    timestamp: DateTime<Utc>,
) -> Result<CmvSample> {
    if cloud_mask.len() != flow.u.len() {
        return Err(Error::shape("cmv aggregation", flow.u.len(), cloud_mask.len()));
    }
    let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
    for ((u, v), m) in flow.u.iter().zip(&flow.v).zip(cloud_mask) {
        if *m {
            su += u;
            sv += v;
            n += 1;
        }
    }
    let mut s = CmvSample::new(timestamp, camera_id, 0.0, 0.0);
    if n == 0 {
        s.empty_mask = true;
    } else {
        s.mean_u = su / n as f64;
        s.mean_v = sv / n as f64;
    }
    Ok(s)
}

/// Invalidates timestamps where the two cameras disagree by more than
/// `threshold` px/frame and fills both series by LOCF. A leading invalid
/// sample is filled with the zero vector.
pub fn cross_camera_filter(
    cam1: &[CmvSample],
    cam2: &[CmvSample],
    threshold: f64,
) -> Result<(Vec<CmvSample>, Vec<CmvSample>)> {
    if cam1.len() != cam2.len() {
        return Err(Error::shape("cross-camera filter", cam1.len(), cam2.len()));
    }
    if let Some((a, b)) = cam1.iter().zip(cam2).find(|(a, b)| a.timestamp != b.timestamp) {
        return Err(Error::InvalidInput(format!(
            "camera series misaligned: {} vs {}",
            a.timestamp, b.timestamp
        )));
    }
    let mut out1: Vec<CmvSample> = Vec::with_capacity(cam1.len());
    let mut out2: Vec<CmvSample> = Vec::with_capacity(cam2.len());
    for (a, b) in cam1.iter().zip(cam2) {
        let diff = (a.mean_u - b.mean_u).hypot(a.mean_v - b.mean_v);
        if diff > threshold || !diff.is_finite() {
            let fill = |prev: Option<&CmvSample>, cur: &CmvSample| {
                let mut s = cur.clone();
                let (u, v) = prev.map_or((0.0, 0.0), |p| (p.mean_u, p.mean_v));
                s.mean_u = u;
                s.mean_v = v;
                s.filled_by_locf = true;
                s
            };
            out1.push(fill(out1.last(), a));
            out2.push(fill(out2.last(), b));
        } else {
            out1.push(a.clone());
            out2.push(b.clone());
        }
    }
    Ok((out1, out2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn ts(i: i64) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2023, 6, 1, 10, 0, 0).unwrap() + chrono::Duration::seconds(10 * i)
    }

    #[test]
    fn uniform_field_mean() {
        let f = FlowField::uniform(10, 10, 1.0, 2.0);
        let s = aggregate_cmv(&f, &vec![true; 100], "1", ts(0)).unwrap();
        assert_eq!((s.mean_u, s.mean_v), (1.0, 2.0));
    }

    #[test]
    fn empty_mask_is_flagged_zero() {
        let f = FlowField::uniform(10, 10, 1.0, 2.0);
        let s = aggregate_cmv(&f, &vec![false; 100], "1", ts(0)).unwrap();
        assert_eq!((s.mean_u, s.mean_v), (0.0, 0.0));
        assert!(s.empty_mask);
    }

    #[test]
    fn half_field_mean() {
        let mut f = FlowField::zeros(10, 10);
        for i in 0..50 {
            f.u[i] = 2.0;
        }
        let s = aggregate_cmv(&f, &vec![true; 100], "1", ts(0)).unwrap();
        assert_eq!((s.mean_u, s.mean_v), (1.0, 0.0));
    }

    #[test]
    fn consistent_series_untouched() {
        let a: Vec<_> = (0..20).map(|i| CmvSample::new(ts(i), "1", 1.0, 0.5)).collect();
        let b: Vec<_> = (0..20).map(|i| CmvSample::new(ts(i), "2", 1.2, 0.4)).collect();
        let (fa, fb) = cross_camera_filter(&a, &b, 2.0).unwrap();
        assert_eq!(fa, a);
        assert_eq!(fb, b);
    }

    #[test]
    fn spike_is_carried_forward() {
        let a: Vec<_> = (0..10).map(|i| CmvSample::new(ts(i), "1", i as f64 * 0.1, 0.0)).collect();
        let mut b = a.clone();
        b[5].mean_u = 9.0;
        let (fa, fb) = cross_camera_filter(&a, &b, 2.0).unwrap();
        assert_eq!(fa[5].mean_u, fa[4].mean_u);
        assert_eq!(fb[5].mean_u, fb[4].mean_u);
        assert!(fa[5].filled_by_locf && fb[5].filled_by_locf);
        assert_eq!(fa.iter().filter(|s| s.filled_by_locf).count(), 1);
    }

    #[test]
    fn leading_spike_filled_with_zero() {
        let a: Vec<_> = (0..3).map(|i| CmvSample::new(ts(i), "1", 1.0, 1.0)).collect();
        let mut b = a.clone();
        b[0].mean_v = -5.0;
        let (fa, _) = cross_camera_filter(&a, &b, 2.0).unwrap();
        assert_eq!((fa[0].mean_u, fa[0].mean_v), (0.0, 0.0));
        assert!(fa[0].filled_by_locf);
    }

    #[test]
    fn misaligned_series_rejected() {
        let a = vec![CmvSample::new(ts(0), "1", 0.0, 0.0)];
        let b = vec![CmvSample::new(ts(1), "2", 0.0, 0.0)];
        assert!(cross_camera_filter(&a, &b, 2.0).is_err());
        assert!(cross_camera_filter(&a, &[], 2.0).is_err());
    }
}
