//! Pixel-wise stereoscopic cloud base height (CBH) from two north-aligned
//! sky cameras.
//!
//! For every cloudy pixel of camera 1 a window is correlated against
//! camera 2 once per candidate height: each window sample is projected onto
//! a horizontal cloud plane at that height, shifted by the baseline and
//! looked up in camera 2. The height with the highest normalized cross
//! correlation wins. Windows grow while the correlation peak is ambiguous;
//! weak matches and matches at the "unrealistic" top bin are discarded.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{SkyDir, SkyGrid, SkyImage};
use crate::solar::GeoLocation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig {
    pub location_cam1: GeoLocation,
    pub location_cam2: GeoLocation,
}

impl StereoRig {
    pub fn new(location_cam1: GeoLocation, location_cam2: GeoLocation) -> Result<Self> {
        let rig = Self {
            location_cam1,
            location_cam2,
        };
        if !(rig.baseline_m() > 0.0) {
            return Err(Error::Config("stereo baseline must be positive".into()));
        }
        Ok(rig)
    }

    /// Places camera 2 at an (east, north) offset in metres from camera 1.
    pub fn from_offset(location_cam1: GeoLocation, east_m: f64, north_m: f64) -> Result<Self> {
        const EARTH_RADIUS_M: f64 = 6_371_008.8;
        let lat0 = location_cam1.latitude_deg.to_radians();
        let cam2 = GeoLocation::new(
            location_cam1.latitude_deg + (north_m / EARTH_RADIUS_M).to_degrees(),
            location_cam1.longitude_deg + (east_m / (EARTH_RADIUS_M * lat0.cos())).to_degrees(),
        )?;
        Self::new(location_cam1, cam2)
    }

    /// Camera 2 position relative to camera 1, (east, north) metres.
    pub fn baseline_vector_m(&self) -> (f64, f64) {
        self.location_cam1.local_offset_m(&self.location_cam2)
    }

    pub fn baseline_m(&self) -> f64 {
        let (e, n) = self.baseline_vector_m();
        e.hypot(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbhSearch {
    /// Ascending candidate heights in metres.
    pub candidate_heights_m: Vec<f64>,
    /// Extra top bin collecting matches with (near) zero parallax; always discarded.
    pub unrealistic_height_m: f64,
    pub start_window_px: usize,
    pub max_window_frac: f64,
    pub ncc_floor: f64,
    /// Window grows while best and runner-up peak NCC differ by less than this.
    pub ambiguity_margin: f64,
    pub circumsolar_exclusion_deg: f64,
    /// Evaluate every n-th row and column only.
    pub pixel_stride: usize,
}

impl Default for CbhSearch {
    fn default() -> Self {
        Self {
            candidate_heights_m: (0..=38).map(|i| 500.0 + 250.0 * i as f64).collect(),
            unrealistic_height_m: 50_000.0,
            start_window_px: 10,
            max_window_frac: 0.20,
            ncc_floor: 0.5,
            ambiguity_margin: 0.05,
            circumsolar_exclusion_deg: 5.0,
            pixel_stride: 1,
        }
    }
}

impl CbhSearch {
    pub fn validate(&self) -> Result<()> {
        if self.candidate_heights_m.is_empty()
            || self.candidate_heights_m.iter().any(|h| !(*h > 0.0))
            || self.candidate_heights_m.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Config("CBH candidates must be positive and strictly ascending".into()));
        }
        if self.unrealistic_height_m <= *self.candidate_heights_m.last().unwrap() {
            return Err(Error::Config("unrealistic CBH bin must lie above every candidate".into()));
        }
        if self.start_window_px < 2 || !(self.max_window_frac > 0.0 && self.max_window_frac <= 0.2) {
            return Err(Error::Config("invalid CBH window settings".into()));
        }
        if self.pixel_stride == 0 {
            return Err(Error::Config("CBH pixel stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn max_window_px(&self, size: usize) -> usize {
        ((self.max_window_frac * size as f64).floor() as usize).max(self.start_window_px)
    }

    pub fn height_range(&self) -> (f64, f64) {
        (
            self.candidate_heights_m[0],
            *self.candidate_heights_m.last().unwrap(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CbhCell {
    NotCloud,
    /// Cloudy but skipped by the pixel stride.
    Unevaluated,
    Discarded,
    Height(f32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbhMap {
    pub size: usize,
    pub cells: Vec<CbhCell>,
}

pub const CBH_PNG_DISCARDED: u16 = u16::MAX;

impl CbhMap {
    pub fn empty(size: usize) -> Self {
        Self {
            size,
            cells: vec![CbhCell::NotCloud; size * size],
        }
    }

    pub fn heights(&self) -> Vec<f64> {
        self.cells
            .iter()
            .filter_map(|c| match c {
                CbhCell::Height(h) => Some(f64::from(*h)),
                _ => None,
            })
            .collect()
    }

    /// Median over valid heights; `None` when no pixel has a height.
    pub fn median_m(&self) -> Option<f64> {
        let mut h = self.heights();
        h.sort_by(f64::total_cmp);
        quantile_sorted(&h, 0.5)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let data: Vec<u16> = self
            .cells
            .iter()
            .map(|c| match c {
                CbhCell::NotCloud | CbhCell::Unevaluated => 0,
                CbhCell::Discarded => CBH_PNG_DISCARDED,
                CbhCell::Height(h) => h.round().clamp(1.0, 65_534.0) as u16,
            })
            .collect();
        let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
            image::ImageBuffer::from_raw(self.size as u32, self.size as u32, data)
                .ok_or_else(|| Error::shape("cbh png", self.size * self.size, self.cells.len()))?;
        buf.save(path)?;
        Ok(())
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_luma16();
        let (w, h) = img.dimensions();
        if w != h {
            return Err(Error::shape("cbh png", "square", format!("{w}x{h}")));
        }
        let cells = img
            .pixels()
            .map(|p| match p.0[0] {
                0 => CbhCell::NotCloud,
                CBH_PNG_DISCARDED => CbhCell::Discarded,
                v => CbhCell::Height(f32::from(v)),
            })
            .collect();
        Ok(Self {
            size: w as usize,
            cells,
        })
    }
}

/// Linear-interpolated quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

/// Direction under which camera 2 sees the point that camera 1 sees along
/// `dir1` on a horizontal plane at `height_m`; `None` when it falls outside
/// camera 2's FOV.
pub fn reproject_at_height(dir1: &SkyDir, height_m: f64, rig: &StereoRig, fov_deg: f64) -> Option<SkyDir> {
    let (te, tn) = dir1.ground_offset_per_height();
    let (be, bn) = rig.baseline_vector_m();
    let dir2 = SkyDir::from_ground_offset(height_m * te - be, height_m * tn - bn, height_m);
    (dir2.zenith_deg < fov_deg).then_some(dir2)
}

struct Matcher<'a> {
    grid: SkyGrid,
    gray1: Vec<f64>,
    gray2: Vec<f64>,
    valid1: &'a [bool],
    valid2: &'a [bool],
    tan1: Vec<(f64, f64)>,
    baseline: (f64, f64),
}

impl Matcher<'_> {
    fn sample2(&self, te: f64, tn: f64) -> Option<f64> {
        let r = te.hypot(tn);
        let zen = r.atan().to_degrees();
        if zen >= self.grid.fov_deg {
            return None;
        }
        let half = self.grid.size as f64 / 2.0;
        let rho = zen / self.grid.fov_deg;
        let (se, sn) = if r > 0.0 { (te / r, tn / r) } else { (0.0, 0.0) };
        // continuous position -> index space
        let x = half + rho * half * se - 0.5;
        let y = half - rho * half * sn - 0.5;
        let n = self.grid.size;
        if x < 0.0 || y < 0.0 || x > (n - 1) as f64 || y > (n - 1) as f64 {
            return None;
        }
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(n - 1), (y0 + 1).min(n - 1));
        let idx = [y0 * n + x0, y0 * n + x1, y1 * n + x0, y1 * n + x1];
        if idx.iter().any(|&i| !self.valid2[i]) {
            return None;
        }
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let g = &self.gray2;
        Some(
            (g[idx[0]] * (1.0 - fx) + g[idx[1]] * fx) * (1.0 - fy)
                + (g[idx[2]] * (1.0 - fx) + g[idx[3]] * fx) * fy,
        )
    }

    /// NCC of a `side`-wide window centred on pixel `(col, row)` at one height.
    fn ncc(&self, col: usize, row: usize, side: usize, height: f64) -> Option<f64> {
        let n = self.grid.size as i64;
        let lo = -(side as i64 / 2);
        let hi = lo + side as i64;
        let (be, bn) = (self.baseline.0 / height, self.baseline.1 / height);
        let (mut sa, mut sb, mut saa, mut sbb, mut sab, mut cnt) = (0.0, 0.0, 0.0, 0.0, 0.0, 0usize);
        for dy in lo..hi {
            let y = row as i64 + dy;
            if y < 0 || y >= n {
                continue;
            }
            for dx in lo..hi {
                let x = col as i64 + dx;
                if x < 0 || x >= n {
                    continue;
                }
                let q = (y * n + x) as usize;
                if !self.valid1[q] {
                    continue;
                }
                let (te, tn) = self.tan1[q];
                let Some(b) = self.sample2(te - be, tn - bn) else {
                    continue;
                };
                let a = self.gray1[q];
                sa += a;
                sb += b;
                saa += a * a;
                sbb += b * b;
                sab += a * b;
                cnt += 1;
            }
        }
        if 2 * cnt < side * side {
            return None;
        }
        let c = cnt as f64;
        let va = saa - sa * sa / c;
        let vb = sbb - sb * sb / c;
        let cov = sab - sa * sb / c;
        let denom = (va * vb).sqrt();
        // textureless windows carry no height information
        if !(denom > 1e-9 * c) {
            return None;
        }
        Some(cov / denom)
    }
}

/// Best candidate index and the runner-up among candidates at least two
/// bins away (a distinct correlation peak).
fn best_and_runner_up(scores: &[Option<f64>]) -> Option<(usize, f64, f64)> {
    let (best, best_score) = scores
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|v| (i, v)))
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))?;
    let runner = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| i.abs_diff(best) >= 2)
        .filter_map(|(_, s)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    Some((best, best_score, runner))
}

/// Per-pixel height search over the cloudy pixels of camera 1.
pub fn match_height(
    image1: &SkyImage,
    image2: &SkyImage,
    cloud_mask1: &[bool],
    search: &CbhSearch,
    rig: &StereoRig,
    sun: Option<&SkyDir>,
) -> Result<CbhMap> {
    search.validate()?;
    if image1.grid != image2.grid {
        return Err(Error::shape(
            "cbh match",
            format!("{:?}", image1.grid),
            format!("{:?}", image2.grid),
        ));
    }
    let grid = image1.grid;
    let size = grid.size;
    if cloud_mask1.len() != size * size {
        return Err(Error::shape("cbh cloud mask", size * size, cloud_mask1.len()));
    }
    let tan1: Vec<(f64, f64)> = (0..size * size)
        .map(|i| {
            grid.pixel_dir(i % size, i / size)
                .map_or((0.0, 0.0), |d| d.ground_offset_per_height())
        })
        .collect();
    let matcher = Matcher {
        grid,
        gray1: image1.gray().into_iter().map(f64::from).collect(),
        gray2: image2.gray().into_iter().map(f64::from).collect(),
        valid1: &image1.valid,
        valid2: &image2.valid,
        tan1,
        baseline: rig.baseline_vector_m(),
    };
    let mut heights = search.candidate_heights_m.clone();
    heights.push(search.unrealistic_height_m);
    let unrealistic = heights.len() - 1;
    let max_side = search.max_window_px(size);
    let exclusion = search.circumsolar_exclusion_deg.to_radians();

    let cells = (0..size * size)
        .into_par_iter()
        .map(|i| {
            let (col, row) = (i % size, i / size);
            if !cloud_mask1[i] || !image1.valid[i] {
                return CbhCell::NotCloud;
            }
            if row % search.pixel_stride != 0 || col % search.pixel_stride != 0 {
                return CbhCell::Unevaluated;
            }
            if let (Some(s), Some(d)) = (sun, grid.pixel_dir(col, row)) {
                if d.angular_distance(s) < exclusion {
                    return CbhCell::Discarded;
                }
            }
            let mut side = search.start_window_px.min(max_side);
            loop {
                let scores: Vec<Option<f64>> = heights
                    .iter()
                    .map(|&h| matcher.ncc(col, row, side, h))
                    .collect();
                let Some((best, score, runner)) = best_and_runner_up(&scores) else {
                    if side >= max_side {
                        return CbhCell::Discarded;
                    }
                    side = grow(side, max_side);
                    continue;
                };
                if score - runner < search.ambiguity_margin && side < max_side {
                    side = grow(side, max_side);
                    continue;
                }
                return if score < search.ncc_floor || best == unrealistic {
                    CbhCell::Discarded
                } else {
                    CbhCell::Height(heights[best] as f32)
                };
            }
        })
        .collect();
    Ok(CbhMap { size, cells })
}

/// Doubles the window area, capped at the maximum side.
fn grow(side: usize, max_side: usize) -> usize {
    ((side as f64 * std::f64::consts::SQRT_2).round() as usize)
        .max(side + 1)
        .min(max_side)
}

/// Fills currently discarded cloudy pixels with the previous frame's height.
pub fn temporal_fill(current: &CbhMap, previous: Option<&CbhMap>, cloud_mask: &[bool]) -> Result<CbhMap> {
    let Some(prev) = previous else {
        return Ok(current.clone());
    };
    if prev.size != current.size || cloud_mask.len() != current.cells.len() {
        return Err(Error::shape("cbh temporal fill", current.cells.len(), prev.cells.len()));
    }
    let cells = current
        .cells
        .iter()
        .zip(&prev.cells)
        .zip(cloud_mask)
        .map(|((cur, old), &cloudy)| match (cur, old) {
            (CbhCell::Discarded, CbhCell::Height(h)) if cloudy => CbhCell::Height(*h),
            _ => *cur,
        })
        .collect();
    Ok(CbhMap {
        size: current.size,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionRow {
    pub size: usize,
    pub n_valid: usize,
    pub median_m: f64,
    pub q1_m: f64,
    pub q3_m: f64,
}

/// Summarizes the height distribution of a map; `None` without valid pixels.
pub fn summarize(size: usize, map: &CbhMap) -> Option<ResolutionRow> {
    let mut h = map.heights();
    h.sort_by(f64::total_cmp);
    Some(ResolutionRow {
        size,
        n_valid: h.len(),
        median_m: quantile_sorted(&h, 0.5)?,
        q1_m: quantile_sorted(&h, 0.25)?,
        q3_m: quantile_sorted(&h, 0.75)?,
    })
}
