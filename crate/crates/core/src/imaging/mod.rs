//! Image ingestion, sun detection, azimuth calibration, fisheye reprojection
//! and Lanczos downsampling.
//!
//! Image-plane convention (raw frames and reprojected sky images alike):
//! north is up, east is right, and the azimuth of a pixel is measured
//! clockwise from image-up. For reprojected [`SkyImage`]s image-up is true
//! north; for raw frames it is off by the camera's azimuth correction.

mod lanczos;
mod lens;
mod reproject;

use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lanczos::{downsample, lanczos3, resample_plane};
pub use lens::{fit_deviation_poly, read_lens_table, DeviationFit, LensModel, DEVIATION_COEFFS};
pub use reproject::{raw_direction, raw_position, undistort, Reprojection};

/// Mean 8-bit intensity at or above which a pixel counts as sun.
pub const SUN_THRESHOLD: u16 = 245;

/// Residual spread (degrees) above which an azimuth calibration is flagged.
pub const CALIBRATION_SPREAD_WARN_DEG: f64 = 5.0;

pub const MIN_CALIBRATION_PAIRS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub timestamp: DateTime<Utc>,
    pub camera_id: String,
}

impl FrameMeta {
    pub fn new(timestamp: DateTime<Utc>, camera_id: impl Into<String>) -> Self {
        Self {
            timestamp,
            camera_id: camera_id.into(),
        }
    }
}

impl Default for FrameMeta {
    fn default() -> Self {
        Self {
            timestamp: DateTime::<Utc>::UNIX_EPOCH,
            camera_id: String::new(),
        }
    }
}

/// 8-bit RGB frame as delivered by the camera, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
    pub meta: FrameMeta,
}

impl RawImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::shape("raw image", width * height, pixels.len()));
        }
        Ok(Self {
            width,
            height,
            pixels,
            meta: FrameMeta::default(),
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![rgb; width * height],
            meta: FrameMeta::default(),
        }
    }

    pub fn with_meta(mut self, meta: FrameMeta) -> Self {
        self.meta = meta;
        self
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn read_png(path: &Path, meta: FrameMeta) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0).collect();
        Ok(Self {
            width: w as usize,
            height: h as usize,
            pixels,
            meta,
        })
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let flat: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, flat)
            .ok_or_else(|| Error::shape("png encode", self.width * self.height * 3, 0))?;
        buf.save(path)?;
        Ok(())
    }
}

/// Viewing direction in the horizontal frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkyDir {
    pub zenith_deg: f64,
    pub azimuth_deg: f64,
}

impl SkyDir {
    /// Great-circle separation in radians.
    pub fn angular_distance(&self, other: &SkyDir) -> f64 {
        let (z1, a1) = (self.zenith_deg.to_radians(), self.azimuth_deg.to_radians());
        let (z2, a2) = (other.zenith_deg.to_radians(), other.azimuth_deg.to_radians());
        let c = z1.cos() * z2.cos() + z1.sin() * z2.sin() * (a1 - a2).cos();
        c.clamp(-1.0, 1.0).acos()
    }

    /// Horizontal displacement per unit height: `tan(zenith)` along the azimuth, as (east, north).
    pub fn ground_offset_per_height(&self) -> (f64, f64) {
        let t = self.zenith_deg.to_radians().tan();
        let a = self.azimuth_deg.to_radians();
        (t * a.sin(), t * a.cos())
    }

    pub fn from_ground_offset(east: f64, north: f64, height: f64) -> SkyDir {
        let zenith_deg = (east.hypot(north) / height).atan().to_degrees();
        let azimuth_deg = east.atan2(north).to_degrees().rem_euclid(360.0);
        SkyDir {
            zenith_deg,
            azimuth_deg,
        }
    }
}

/// Square equidistant grid used by reprojected sky images: normalized radius
/// 1 at the FOV zenith limit, north up, east right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkyGrid {
    pub size: usize,
    pub fov_deg: f64,
}

impl SkyGrid {
    pub fn new(size: usize, fov_deg: f64) -> Self {
        Self { size, fov_deg }
    }

    #[inline]
    fn half(&self) -> f64 {
        self.size as f64 / 2.0
    }

    /// Normalized (east, north) offset of a continuous image position.
    #[inline]
    pub fn normalized(&self, x: f64, y: f64) -> (f64, f64) {
        let h = self.half();
        ((x - h) / h, (h - y) / h)
    }

    pub fn is_valid(&self, col: usize, row: usize) -> bool {
        let (e, n) = self.normalized(col as f64 + 0.5, row as f64 + 0.5);
        e * e + n * n <= 1.0
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.size * self.size)
            .map(|i| self.is_valid(i % self.size, i / self.size))
            .collect()
    }

    /// Direction through a continuous image position (pixel centres at `i + 0.5`).
    pub fn dir_at(&self, x: f64, y: f64) -> SkyDir {
        let (e, n) = self.normalized(x, y);
        let rho = e.hypot(n);
        SkyDir {
            zenith_deg: rho * self.fov_deg,
            azimuth_deg: e.atan2(n).to_degrees().rem_euclid(360.0),
        }
    }

    pub fn pixel_dir(&self, col: usize, row: usize) -> Option<SkyDir> {
        self.is_valid(col, row)
            .then(|| self.dir_at(col as f64 + 0.5, row as f64 + 0.5))
    }

    /// Continuous image position of a direction.
    pub fn position_of(&self, dir: &SkyDir) -> (f64, f64) {
        let rho = dir.zenith_deg / self.fov_deg;
        let a = dir.azimuth_deg.to_radians();
        let h = self.half();
        (h + rho * h * a.sin(), h - rho * h * a.cos())
    }
}

/// Reprojected, north-aligned sky frame with channels in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SkyImage {
    pub grid: SkyGrid,
    pub pixels: Vec<[f32; 3]>,
    pub valid: Vec<bool>,
    pub meta: FrameMeta,
}

impl SkyImage {
    /// Builds an image from pixels; pixels outside the FOV disk are forced to black.
    pub fn from_pixels(grid: SkyGrid, mut pixels: Vec<[f32; 3]>, meta: FrameMeta) -> Result<Self> {
        if pixels.len() != grid.size * grid.size {
            return Err(Error::shape("sky image", grid.size * grid.size, pixels.len()));
        }
        let valid = grid.mask();
        for (p, &v) in pixels.iter_mut().zip(&valid) {
            if !v {
                *p = [0.0; 3];
            }
        }
        Ok(Self {
            grid,
            pixels,
            valid,
            meta,
        })
    }

    pub fn uniform(grid: SkyGrid, rgb: [f32; 3]) -> Self {
        Self::from_pixels(grid, vec![rgb; grid.size * grid.size], FrameMeta::default())
            .expect("uniform image has matching size")
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.grid.size
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Unweighted channel mean per pixel.
    pub fn gray(&self) -> Vec<f32> {
        self.pixels.iter().map(|p| (p[0] + p[1] + p[2]) / 3.0).collect()
    }

    pub fn to_raw(&self) -> RawImage {
        let pixels = self
            .pixels
            .iter()
            .map(|p| p.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect();
        RawImage {
            width: self.size(),
            height: self.size(),
            pixels,
            meta: self.meta.clone(),
        }
    }

    /// Converts an 8-bit frame (value / 255) onto the given grid.
    pub fn from_raw(raw: &RawImage, fov_deg: f64) -> Result<Self> {
        if raw.width != raw.height {
            return Err(Error::shape("sky image", "square frame", format!("{}x{}", raw.width, raw.height)));
        }
        let grid = SkyGrid::new(raw.width, fov_deg);
        let pixels = raw
            .pixels
            .iter()
            .map(|p| p.map(|c| f32::from(c) / 255.0))
            .collect();
        Self::from_pixels(grid, pixels, raw.meta.clone())
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        self.to_raw().write_png(path)
    }

    pub fn read_png(path: &Path, fov_deg: f64, meta: FrameMeta) -> Result<Self> {
        Self::from_raw(&RawImage::read_png(path, meta)?, fov_deg)
    }
}

/// Sun centroid in pixel-index coordinates (column, row).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SunPixel {
    pub x: f64,
    pub y: f64,
    pub count: usize,
}

/// Centre of mass of all pixels whose mean 8-bit intensity reaches 245.
pub fn detect_sun(image: &RawImage) -> Option<SunPixel> {
    let threshold = 3 * SUN_THRESHOLD;
    let (mut sx, mut sy, mut n) = (0.0_f64, 0.0_f64, 0usize);
    for (i, p) in image.pixels.iter().enumerate() {
        let sum = u16::from(p[0]) + u16::from(p[1]) + u16::from(p[2]);
        if sum >= threshold {
            sx += (i % image.width) as f64;
            sy += (i / image.width) as f64;
            n += 1;
        }
    }
    (n > 0).then(|| SunPixel {
        x: sx / n as f64,
        y: sy / n as f64,
        count: n,
    })
}

/// Image-frame azimuth (clockwise from image-up) of a pixel-index position.
pub fn image_azimuth_deg(x: f64, y: f64, width: usize, height: usize) -> f64 {
    let dx = x + 0.5 - width as f64 / 2.0;
    let dy = height as f64 / 2.0 - (y + 0.5);
    dx.atan2(dy).to_degrees().rem_euclid(360.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SunObservation {
    pub sun: SunPixel,
    pub ephemeris_azimuth_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraCalibration {
    /// Added to image-frame azimuths to obtain true azimuths, in (-180, 180].
    pub azimuth_correction_deg: f64,
    pub residual_spread_deg: f64,
    pub spread_warning: bool,
}

impl Default for CameraCalibration {
    fn default() -> Self {
        Self {
            azimuth_correction_deg: 0.0,
            residual_spread_deg: 0.0,
            spread_warning: false,
        }
    }
}

impl CameraCalibration {
    pub fn fixed(azimuth_correction_deg: f64) -> Self {
        Self {
            azimuth_correction_deg: wrap_signed_deg(azimuth_correction_deg),
            ..Self::default()
        }
    }
}

pub(crate) fn wrap_signed_deg(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Circular-mean rotation between detected sun azimuths and ephemeris azimuths.
pub fn calibrate_azimuth(
    observations: &[SunObservation],
    width: usize,
    height: usize,
) -> Result<CameraCalibration> {
    if observations.len() < MIN_CALIBRATION_PAIRS {
        return Err(Error::InsufficientData(format!(
            "azimuth calibration needs at least {MIN_CALIBRATION_PAIRS} sun observations, got {}",
            observations.len()
        )));
    }
    let (mut s, mut c) = (0.0_f64, 0.0_f64);
    for o in observations {
        let off = (o.ephemeris_azimuth_deg - image_azimuth_deg(o.sun.x, o.sun.y, width, height)).to_radians();
        s += off.sin();
        c += off.cos();
    }
    let n = observations.len() as f64;
    let resultant = (s.hypot(c) / n).min(1.0);
    let residual_spread_deg = (-2.0 * resultant.ln()).max(0.0).sqrt().to_degrees();
    let correction = wrap_signed_deg(s.atan2(c).to_degrees());
    let spread_warning = residual_spread_deg > CALIBRATION_SPREAD_WARN_DEG;
    if spread_warning {
        log::warn!("azimuth calibration residual spread {residual_spread_deg:.2} deg exceeds {CALIBRATION_SPREAD_WARN_DEG} deg");
    }
    Ok(CameraCalibration {
        azimuth_correction_deg: correction,
        residual_spread_deg,
        spread_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(img: &mut RawImage, cx: f64, cy: f64, r: f64) {
        for y in 0..img.height {
            for x in 0..img.width {
                if (x as f64 - cx).hypot(y as f64 - cy) <= r {
                    img.pixels[y * img.width + x] = [255, 255, 255];
                }
            }
        }
    }

    #[test]
    fn sun_centroid_of_disk() {
        let mut img = RawImage::filled(800, 800, [20, 40, 90]);
        disk(&mut img, 300.0, 500.0, 5.5);
        let s = detect_sun(&img).unwrap();
        assert!((s.x - 300.0).abs() <= 0.5 && (s.y - 500.0).abs() <= 0.5);
    }

    #[test]
    fn no_sun_in_dark_frame() {
        assert!(detect_sun(&RawImage::filled(64, 64, [10, 10, 10])).is_none());
    }

    #[test]
    fn two_disks_combine() {
        let mut img = RawImage::filled(400, 400, [0, 0, 0]);
        disk(&mut img, 100.0, 100.0, 5.0);
        disk(&mut img, 300.0, 300.0, 5.0);
        let s = detect_sun(&img).unwrap();
        assert!((s.x - 200.0).abs() < 1e-9 && (s.y - 200.0).abs() < 1e-9);
    }

    #[test]
    fn threshold_is_mean_of_channels() {
        let mut img = RawImage::filled(8, 8, [0, 0, 0]);
        img.pixels[9] = [255, 245, 235];
        img.pixels[10] = [255, 245, 234];
        let s = detect_sun(&img).unwrap();
        assert_eq!(s.count, 1);
        assert_eq!((s.x, s.y), (1.0, 1.0));
    }

    #[test]
    fn grid_roundtrip_and_mask() {
        let g = SkyGrid::new(100, 90.0);
        let d = g.pixel_dir(50, 50).unwrap();
        assert!(d.zenith_deg < 1.3);
        let (x, y) = g.position_of(&SkyDir { zenith_deg: 45.0, azimuth_deg: 90.0 });
        assert!((x - 75.0).abs() < 1e-9 && (y - 50.0).abs() < 1e-9);
        assert!(!g.is_valid(0, 0));
        let frac = g.mask().iter().filter(|v| **v).count() as f64 / 10_000.0;
        assert!((frac - std::f64::consts::FRAC_PI_4).abs() < 0.01);
    }

    #[test]
    fn calibration_needs_ten_pairs() {
        let obs = vec![
            SunObservation {
                sun: SunPixel { x: 10.0, y: 10.0, count: 1 },
                ephemeris_azimuth_deg: 0.0,
            };
            9
        ];
        assert!(calibrate_azimuth(&obs, 100, 100).is_err());
    }

    #[test]
    fn wrap_signed() {
        assert_eq!(wrap_signed_deg(190.0), -170.0);
        assert_eq!(wrap_signed_deg(-180.0), 180.0);
        assert_eq!(wrap_signed_deg(6.5), 6.5);
    }
}
