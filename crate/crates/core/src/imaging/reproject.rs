use super::{CameraCalibration, LensModel, RawImage, SkyDir, SkyGrid, SkyImage};
use crate::error::{Error, Result};

/// Precomputed fisheye-to-grid sampling map for one camera geometry.
///
/// Each output pixel inside the FOV disk holds up to four bilinear taps into
/// the raw frame. Taps whose pixel centre falls outside the raw FOV disk are
/// dropped and the remaining weights renormalized, so the source is never
/// read outside the lens circle.
#[derive(Debug, Clone)]
pub struct Reprojection {
    grid: SkyGrid,
    raw_width: usize,
    raw_height: usize,
    taps: Vec<Vec<(u32, f32)>>,
}

impl Reprojection {
    pub fn new(
        lens: &LensModel,
        calibration: &CameraCalibration,
        raw_width: usize,
        raw_height: usize,
        out_size: usize,
    ) -> Result<Self> {
        Self::with_fov(lens, calibration, raw_width, raw_height, out_size, lens.theta_fov_deg)
    }

    /// As [`Reprojection::new`] with a sky grid narrower than the lens FOV.
    pub fn with_fov(
        lens: &LensModel,
        calibration: &CameraCalibration,
        raw_width: usize,
        raw_height: usize,
        out_size: usize,
        grid_fov_deg: f64,
    ) -> Result<Self> {
        lens.validate()?;
        if !(grid_fov_deg > 0.0 && grid_fov_deg <= lens.theta_fov_deg) {
            return Err(Error::Config(format!(
                "grid FOV {grid_fov_deg} must lie in (0, {}]",
                lens.theta_fov_deg
            )));
        }
        if lens.image_radius_px > raw_width.min(raw_height) as f64 / 2.0 + 1e-9 {
            return Err(Error::Config(format!(
                "lens radius {} exceeds half of the {}x{} frame",
                lens.image_radius_px, raw_width, raw_height
            )));
        }
        let grid = SkyGrid::new(out_size, grid_fov_deg);
        let (cx, cy) = (raw_width as f64 / 2.0, raw_height as f64 / 2.0);
        let r2 = lens.image_radius_px * lens.image_radius_px;
        let inside = |i: i64, j: i64| -> bool {
            if i < 0 || j < 0 || i >= raw_width as i64 || j >= raw_height as i64 {
                return false;
            }
            let dx = i as f64 + 0.5 - cx;
            let dy = j as f64 + 0.5 - cy;
            dx * dx + dy * dy <= r2
        };
        let mut taps = Vec::with_capacity(out_size * out_size);
        for row in 0..out_size {
            for col in 0..out_size {
                let Some(dir) = grid.pixel_dir(col, row) else {
                    taps.push(Vec::new());
                    continue;
                };
                let (x, y) = raw_position(lens, calibration, raw_width, raw_height, &dir);
                let (u, v) = (x - 0.5, y - 0.5);
                let (i0, j0) = (u.floor() as i64, v.floor() as i64);
                let (fx, fy) = (u - i0 as f64, v - j0 as f64);
                let mut t = Vec::with_capacity(4);
                for (di, dj, w) in [
                    (0, 0, (1.0 - fx) * (1.0 - fy)),
                    (1, 0, fx * (1.0 - fy)),
                    (0, 1, (1.0 - fx) * fy),
                    (1, 1, fx * fy),
                ] {
                    let (i, j) = (i0 + di, j0 + dj);
                    if w > 0.0 && inside(i, j) {
                        t.push(((j as usize * raw_width + i as usize) as u32, w));
                    }
                }
                let total: f64 = t.iter().map(|(_, w)| w).sum();
                taps.push(
                    t.into_iter()
                        .map(|(idx, w)| (idx, (w / total) as f32))
                        .collect(),
                );
            }
        }
        Ok(Self {
            grid,
            raw_width,
            raw_height,
            taps,
        })
    }

    pub fn grid(&self) -> SkyGrid {
        self.grid
    }

    pub fn apply(&self, raw: &RawImage) -> Result<SkyImage> {
        if raw.width != self.raw_width || raw.height != self.raw_height {
            return Err(Error::shape(
                "undistort",
                format!("{}x{}", self.raw_width, self.raw_height),
                format!("{}x{}", raw.width, raw.height),
            ));
        }
        let pixels = self
            .taps
            .iter()
            .map(|taps| {
                let mut acc = [0.0_f32; 3];
                for &(idx, w) in taps {
                    let p = raw.pixels[idx as usize];
                    for c in 0..3 {
                        acc[c] += w * f32::from(p[c]) / 255.0;
                    }
                }
                acc
            })
            .collect();
        SkyImage::from_pixels(self.grid, pixels, raw.meta.clone())
    }
}

/// Continuous raw-frame position (pixel centres at `i + 0.5`) of a true-sky direction.
pub fn raw_position(
    lens: &LensModel,
    calibration: &CameraCalibration,
    raw_width: usize,
    raw_height: usize,
    dir: &SkyDir,
) -> (f64, f64) {
    let rho = lens.radius_of_zenith(dir.zenith_deg);
    let az = (dir.azimuth_deg - calibration.azimuth_correction_deg).to_radians();
    let r = rho * lens.image_radius_px;
    (
        raw_width as f64 / 2.0 + r * az.sin(),
        raw_height as f64 / 2.0 - r * az.cos(),
    )
}

/// True-sky direction of a continuous raw-frame position.
pub fn raw_direction(
    lens: &LensModel,
    calibration: &CameraCalibration,
    raw_width: usize,
    raw_height: usize,
    x: f64,
    y: f64,
) -> SkyDir {
    let dx = x - raw_width as f64 / 2.0;
    let dy = raw_height as f64 / 2.0 - y;
    let rho = dx.hypot(dy) / lens.image_radius_px;
    SkyDir {
        zenith_deg: lens.zenith_deg(rho),
        azimuth_deg: (dx.atan2(dy).to_degrees() + calibration.azimuth_correction_deg).rem_euclid(360.0),
    }
}

/// Reprojects a raw fisheye frame onto a north-aligned equidistant grid.
pub fn undistort(
    raw: &RawImage,
    lens: &LensModel,
    calibration: &CameraCalibration,
    out_size: usize,
) -> Result<SkyImage> {
    Reprojection::new(lens, calibration, raw.width, raw.height, out_size)?.apply(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn centre_is_fixed_point() {
        let lens = LensModel::equidistant(90.0, 200.0);
        let cal = CameraCalibration::fixed(17.0);
        let d = raw_direction(&lens, &cal, 400, 400, 200.0, 200.0);
        assert_eq!(d.zenith_deg, 0.0);
        let (x, y) = raw_position(&lens, &cal, 400, 400, &SkyDir { zenith_deg: 0.0, azimuth_deg: 123.0 });
        assert!((x - 200.0).abs() < 1e-12 && (y - 200.0).abs() < 1e-12);
    }

    #[test]
    fn half_radius_carries_45_degrees() {
        let lens = LensModel::equidistant(90.0, 200.0);
        let d = raw_direction(&lens, &CameraCalibration::default(), 400, 400, 300.0, 200.0);
        assert!((d.zenith_deg - 45.0).abs() < 1e-12);
        assert!((d.azimuth_deg - 90.0).abs() < 1e-12);
    }

    #[test]
    fn forward_inverse_roundtrip() {
        let mut lens = LensModel::equidistant(88.0, 480.0);
        lens.deviation_poly = [0.0, 0.8, -1.5, 2.0, -1.0, 0.3, 0.0, -0.05];
        let cal = CameraCalibration::fixed(-9.7);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0.0_f64;
        for _ in 0..500 {
            let r = rng.gen_range(0.0..0.98) * 480.0;
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let (x, y) = (480.0 + r * a.sin(), 480.0 - r * a.cos());
            let d = raw_direction(&lens, &cal, 960, 960, x, y);
            let (x2, y2) = raw_position(&lens, &cal, 960, 960, &d);
            worst = worst.max((x - x2).hypot(y - y2));
        }
        assert!(worst < 0.5, "worst round trip error {worst}");
    }

    #[test]
    fn invalid_output_is_black_and_masked() {
        let raw = RawImage::filled(200, 200, [200, 100, 50]);
        let lens = LensModel::equidistant(90.0, 100.0);
        let sky = undistort(&raw, &lens, &CameraCalibration::default(), 64).unwrap();
        for (p, v) in sky.pixels.iter().zip(&sky.valid) {
            if *v {
                assert!((p[0] - 200.0 / 255.0).abs() < 1e-5);
            } else {
                assert_eq!(*p, [0.0; 3]);
            }
        }
    }

    #[test]
    fn never_reads_outside_lens_circle() {
        // outside the lens circle the frame is pure red; nothing red may leak in
        let mut raw = RawImage::filled(120, 120, [255, 0, 0]);
        for y in 0..120 {
            for x in 0..120 {
                if (x as f64 + 0.5 - 60.0).hypot(y as f64 + 0.5 - 60.0) <= 50.0 {
                    raw.pixels[y * 120 + x] = [0, 0, 255];
                }
            }
        }
        let lens = LensModel::equidistant(90.0, 50.0);
        let sky = undistort(&raw, &lens, &CameraCalibration::fixed(30.0), 100).unwrap();
        assert!(sky.pixels.iter().all(|p| p[0] == 0.0));
    }

    #[test]
    fn rotation_is_applied_in_angle_space() {
        // a bright marker due image-up in the raw frame appears at the corrected azimuth
        let mut raw = RawImage::filled(200, 200, [0, 0, 0]);
        for y in 40..46 {
            for x in 97..103 {
                raw.pixels[y * 200 + x] = [255, 255, 255];
            }
        }
        let lens = LensModel::equidistant(90.0, 100.0);
        let sky = undistort(&raw, &lens, &CameraCalibration::fixed(90.0), 200).unwrap();
        let sun = super::super::detect_sun(&sky.to_raw()).unwrap();
        let az = super::super::image_azimuth_deg(sun.x, sun.y, 200, 200);
        assert!((az - 90.0).abs() < 2.0, "azimuth {az}");
    }
}
