//! Synthetic stereo sky scenes with per-stage ground truth.
//!
//! A single cloud layer sits on a horizontal plane. Its texture is fractal
//! value noise parameterized by camera-1 sky-grid coordinates (on a 100 px
//! reference grid) and advected by a constant wind in reference pixels per
//! frame, so the true camera-1 flow is exactly the wind. Camera 2 sees the
//! same plane through the baseline parallax.

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{raw_direction, CameraCalibration, FrameMeta, LensModel, RawImage, SkyDir, SkyGrid, SkyImage};
use crate::motion::FlowField;
use crate::solar::{clear_sky_ghi, solar_position, ClearSkyModel, GeoLocation, SolarGeometry};
use crate::stereo_cbh::StereoRig;

/// Reference grid size on which wind vectors and texture scales are defined.
pub const REFERENCE_SIZE: usize = 100;
pub const SUN_DISK_RADIUS_DEG: f64 = 1.2;
pub const OCCLUSION_RADIUS_DEG: f64 = 1.5;
pub const CBH_RANGE_M: (f64, f64) = (500.0, 10_000.0);

const SKY_ZENITH: [f64; 3] = [0.20, 0.40, 0.85];
const SKY_HORIZON: [f64; 3] = [0.45, 0.60, 0.85];
const EDGE_HALF_WIDTH: f64 = 0.012;
const BASE_PERIOD_PX: f64 = 24.0;
const OCTAVES: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Camera {
    Cam1,
    Cam2,
}

impl Camera {
    pub fn id(self) -> &'static str {
        match self {
            Camera::Cam1 => "cam1",
            Camera::Cam2 => "cam2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub name: String,
    pub cloud_fraction_target: f64,
    pub cloud_layer_height_m: f64,
    /// Wind in reference-grid pixels per frame, (x right, y down).
    pub wind_px_per_frame: (f64, f64),
    pub seed: u64,
    pub start: DateTime<Utc>,
    pub cadence_s: i64,
    pub frame_count: usize,
    /// Side of the reprojected sky grid frames.
    pub image_size: usize,
    pub fov_deg: f64,
    pub rig: StereoRig,
    /// Sun-occlusion attenuation of GHI.
    pub attenuation: f64,
    /// Raw fisheye frame side; the lens radius is half of it.
    pub raw_size: usize,
    pub lens: LensModel,
    /// Camera mounting rotation: image-frame azimuth + correction = true azimuth.
    pub mount_rotation_deg: [f64; 2],
}

/// Deviation of the synthetic fisheye lens from equidistant, vanishing at both ends.
pub fn synthetic_lens(raw_size: usize) -> LensModel {
    let mut lens = LensModel::equidistant(90.0, raw_size as f64 / 2.0);
    lens.deviation_poly[1] = 1.5;
    lens.deviation_poly[2] = -1.5;
    lens
}

pub fn default_site() -> GeoLocation {
    GeoLocation {
        latitude_deg: 59.9724,
        longitude_deg: 11.0524,
    }
}

impl SceneSpec {
    pub fn new(name: impl Into<String>, cloud_fraction_target: f64, cloud_layer_height_m: f64, seed: u64) -> Self {
        let rig = StereoRig::from_offset(default_site(), 1120.0 * 0.8, 1120.0 * 0.6)
            .expect("default rig is valid");
        Self {
            name: name.into(),
            cloud_fraction_target,
            cloud_layer_height_m,
            wind_px_per_frame: (2.0, 0.5),
            seed,
            start: Utc.with_ymd_and_hms(2023, 6, 1, 10, 0, 0).unwrap(),
            cadence_s: 10,
            frame_count: 10,
            image_size: REFERENCE_SIZE,
            fov_deg: 80.0,
            rig,
            attenuation: 0.75,
            raw_size: 240,
            lens: synthetic_lens(240),
            mount_rotation_deg: [0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.cloud_fraction_target) {
            return Err(Error::Config(format!(
                "cloud fraction target {} outside [0, 1]",
                self.cloud_fraction_target
            )));
        }
        if !(CBH_RANGE_M.0..=CBH_RANGE_M.1).contains(&self.cloud_layer_height_m) {
            return Err(Error::Config(format!(
                "cloud layer height {} m outside the CBH search range",
                self.cloud_layer_height_m
            )));
        }
        if self.frame_count < 2 {
            return Err(Error::Config("a scene needs at least 2 frames".into()));
        }
        if self.image_size < 16 || self.raw_size < 16 {
            return Err(Error::Config("scene image sizes must be at least 16 px".into()));
        }
        if !(self.wind_px_per_frame.0.is_finite() && self.wind_px_per_frame.1.is_finite()) {
            return Err(Error::Config("wind vector must be finite".into()));
        }
        if !(self.attenuation > 0.0 && self.attenuation <= 1.0) {
            return Err(Error::Config("attenuation must lie in (0, 1]".into()));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 90.0) || self.cadence_s <= 0 {
            return Err(Error::Config("invalid scene FOV or cadence".into()));
        }
        if self.rig.baseline_m() <= 0.0 {
            return Err(Error::Config("stereo baseline must be positive".into()));
        }
        self.lens.validate()
    }

    pub fn timestamp(&self, frame: usize) -> DateTime<Utc> {
        self.start + Duration::seconds(self.cadence_s * frame as i64)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = splitmix(seed ^ splitmix((ix as u64).wrapping_mul(0x1F1F_1F1F) ^ (iy as u64).rotate_left(32)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (fade(x - x0), fade(y - y0));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let a = lattice(seed, ix, iy);
    let b = lattice(seed, ix + 1, iy);
    let c = lattice(seed, ix, iy + 1);
    let d = lattice(seed, ix + 1, iy + 1);
    (a + (b - a) * fx) + ((c + (d - c) * fx) - (a + (b - a) * fx)) * fy
}

/// Octave value noise in [0, 1] at reference-grid coordinates.
pub fn fractal_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (mut sum, mut norm, mut amp, mut freq) = (0.0, 0.0, 1.0, 1.0 / BASE_PERIOD_PX);
    for o in 0..OCTAVES {
        sum += amp * value_noise(splitmix(seed.wrapping_add(u64::from(o))), x * freq, y * freq);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    sum / norm
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i] + (b[i] - a[i]) * t)
}

/// A validated spec with its fitted cloud threshold, ready to render.
#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    /// Noise level above which the layer is cloud; infinite for the all-sky and all-cloud limits.
    pub threshold: f64,
    reference: SkyGrid,
    baseline: (f64, f64),
    solar: Vec<SolarGeometry>,
}

impl Scene {
    pub fn new(spec: SceneSpec) -> Result<Self> {
        spec.validate()?;
        let reference = SkyGrid::new(REFERENCE_SIZE, spec.fov_deg);
        let solar = (0..spec.frame_count)
            .map(|f| solar_position(spec.timestamp(f), &spec.rig.location_cam1))
            .collect();
        let mut scene = Self {
            baseline: spec.rig.baseline_vector_m(),
            threshold: f64::INFINITY,
            reference,
            solar,
            spec,
        };
        scene.threshold = scene.fit_threshold();
        Ok(scene)
    }

    /// Bisection on the noise threshold so that the cloudy share of camera-1
    /// valid pixels, pooled over (up to 20) frames, matches the target.
    fn fit_threshold(&self) -> f64 {
        let target = self.spec.cloud_fraction_target;
        if target <= 0.0 {
            return f64::INFINITY;
        }
        if target >= 1.0 {
            return f64::NEG_INFINITY;
        }
        let grid = SkyGrid::new(self.spec.image_size, self.spec.fov_deg);
        let n = self.spec.frame_count;
        let step = (n / 20).max(1);
        let mut samples = Vec::new();
        for f in (0..n).step_by(step) {
            for row in 0..grid.size {
                for col in 0..grid.size {
                    if let Some(d) = grid.pixel_dir(col, row) {
                        samples.push(self.noise_cam1(&d, f));
                    }
                }
            }
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let frac = samples.iter().filter(|&&v| v > mid).count() as f64 / samples.len() as f64;
            if frac > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn sun(&self, frame: usize) -> SkyDir {
        let g = self.solar[frame];
        SkyDir {
            zenith_deg: g.zenith_deg,
            azimuth_deg: g.azimuth_deg,
        }
    }

    pub fn solar_geometry(&self, frame: usize) -> SolarGeometry {
        self.solar[frame]
    }

    fn texture_coords(&self, dir1: &SkyDir, frame: usize) -> (f64, f64) {
        let (x, y) = self.reference.position_of(dir1);
        let (u, v) = self.spec.wind_px_per_frame;
        (x - u * frame as f64, y - v * frame as f64)
    }

    fn noise_cam1(&self, dir1: &SkyDir, frame: usize) -> f64 {
        let (x, y) = self.texture_coords(dir1, frame);
        fractal_noise(self.spec.seed, x, y)
    }

    /// Camera-1 direction of the cloud-plane point seen by `camera` along `dir`.
    fn to_cam1(&self, camera: Camera, dir: &SkyDir) -> Option<SkyDir> {
        match camera {
            Camera::Cam1 => Some(*dir),
            Camera::Cam2 => {
                if dir.zenith_deg >= 89.0 {
                    return None;
                }
                let h = self.spec.cloud_layer_height_m;
                let (te, tn) = dir.ground_offset_per_height();
                Some(SkyDir::from_ground_offset(
                    h * te + self.baseline.0,
                    h * tn + self.baseline.1,
                    h,
                ))
            }
        }
    }

    fn alpha_of(&self, n: f64) -> f64 {
        if self.threshold == f64::INFINITY {
            0.0
        } else if self.threshold == f64::NEG_INFINITY {
            1.0
        } else {
            smoothstep(self.threshold - EDGE_HALF_WIDTH, self.threshold + EDGE_HALF_WIDTH, n)
        }
    }

    /// True iff the cloud layer covers `dir` as seen from `camera`.
    pub fn is_cloud(&self, camera: Camera, dir: &SkyDir, frame: usize) -> bool {
        self.to_cam1(camera, dir)
            .is_some_and(|d1| self.noise_cam1(&d1, frame) > self.threshold)
    }

    fn sample(&self, camera: Camera, dir: &SkyDir, frame: usize) -> [f64; 3] {
        let sun = self.sun(frame);
        let sun_dist = dir.angular_distance(&sun).to_degrees();
        let t = (dir.zenith_deg / 90.0).clamp(0.0, 1.0).powf(1.5);
        let sky = lerp3(SKY_ZENITH, SKY_HORIZON, t);
        let sky = lerp3(sky, [1.0; 3], 0.3 * (-sun_dist / 6.0).exp());

        let (alpha, cloud) = match self.to_cam1(camera, dir) {
            Some(d1) => {
                let (x, y) = self.texture_coords(&d1, frame);
                let n = fractal_noise(self.spec.seed, x, y);
                let alpha = self.alpha_of(n);
                let detail = fractal_noise(self.spec.seed ^ 0xD37A_11, 2.0 * x, 2.0 * y);
                let depth = if self.threshold.is_finite() {
                    ((n - self.threshold) / 0.2).clamp(0.0, 1.0)
                } else {
                    n
                };
                let g = 0.5 + 0.25 * depth + 0.2 * detail;
                (alpha, [g * 0.96, g * 0.98, g * 1.02])
            }
            None => (0.0, [0.0; 3]),
        };
        let mut rgb = lerp3(sky, cloud, alpha);
        if sun_dist <= SUN_DISK_RADIUS_DEG {
            rgb = lerp3(rgb, [1.0; 3], 1.0 - alpha);
        }
        rgb.map(|c| c.clamp(0.0, 1.0))
    }

    /// Reprojected frame rendered directly on a sky grid of the given side.
    pub fn render_sky(&self, camera: Camera, frame: usize, size: usize) -> SkyImage {
        let grid = SkyGrid::new(size, self.spec.fov_deg);
        let pixels = (0..size * size)
            .map(|i| match grid.pixel_dir(i % size, i / size) {
                Some(d) => self.sample(camera, &d, frame).map(|c| c as f32),
                None => [0.0; 3],
            })
            .collect();
        let meta = FrameMeta::new(self.spec.timestamp(frame), camera.id());
        SkyImage::from_pixels(grid, pixels, meta).expect("rendered grid has matching size")
    }

    pub fn calibration(&self, camera: Camera) -> CameraCalibration {
        let k = match camera {
            Camera::Cam1 => 0,
            Camera::Cam2 => 1,
        };
        CameraCalibration::fixed(self.spec.mount_rotation_deg[k])
    }

    /// Raw 8-bit fisheye frame through the scene lens and mounting rotation.
    pub fn render_raw(&self, camera: Camera, frame: usize) -> RawImage {
        let n = self.spec.raw_size;
        let lens = &self.spec.lens;
        let cal = self.calibration(camera);
        let r2 = lens.image_radius_px * lens.image_radius_px;
        let pixels = (0..n * n)
            .map(|i| {
                let (x, y) = ((i % n) as f64 + 0.5, (i / n) as f64 + 0.5);
                let (dx, dy) = (x - n as f64 / 2.0, y - n as f64 / 2.0);
                if dx * dx + dy * dy > r2 {
                    return [0, 0, 0];
                }
                let dir = raw_direction(lens, &cal, n, n, x, y);
                self.sample(camera, &dir, frame)
                    .map(|c| (c * 255.0).round() as u8)
            })
            .collect();
        RawImage::new(n, n, pixels)
            .expect("rendered frame has matching size")
            .with_meta(FrameMeta::new(self.spec.timestamp(frame), camera.id()))
    }

    pub fn cloud_mask(&self, camera: Camera, frame: usize, size: usize) -> Vec<bool> {
        let grid = SkyGrid::new(size, self.spec.fov_deg);
        (0..size * size)
            .map(|i| {
                grid.pixel_dir(i % size, i / size)
                    .is_some_and(|d| self.is_cloud(camera, &d, frame))
            })
            .collect()
    }

    /// Opacity-weighted share of 37 directions within 1.5 deg of the sun that the layer covers.
    pub fn sun_occluded_fraction(&self, frame: usize) -> f64 {
        let sun = self.sun(frame);
        let mut total = 0.0;
        let mut count = 0usize;
        for ring in 0..=3 {
            let r = OCCLUSION_RADIUS_DEG * ring as f64 / 3.0;
            let spokes = if ring == 0 { 1 } else { 12 };
            for k in 0..spokes {
                let phi = std::f64::consts::TAU * k as f64 / spokes as f64;
                let dir = offset_dir(&sun, r, phi);
                let a = self
                    .to_cam1(Camera::Cam1, &dir)
                    .map_or(0.0, |d1| self.alpha_of(self.noise_cam1(&d1, frame)));
                total += a;
                count += 1;
            }
        }
        total / count as f64
    }
}

/// Direction at angular distance `r_deg` from `center`, position angle `phi`.
fn offset_dir(center: &SkyDir, r_deg: f64, phi: f64) -> SkyDir {
    if r_deg == 0.0 {
        return *center;
    }
    let (z, a) = (center.zenith_deg.to_radians(), center.azimuth_deg.to_radians());
    let r = r_deg.to_radians();
    // unit vector (east, north, up) of the centre and two tangent vectors
    let c = [z.sin() * a.sin(), z.sin() * a.cos(), z.cos()];
    let e1 = [a.cos(), -a.sin(), 0.0];
    let e2 = [
        c[1] * e1[2] - c[2] * e1[1],
        c[2] * e1[0] - c[0] * e1[2],
        c[0] * e1[1] - c[1] * e1[0],
    ];
    let v: [f64; 3] = [0, 1, 2].map(|i| c[i] * r.cos() + (e1[i] * phi.cos() + e2[i] * phi.sin()) * r.sin());
    SkyDir {
        zenith_deg: v[2].clamp(-1.0, 1.0).acos().to_degrees(),
        azimuth_deg: v[0].atan2(v[1]).to_degrees().rem_euclid(360.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub timestamps: Vec<DateTime<Utc>>,
    /// Camera-1 cloud masks on the scene grid.
    pub cloud_masks: Vec<Vec<bool>>,
    pub cloud_masks_cam2: Vec<Vec<bool>>,
    /// Constant camera-1 flow in scene-grid pixels per frame.
    pub flow_px_per_frame: (f64, f64),
    pub cbh_m: f64,
    /// Sun position on the camera-1 scene grid (pixel-index coordinates).
    pub sun_pixels: Vec<(f64, f64)>,
    pub sun_occluded_fraction: Vec<f64>,
    pub ghi_clear: Vec<f64>,
    pub ghi: Vec<f64>,
}

impl SceneTruth {
    pub fn flow_field(&self, size: usize) -> FlowField {
        FlowField::uniform(size, size, self.flow_px_per_frame.0, self.flow_px_per_frame.1)
    }

    pub fn cloud_fraction(&self, frame: usize, grid: &SkyGrid) -> f64 {
        let valid = grid.mask();
        let n = valid.iter().filter(|v| **v).count();
        let c = self.cloud_masks[frame]
            .iter()
            .zip(&valid)
            .filter(|(m, v)| **m && **v)
            .count();
        c as f64 / n as f64
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub scene: Scene,
    pub cam1: Vec<SkyImage>,
    pub cam2: Vec<SkyImage>,
    pub truth: SceneTruth,
}

pub fn truth(scene: &Scene) -> SceneTruth {
    let spec = &scene.spec;
    let size = spec.image_size;
    let grid = SkyGrid::new(size, spec.fov_deg);
    let scale = size as f64 / REFERENCE_SIZE as f64;
    let model = ClearSkyModel::default();
    let frames = 0..spec.frame_count;
    let ghi_clear: Vec<f64> = frames
        .clone()
        .map(|f| clear_sky_ghi(&scene.solar_geometry(f), &model))
        .collect();
    let occl: Vec<f64> = frames.clone().map(|f| scene.sun_occluded_fraction(f)).collect();
    SceneTruth {
        timestamps: frames.clone().map(|f| spec.timestamp(f)).collect(),
        cloud_masks: frames.clone().map(|f| scene.cloud_mask(Camera::Cam1, f, size)).collect(),
        cloud_masks_cam2: frames.clone().map(|f| scene.cloud_mask(Camera::Cam2, f, size)).collect(),
        flow_px_per_frame: (spec.wind_px_per_frame.0 * scale, spec.wind_px_per_frame.1 * scale),
        cbh_m: spec.cloud_layer_height_m,
        sun_pixels: frames
            .clone()
            .map(|f| {
                let (x, y) = grid.position_of(&scene.sun(f));
                (x - 0.5, y - 0.5)
            })
            .collect(),
        ghi: ghi_clear
            .iter()
            .zip(&occl)
            .map(|(c, o)| c * (1.0 - spec.attenuation * o))
            .collect(),
        sun_occluded_fraction: occl,
        ghi_clear,
    }
}

/// Renders both cameras on the scene grid and derives the ground truth.
pub fn generate(spec: &SceneSpec) -> Result<SyntheticScene> {
    let scene = Scene::new(spec.clone())?;
    let size = spec.image_size;
    let cam1 = (0..spec.frame_count)
        .map(|f| scene.render_sky(Camera::Cam1, f, size))
        .collect();
    let cam2 = (0..spec.frame_count)
        .map(|f| scene.render_sky(Camera::Cam2, f, size))
        .collect();
    let truth = truth(&scene);
    Ok(SyntheticScene {
        scene,
        cam1,
        cam2,
        truth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Clear,
    Overcast,
    Broken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScene {
    pub regime: Regime,
    pub split: Split,
    pub spec: SceneSpec,
}

pub const BENCHMARK_DAYS: usize = 24;

/// Fixed roster of one scene per day, chronologically split 16/4/4. Every
/// block of six days holds one clear, one overcast and four broken-cloud
/// scenes; the seed only changes textures.
pub fn benchmark_suite(seed: u64, frames_per_scene: usize) -> Vec<BenchmarkScene> {
    const BROKEN: [(f64, f64, (f64, f64)); 4] = [
        (0.35, 1500.0, (2.5, 0.5)),
        (0.5, 2500.0, (-2.0, 1.5)),
        (0.45, 1000.0, (1.5, -2.5)),
        (0.6, 4000.0, (3.0, 1.0)),
    ];
    (0..BENCHMARK_DAYS)
        .map(|day| {
            let slot = day % 6;
            let scene_seed = splitmix(seed ^ splitmix(day as u64 + 1));
            let (regime, fraction, height, wind) = match slot {
                0 => (Regime::Clear, 0.0, 2000.0, (2.0, 0.0)),
                3 => (Regime::Overcast, 1.0, 1500.0, (1.0, 1.0)),
                s => {
                    let (f, h, w) = BROKEN[if s < 3 { s - 1 } else { s - 2 }];
                    (Regime::Broken, f, h, w)
                }
            };
            let mut spec = SceneSpec::new(format!("day{:02}", day + 1), fraction, height, scene_seed);
            spec.wind_px_per_frame = wind;
            spec.frame_count = frames_per_scene;
            spec.start = Utc.with_ymd_and_hms(2023, 6, 1, 9, 0, 0).unwrap() + Duration::days(day as i64);
            spec.mount_rotation_deg = [12.0, -7.0];
            let split = match day {
                d if d < 16 => Split::Train,
                d if d < 20 => Split::Val,
                _ => Split::Test,
            };
            BenchmarkScene { regime, split, spec }
        })
        .collect()
}
