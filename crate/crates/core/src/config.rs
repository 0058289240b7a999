//! Run configuration (TOML). Every table is optional and falls back to its
//! defaults; unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//!
//! [site]
//! latitude_deg = 59.9724
//! longitude_deg = 11.0524
//! cam2_east_m = 896.0
//! cam2_north_m = 672.0
//!
//! [lens]
//! theta_fov_deg = 90.0
//! cam1_table = "lens_cam1.csv"   # radius_norm,angle_deg; relative to the data dir
//!
//! [imaging]
//! grid_fov_deg = 80.0
//! undistort_size = 200
//! image_size = 100
//!
//! [cbh]
//! pixel_stride = 4
//!
//! [train]
//! max_epochs = 60
//! patience = 8
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::PiConfig;
use crate::forecasters::{ArchitectureSpec, Method};
use crate::imaging::LensModel;
use crate::motion::{FlowParams, DEFAULT_INCONSISTENCY_PX};
use crate::nn::TrainConfig;
use crate::segmentation::SegmentationConfig;
use crate::solar::{ClearSkyModel, GeoLocation, DEFAULT_SOLAR_CONSTANT};
use crate::stereo_cbh::{CbhSearch, StereoRig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiteConfig {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    /// Camera-2 position relative to camera 1.
    pub cam2_east_m: f64,
    pub cam2_north_m: f64,
}

impl Default for SiteConfig {
    fn default() -> Self {
        let site = crate::synth::default_site();
        Self {
            latitude_deg: site.latitude_deg,
            longitude_deg: site.longitude_deg,
            cam2_east_m: 896.0,
            cam2_north_m: 672.0,
        }
    }
}

impl SiteConfig {
    pub fn location(&self) -> Result<GeoLocation> {
        GeoLocation::new(self.latitude_deg, self.longitude_deg).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn rig(&self) -> Result<StereoRig> {
        StereoRig::from_offset(self.location()?, self.cam2_east_m, self.cam2_north_m)
            .map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LensConfig {
    pub theta_fov_deg: f64,
    /// Lens radius in raw pixels; half the raw frame width when absent.
    pub image_radius_px: Option<f64>,
    pub cam1_table: Option<PathBuf>,
    pub cam2_table: Option<PathBuf>,
}

impl Default for LensConfig {
    fn default() -> Self {
        Self {
            theta_fov_deg: 90.0,
            image_radius_px: None,
            cam1_table: None,
            cam2_table: None,
        }
    }
}

impl LensConfig {
    pub fn equidistant(&self, raw_width: usize) -> LensModel {
        LensModel::equidistant(self.theta_fov_deg, self.image_radius_px.unwrap_or(raw_width as f64 / 2.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingConfig {
    pub grid_fov_deg: f64,
    pub undistort_size: usize,
    pub image_size: usize,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            grid_fov_deg: 80.0,
            undistort_size: 200,
            image_size: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    pub flow: FlowParams,
    pub inconsistency_px: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            flow: FlowParams::default(),
            inconsistency_px: DEFAULT_INCONSISTENCY_PX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Stereo matching runs on every n-th frame; heights carry forward in between.
    pub cbh_frame_interval: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { cbh_frame_interval: 1 }
    }
}

/// Training options; `lr` and `batch_size` override the method defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub dropout: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            patience: 10,
            lr: None,
            batch_size: None,
            dropout: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub solar_constant: f64,
    pub site: SiteConfig,
    pub lens: LensConfig,
    pub imaging: ImagingConfig,
    pub segmentation: SegmentationConfig,
    pub motion: MotionConfig,
    pub cbh: CbhSearch,
    pub pipeline: PipelineConfig,
    pub train: TrainSection,
    pub importance: PiConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            solar_constant: DEFAULT_SOLAR_CONSTANT,
            site: SiteConfig::default(),
            lens: LensConfig::default(),
            imaging: ImagingConfig::default(),
            segmentation: SegmentationConfig::default(),
            motion: MotionConfig::default(),
            cbh: CbhSearch {
                pixel_stride: 4,
                ..CbhSearch::default()
            },
            pipeline: PipelineConfig::default(),
            train: TrainSection::default(),
            importance: PiConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        ClearSkyModel::new(self.solar_constant).map_err(cfg)?;
        self.site.rig()?;
        if !(self.lens.theta_fov_deg > 0.0 && self.lens.theta_fov_deg <= 90.0) {
            return Err(Error::Config("lens theta_fov_deg must lie in (0, 90]".into()));
        }
        let im = &self.imaging;
        if !(im.grid_fov_deg > 0.0 && im.grid_fov_deg <= self.lens.theta_fov_deg) {
            return Err(Error::Config("grid FOV must be positive and within the lens FOV".into()));
        }
        if im.image_size < 16 || im.undistort_size < im.image_size {
            return Err(Error::Config("image_size must be >= 16 and <= undistort_size".into()));
        }
        self.segmentation.thresholds.validate().map_err(cfg)?;
        self.motion.flow.validate(im.image_size).map_err(cfg)?;
        if !(self.motion.inconsistency_px > 0.0) {
            return Err(Error::Config("CMV inconsistency threshold must be positive".into()));
        }
        self.cbh.validate().map_err(cfg)?;
        if self.pipeline.cbh_frame_interval == 0 {
            return Err(Error::Config("cbh_frame_interval must be >= 1".into()));
        }
        if self.train.max_epochs == 0 || self.train.patience == 0 {
            return Err(Error::Config("max_epochs and patience must be >= 1".into()));
        }
        if self.importance.repetitions == 0 || self.importance.bucket_s == 0 {
            return Err(Error::Config("importance repetitions and bucket width must be >= 1".into()));
        }
        Ok(())
    }

    pub fn clear_sky(&self) -> ClearSkyModel {
        ClearSkyModel {
            solar_constant: self.solar_constant,
        }
    }

    /// Architecture of `method` with the configured overrides applied.
    pub fn architecture(&self, method: Method) -> Result<ArchitectureSpec> {
        let mut spec = ArchitectureSpec::for_method(method);
        if method.uses_images() {
            spec.image_size = self.imaging.image_size;
        }
        if let Some(lr) = self.train.lr {
            spec.lr = lr;
        }
        if let Some(bs) = self.train.batch_size {
            spec.batch_size = bs;
        }
        if let Some(d) = self.train.dropout {
            spec.dropout = d;
        }
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn train_config(&self, spec: &ArchitectureSpec) -> TrainConfig {
        TrainConfig {
            batch_size: spec.batch_size,
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            seed: self.seed,
            lr: spec.lr,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_tables_fill_defaults() {
        let c = RunConfig::from_toml("seed = 3\n[cbh]\npixel_stride = 2\n[train]\nlr = 0.001\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.cbh.pixel_stride, 2);
        assert_eq!(c.cbh.ncc_floor, 0.5);
        assert_eq!(c.architecture(Method::C).unwrap().lr, 0.001);
        assert_eq!(c.architecture(Method::C).unwrap().batch_size, 1024);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_toml("sede = 3"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("[cbh]\nstride = 3"), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_toml("solar_constant = -1.0").is_err());
        assert!(RunConfig::from_toml("[site]\nlatitude_deg = 100.0").is_err());
        assert!(RunConfig::from_toml("[imaging]\nimage_size = 400").is_err());
    }

    #[test]
    fn roundtrip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }
}
