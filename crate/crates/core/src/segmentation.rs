//! Hybrid cloud segmentation.
//!
//! The modality of a frame is decided from the standard deviation of the HSI
//! saturation over valid pixels. Multimodal frames are clustered (per-channel
//! standardization, 2-component PCA, k-means with k = 3) into frame, sky and
//! cloud; unimodal frames use a normalized blue/red ratio threshold whose
//! value depends on whether the frame is in the clear or overcast regime.

use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{SkyDir, SkyImage};

pub const MIN_VALID_PIXELS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegThresholds {
    pub saturation_std_threshold: f64,
    pub nbr_clear: f64,
    pub nbr_overcast: f64,
}

impl Default for SegThresholds {
    fn default() -> Self {
        Self {
            saturation_std_threshold: 0.09,
            nbr_clear: 0.20,
            nbr_overcast: 0.35,
        }
    }
}

impl SegThresholds {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(in_unit(self.saturation_std_threshold) && in_unit(self.nbr_clear) && in_unit(self.nbr_overcast)) {
            return Err(Error::Config("segmentation thresholds must lie in (0, 1)".into()));
        }
        if self.nbr_clear >= self.nbr_overcast {
            return Err(Error::Config("nbr_clear must be below nbr_overcast".into()));
        }
        Ok(())
    }

    /// Image-mean nBR separating the clear regime from the overcast regime.
    pub fn regime_midpoint(&self) -> f64 {
        0.5 * (self.nbr_clear + self.nbr_overcast)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub thresholds: SegThresholds,
    pub kmeans_seed: u64,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    /// Radius in pixels around the detected sun excluded from clustering; `None` keeps every pixel.
    pub sun_exclusion_px: Option<f64>,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            thresholds: SegThresholds::default(),
            kmeans_seed: 0x5EED,
            kmeans_max_iter: 50,
            kmeans_tol: 1e-6,
            sun_exclusion_px: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PixelClass {
    Invalid,
    Sky,
    Cloud,
}

impl PixelClass {
    pub fn to_gray(self) -> u8 {
        match self {
            PixelClass::Invalid => 0,
            PixelClass::Sky => 128,
            PixelClass::Cloud => 255,
        }
    }

    pub fn from_gray(v: u8) -> Result<Self> {
        match v {
            0 => Ok(PixelClass::Invalid),
            128 => Ok(PixelClass::Sky),
            255 => Ok(PixelClass::Cloud),
            other => Err(Error::InvalidInput(format!("segmentation value {other} is not 0/128/255"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    Unimodal,
    Multimodal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentationPath {
    KMeans,
    ClearThreshold,
    OvercastThreshold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMap {
    pub size: usize,
    pub classes: Vec<PixelClass>,
    pub path: SegmentationPath,
    /// Set when k-means hit the iteration cap before converging.
    pub converged: bool,
}

impl SegmentationMap {
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for k in &self.classes {
            match k {
                PixelClass::Cloud => c.0 += 1,
                PixelClass::Sky => c.1 += 1,
                PixelClass::Invalid => c.2 += 1,
            }
        }
        c
    }

    /// cloud / (cloud + sky); zero when no valid pixel exists.
    pub fn cloud_fraction(&self) -> f64 {
        let (cloud, sky, _) = self.counts();
        if cloud + sky == 0 {
            0.0
        } else {
            cloud as f64 / (cloud + sky) as f64
        }
    }

    pub fn cloud_mask(&self) -> Vec<bool> {
        self.classes.iter().map(|c| *c == PixelClass::Cloud).collect()
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let buf = image::GrayImage::from_raw(
            self.size as u32,
            self.size as u32,
            self.classes.iter().map(|c| c.to_gray()).collect(),
        )
        .ok_or_else(|| Error::shape("segmentation png", self.size * self.size, self.classes.len()))?;
        buf.save(path)?;
        Ok(())
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_luma8();
        let (w, h) = img.dimensions();
        if w != h {
            return Err(Error::shape("segmentation png", "square", format!("{w}x{h}")));
        }
        let classes = img.pixels().map(|p| PixelClass::from_gray(p.0[0])).collect::<Result<_>>()?;
        Ok(Self {
            size: w as usize,
            classes,
            path: SegmentationPath::KMeans,
            converged: true,
        })
    }
}

/// HSI saturation `1 - 3 min(R,G,B) / (R+G+B)`; zero for pure black.
pub fn saturation(p: [f32; 3]) -> f64 {
    let (r, g, b) = (f64::from(p[0]), f64::from(p[1]), f64::from(p[2]));
    let sum = r + g + b;
    if sum <= 0.0 {
        0.0
    } else {
        1.0 - 3.0 * r.min(g).min(b) / sum
    }
}

/// Normalized blue/red ratio `(B - R) / (B + R)`; zero when both vanish.
pub fn nbr(p: [f32; 3]) -> f64 {
    let (r, b) = (f64::from(p[0]), f64::from(p[2]));
    let sum = b + r;
    if sum <= 0.0 {
        0.0
    } else {
        (b - r) / sum
    }
}

/// Population standard deviation of saturation over valid pixels.
pub fn saturation_std(image: &SkyImage) -> Result<f64> {
    let vals: Vec<f64> = image
        .pixels
        .iter()
        .zip(&image.valid)
        .filter(|(_, v)| **v)
        .map(|(p, _)| saturation(*p))
        .collect();
    if vals.len() < MIN_VALID_PIXELS {
        return Err(Error::InsufficientData(format!(
            "modality test needs {MIN_VALID_PIXELS} valid pixels, got {}",
            vals.len()
        )));
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    Ok((vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

/// Multimodal iff std(S) strictly exceeds the threshold.
pub fn modality(image: &SkyImage, thresholds: &SegThresholds) -> Result<Modality> {
    Ok(if saturation_std(image)? > thresholds.saturation_std_threshold {
        Modality::Multimodal
    } else {
        Modality::Unimodal
    })
}

pub fn segment_unimodal(image: &SkyImage, thresholds: &SegThresholds) -> SegmentationMap {
    let (sum, n) = image
        .pixels
        .iter()
        .zip(&image.valid)
        .filter(|(_, v)| **v)
        .fold((0.0, 0usize), |(s, n), (p, _)| (s + nbr(*p), n + 1));
    let mean = if n == 0 { 0.0 } else { sum / n as f64 };
    let clear = mean >= thresholds.regime_midpoint();
    let classes = image
        .pixels
        .iter()
        .zip(&image.valid)
        .map(|(p, &v)| {
            if !v {
                return PixelClass::Invalid;
            }
            let r = nbr(*p);
            let cloudy = if clear {
                r < thresholds.nbr_clear
            } else {
                r <= thresholds.nbr_overcast
            };
            if cloudy {
                PixelClass::Cloud
            } else {
                PixelClass::Sky
            }
        })
        .collect();
    SegmentationMap {
        size: image.size(),
        classes,
        path: if clear {
            SegmentationPath::ClearThreshold
        } else {
            SegmentationPath::OvercastThreshold
        },
        converged: true,
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Lloyd's k-means with k-means++ seeding. Points are expected in a
/// canonical order so the result does not depend on caller ordering.
pub fn kmeans(points: &[[f64; 2]], k: usize, max_iter: usize, tol: f64, seed: u64) -> KMeansResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = points.len();
    let mut centroids: Vec<[f64; 2]> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..n)]);
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            points[rng.gen_range(0..n)]
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            points[pick]
        };
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &next));
        }
        centroids.push(next);
    }

    let mut labels = vec![0usize; n];
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        for (l, p) in labels.iter_mut().zip(points) {
            *l = (0..k)
                .min_by(|&a, &b| dist2(p, &centroids[a]).total_cmp(&dist2(p, &centroids[b])))
                .unwrap_or(0);
        }
        let mut sums = vec![[0.0_f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (l, p) in labels.iter().zip(points) {
            sums[*l][0] += p[0];
            sums[*l][1] += p[1];
            counts[*l] += 1;
        }
        let mut shift = 0.0_f64;
        for j in 0..k {
            if counts[j] > 0 {
                let c = [sums[j][0] / counts[j] as f64, sums[j][1] / counts[j] as f64];
                shift = shift.max(dist2(&c, &centroids[j]).sqrt());
                centroids[j] = c;
            }
        }
        if shift < tol {
            converged = true;
            break;
        }
    }
    if converged {
        for (l, p) in labels.iter_mut().zip(points) {
            *l = (0..k)
                .min_by(|&a, &b| dist2(p, &centroids[a]).total_cmp(&dist2(p, &centroids[b])))
                .unwrap_or(0);
        }
    } else {
        log::warn!("k-means did not converge in {max_iter} iterations; using best-so-far assignment");
    }
    KMeansResult {
        centroids,
        labels,
        iterations,
        converged,
    }
}

/// Standardizes RGB per channel and projects onto the two leading principal axes.
fn pca2(rgb: &[[f64; 3]]) -> Vec<[f64; 2]> {
    let n = rgb.len() as f64;
    let mut mean = [0.0; 3];
    for p in rgb {
        for c in 0..3 {
            mean[c] += p[c];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut sd = [0.0; 3];
    for p in rgb {
        for c in 0..3 {
            sd[c] += (p[c] - mean[c]).powi(2);
        }
    }
    let sd = sd.map(|s| {
        let v = (s / n).sqrt();
        if v > 1e-12 {
            v
        } else {
            1.0
        }
    });
    let z: Vec<[f64; 3]> = rgb
        .iter()
        .map(|p| [0, 1, 2].map(|c| (p[c] - mean[c]) / sd[c]))
        .collect();
    let mut cov = Matrix3::<f64>::zeros();
    for p in &z {
        for i in 0..3 {
            for j in 0..3 {
                cov[(i, j)] += p[i] * p[j];
            }
        }
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axes: Vec<[f64; 3]> = order[..2]
        .iter()
        .map(|&k| {
            let v = eig.eigenvectors.column(k);
            // fix the sign so the projection is reproducible
            let s = if v[0] + v[1] + v[2] < 0.0 { -1.0 } else { 1.0 };
            [s * v[0], s * v[1], s * v[2]]
        })
        .collect();
    z.iter()
        .map(|p| {
            [
                axes[0][0] * p[0] + axes[0][1] * p[1] + axes[0][2] * p[2],
                axes[1][0] * p[0] + axes[1][1] * p[1] + axes[1][2] * p[2],
            ]
        })
        .collect()
}

/// k-means path. Clusters every pixel of the frame (including the black
/// border) into three groups: the group holding most invalid pixels is the
/// frame; of the other two the higher mean nBR is sky and the lower is
/// cloud, unless its mean nBR is itself in the clear-sky range.
pub fn segment_multimodal(image: &SkyImage, config: &SegmentationConfig) -> SegmentationMap {
    segment_multimodal_excluding(image, config, None)
}

fn segment_multimodal_excluding(
    image: &SkyImage,
    config: &SegmentationConfig,
    excluded: Option<&[bool]>,
) -> SegmentationMap {
    let n = image.pixels.len();
    let mut idx: Vec<usize> = (0..n)
        .filter(|&i| excluded.map_or(true, |e| !e[i]))
        .collect();
    // canonical order: by colour, then by validity
    idx.sort_by(|&a, &b| {
        let (pa, pb) = (image.pixels[a], image.pixels[b]);
        pa[0]
            .total_cmp(&pb[0])
            .then(pa[1].total_cmp(&pb[1]))
            .then(pa[2].total_cmp(&pb[2]))
            .then(image.valid[a].cmp(&image.valid[b]))
    });
    let rgb: Vec<[f64; 3]> = idx
        .iter()
        .map(|&i| image.pixels[i].map(f64::from))
        .collect();
    let proj = pca2(&rgb);
    let km = kmeans(
        &proj,
        3,
        config.kmeans_max_iter,
        config.kmeans_tol,
        config.kmeans_seed,
    );

    let mut invalid_hits = [0usize; 3];
    let mut brightness = [0.0_f64; 3];
    let mut nbr_sum = [0.0_f64; 3];
    let mut counts = [0usize; 3];
    for (&i, &l) in idx.iter().zip(&km.labels) {
        counts[l] += 1;
        let p = image.pixels[i];
        brightness[l] += f64::from(p[0] + p[1] + p[2]) / 3.0;
        if image.valid[i] {
            nbr_sum[l] += nbr(p);
        } else {
            invalid_hits[l] += 1;
        }
    }
    let valid_in = |l: usize| counts[l] - invalid_hits[l];
    let frame = if invalid_hits.iter().any(|&c| c > 0) {
        (0..3).max_by_key(|&l| (invalid_hits[l], std::cmp::Reverse(l))).unwrap()
    } else {
        (0..3)
            .min_by(|&a, &b| {
                let ma = brightness[a] / counts[a].max(1) as f64;
                let mb = brightness[b] / counts[b].max(1) as f64;
                ma.total_cmp(&mb)
            })
            .unwrap()
    };
    let others: Vec<usize> = (0..3).filter(|&l| l != frame).collect();
    let mean_nbr = |l: usize| {
        if valid_in(l) == 0 {
            f64::NEG_INFINITY
        } else {
            nbr_sum[l] / valid_in(l) as f64
        }
    };
    let (sky, cloud) = if mean_nbr(others[0]) >= mean_nbr(others[1]) {
        (others[0], others[1])
    } else {
        (others[1], others[0])
    };
    let cloud_is_sky = mean_nbr(cloud) >= config.thresholds.nbr_clear;

    let mut label_of = vec![usize::MAX; n];
    for (&i, &l) in idx.iter().zip(&km.labels) {
        label_of[i] = l;
    }
    // unclustered pixels (sun exclusion) and valid pixels that fell into the
    // frame cluster go to whichever of sky/cloud has the closer mean nBR
    let nearest = |p: [f32; 3]| -> usize {
        let r = nbr(p);
        if (r - mean_nbr(sky)).abs() <= (r - mean_nbr(cloud)).abs() {
            sky
        } else {
            cloud
        }
    };

    let classes = (0..n)
        .map(|i| {
            if !image.valid[i] {
                return PixelClass::Invalid;
            }
            let mut l = label_of[i];
            if l == usize::MAX || l == frame {
                l = nearest(image.pixels[i]);
            }
            if l == cloud && !cloud_is_sky {
                PixelClass::Cloud
            } else {
                PixelClass::Sky
            }
        })
        .collect();
    SegmentationMap {
        size: image.size(),
        classes,
        path: SegmentationPath::KMeans,
        converged: km.converged,
    }
}

/// Modality test followed by the matching segmentation path.
pub fn segment(image: &SkyImage, config: &SegmentationConfig) -> Result<SegmentationMap> {
    segment_with_sun(image, config, None)
}

/// As [`segment`], optionally excluding a disk around the sun from clustering.
pub fn segment_with_sun(
    image: &SkyImage,
    config: &SegmentationConfig,
    sun: Option<&SkyDir>,
) -> Result<SegmentationMap> {
    match modality(image, &config.thresholds)? {
        Modality::Unimodal => Ok(segment_unimodal(image, &config.thresholds)),
        Modality::Multimodal => {
            let excluded = match (config.sun_exclusion_px, sun) {
                (Some(r), Some(dir)) => {
                    let (sx, sy) = image.grid.position_of(dir);
                    let size = image.size();
                    Some(
                        (0..size * size)
                            .map(|i| {
                                let (x, y) = ((i % size) as f64 + 0.5, (i / size) as f64 + 0.5);
                                (x - sx).hypot(y - sy) <= r
                            })
                            .collect::<Vec<bool>>(),
                    )
                }
                _ => None,
            };
            Ok(segment_multimodal_excluding(image, config, excluded.as_deref()))
        }
    }
}
