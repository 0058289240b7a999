use super::{SkyGrid, SkyImage};
use crate::error::{Error, Result};

const SUPPORT: f64 = 3.0;

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

pub fn lanczos3(x: f64) -> f64 {
    if x.abs() < SUPPORT {
        sinc(x) * sinc(x / SUPPORT)
    } else {
        0.0
    }
}

/// Per-output-sample (first source index, normalized weights), with the
/// kernel stretched by the scale factor when shrinking.
fn coefficients(in_len: usize, out_len: usize) -> Vec<(usize, Vec<f64>)> {
    let scale = in_len as f64 / out_len as f64;
    let filter_scale = scale.max(1.0);
    let support = SUPPORT * filter_scale;
    (0..out_len)
        .map(|i| {
            let center = (i as f64 + 0.5) * scale;
            let lo = ((center - support + 0.5).floor().max(0.0)) as usize;
            let hi = ((center + support + 0.5).floor() as usize).min(in_len);
            let mut w: Vec<f64> = (lo..hi)
                .map(|j| lanczos3((j as f64 + 0.5 - center) / filter_scale))
                .collect();
            let total: f64 = w.iter().sum();
            if total != 0.0 {
                w.iter_mut().for_each(|v| *v /= total);
            }
            (lo, w)
        })
        .collect()
}

/// Separable Lanczos-3 resampling of a single row-major plane.
pub fn resample_plane(src: &[f64], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    let cx = coefficients(w, out_w);
    let cy = coefficients(h, out_h);
    let mut tmp = vec![0.0; out_w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (x, (lo, ws)) in cx.iter().enumerate() {
            tmp[y * out_w + x] = ws.iter().zip(&row[*lo..]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; out_w * out_h];
    for (y, (lo, ws)) in cy.iter().enumerate() {
        for x in 0..out_w {
            out[y * out_w + x] = ws
                .iter()
                .enumerate()
                .map(|(k, wk)| wk * tmp[(lo + k) * out_w + x])
                .sum();
        }
    }
    out
}

/// Lanczos-3 downsampling of a sky image. Only valid source pixels
/// contribute (normalized convolution), so the black frame outside the
/// FOV disk does not darken the rim. Output is clipped to [0, 1].
pub fn downsample(image: &SkyImage, target_size: usize) -> Result<SkyImage> {
    let n = image.size();
    if target_size == 0 || target_size > n {
        return Err(Error::InvalidInput(format!(
            "downsample target {target_size} must be in 1..={n}"
        )));
    }
    let mask: Vec<f64> = image.valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let den = resample_plane(&mask, n, n, target_size, target_size);
    let mut channels = Vec::with_capacity(3);
    for c in 0..3 {
        let plane: Vec<f64> = image
            .pixels
            .iter()
            .zip(&mask)
            .map(|(p, m)| f64::from(p[c]) * m)
            .collect();
        channels.push(resample_plane(&plane, n, n, target_size, target_size));
    }
    let grid = SkyGrid::new(target_size, image.grid.fov_deg);
    let pixels = (0..target_size * target_size)
        .map(|i| {
            let d = den[i];
            if d.abs() < 1e-3 {
                return [0.0; 3];
            }
            [0, 1, 2].map(|c| (channels[c][i] / d).clamp(0.0, 1.0) as f32)
        })
        .collect();
    SkyImage::from_pixels(grid, pixels, image.meta.clone())
}
