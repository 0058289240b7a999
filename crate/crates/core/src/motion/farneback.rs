//! Farnebäck two-frame motion estimation from quadratic polynomial expansion.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Local quadratic model `f(p) ~ p^T A p + b^T p + c` at every pixel, with
/// `p = (x, y)` in pixels (x right, y down).
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCoeffs {
    pub width: usize,
    pub height: usize,
    /// `(a_xx, a_xy, a_yy)` of the symmetric matrix `A`.
    pub a: Vec<[f64; 3]>,
    pub b: Vec<[f64; 2]>,
    pub c: Vec<f64>,
}

impl PolyCoeffs {
    /// Value of the local model of pixel `(x, y)` at offset `(dx, dy)`.
    pub fn eval(&self, x: usize, y: usize, dx: f64, dy: f64) -> f64 {
        let i = y * self.width + x;
        let [axx, axy, ayy] = self.a[i];
        let [bx, by] = self.b[i];
        axx * dx * dx + 2.0 * axy * dx * dy + ayy * dy * dy + bx * dx + by * dy + self.c[i]
    }
}

/// Per-pixel weighted least-squares fit of the basis `{1, x, y, x^2, y^2, xy}`
/// over a `(2n+1)^2` neighbourhood with Gaussian applicability of scale `sigma`.
/// Borders replicate the edge pixels.
pub fn polynomial_expansion(
    gray: &[f64],
    width: usize,
    height: usize,
    neighborhood: usize,
    sigma: f64,
) -> Result<PolyCoeffs> {
    if gray.len() != width * height {
        return Err(Error::shape("polynomial expansion", width * height, gray.len()));
    }
    if neighborhood == 0 || !(sigma > 0.0) {
        return Err(Error::Config("polynomial expansion needs neighborhood >= 1 and sigma > 0".into()));
    }
    let n = neighborhood as i64;
    let taps: Vec<(i64, i64, f64)> = (-n..=n)
        .flat_map(|dy| (-n..=n).map(move |dx| (dx, dy)))
        .map(|(dx, dy)| {
            let w = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            (dx, dy, w)
        })
        .collect();
    let basis = |dx: f64, dy: f64| Vector6::new(1.0, dx, dy, dx * dx, dy * dy, dx * dy);
    let mut gram = Matrix6::<f64>::zeros();
    for &(dx, dy, w) in &taps {
        let v = basis(dx as f64, dy as f64);
        gram += w * v * v.transpose();
    }
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular polynomial-expansion Gram matrix".into()))?;
    // one 6-vector of filter weights per tap
    let filters: Vec<Vector6<f64>> = taps
        .iter()
        .map(|&(dx, dy, w)| inv * basis(dx as f64, dy as f64) * w)
        .collect();

    let mut a = Vec::with_capacity(width * height);
    let mut b = Vec::with_capacity(width * height);
    let mut c = Vec::with_capacity(width * height);
    let clamp = |v: i64, hi: usize| v.clamp(0, hi as i64 - 1) as usize;
    for y in 0..height {
        for x in 0..width {
            let mut r = Vector6::<f64>::zeros();
            for (&(dx, dy, _), f) in taps.iter().zip(&filters) {
                let sx = clamp(x as i64 + dx, width);
                let sy = clamp(y as i64 + dy, height);
                r += f * gray[sy * width + sx];
            }
            c.push(r[0]);
            b.push([r[1], r[2]]);
            a.push([r[3], 0.5 * r[5], r[4]]);
        }
    }
    Ok(PolyCoeffs {
        width,
        height,
        a,
        b,
        c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    /// Averaging window as a fraction of the image width.
    pub window_frac: f64,
    /// Half-width of the polynomial-expansion neighbourhood.
    pub poly_neighborhood: usize,
    pub poly_sigma: f64,
    pub iterations: usize,
    /// Number of pyramid levels; 1 is single-scale.
    pub pyramid_levels: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            window_frac: 0.04,
            poly_neighborhood: 3,
            poly_sigma: 2.0,
            iterations: 2,
            pyramid_levels: 2,
        }
    }
}

impl FlowParams {
    pub fn validate(&self, width: usize) -> Result<()> {
        if self.window_px(width) < 3 {
            return Err(Error::Config(format!(
                "flow window {} px is below 3 px for width {width}",
                self.window_px(width)
            )));
        }
        if self.iterations == 0 || self.pyramid_levels == 0 {
            return Err(Error::Config("flow iterations and pyramid levels must be >= 1".into()));
        }
        if self.poly_neighborhood == 0 || !(self.poly_sigma > 0.0) {
            return Err(Error::Config("invalid polynomial expansion parameters".into()));
        }
        Ok(())
    }

    /// Odd averaging window side in pixels.
    pub fn window_px(&self, width: usize) -> usize {
        let w = (self.window_frac * width as f64).round() as usize;
        let radius = (w / 2).max(1);
        2 * radius + 1
    }
}

/// Per-pixel displacement in pixels per frame (x right, y down).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn uniform(width: usize, height: usize, u: f64, v: f64) -> Self {
        Self {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    pub fn max_magnitude(&self) -> f64 {
        self.u
            .iter()
            .zip(&self.v)
            .map(|(u, v)| u.hypot(*v))
            .fold(0.0, f64::max)
    }
}

fn bilinear(data: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let a = data[y0 * w + x0] * (1.0 - fx) + data[y0 * w + x1] * fx;
    let b = data[y1 * w + x0] * (1.0 - fx) + data[y1 * w + x1] * fx;
    a * (1.0 - fy) + b * fy
}

/// Box average with a `(2r+1)^2` window, edges replicated.
fn box_blur(data: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let r = r as i64;
    let norm = ((2 * r + 1) * (2 * r + 1)) as f64;
    let clamp = |v: i64, hi: usize| v.clamp(0, hi as i64 - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (-r..=r).map(|d| data[y * w + clamp(x as i64 + d, w)]).sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (-r..=r).map(|d| tmp[clamp(y as i64 + d, h) * w + x]).sum::<f64>() / norm;
        }
    }
    out
}

fn half_size(data: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (nw, nh) = (w / 2, h / 2);
    let mut out = Vec::with_capacity(nw * nh);
    for y in 0..nh {
        for x in 0..nw {
            let s = data[2 * y * w + 2 * x]
                + data[2 * y * w + 2 * x + 1]
                + data[(2 * y + 1) * w + 2 * x]
                + data[(2 * y + 1) * w + 2 * x + 1];
            out.push(s / 4.0);
        }
    }
    (out, nw, nh)
}

/// Marks pixels whose whole polynomial neighbourhood lies on valid pixels.
fn reliable(valid: &[bool], w: usize, h: usize, n: usize) -> Vec<bool> {
    let n = n as i64;
    let clamp = |v: i64, hi: usize| v.clamp(0, hi as i64 - 1) as usize;
    (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            (-n..=n).all(|dy| (-n..=n).all(|dx| valid[clamp(y + dy, h) * w + clamp(x + dx, w)]))
        })
        .collect()
}

fn half_mask(valid: &[bool], w: usize, h: usize) -> Vec<bool> {
    let (nw, nh) = (w / 2, h / 2);
    (0..nw * nh)
        .map(|i| {
            let (x, y) = (2 * (i % nw), 2 * (i / nw));
            valid[y * w + x] && valid[y * w + x + 1] && valid[(y + 1) * w + x] && valid[(y + 1) * w + x + 1]
        })
        .collect()
}

/// Fills undetermined pixels with the mean of determined 4-neighbours, growing inwards.
fn fill_holes(flow: &mut FlowField, known: &mut [bool]) {
    let (w, h) = (flow.width, flow.height);
    if !known.iter().any(|k| *k) {
        flow.u.iter_mut().for_each(|u| *u = 0.0);
        flow.v.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    loop {
        let mut updates = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if known[i] {
                    continue;
                }
                let (mut su, mut sv, mut c) = (0.0, 0.0, 0usize);
                let mut visit = |j: usize| {
                    if known[j] {
                        su += flow.u[j];
                        sv += flow.v[j];
                        c += 1;
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - w);
                }
                if y + 1 < h {
                    visit(i + w);
                }
                if c > 0 {
                    updates.push((i, su / c as f64, sv / c as f64));
                }
            }
        }
        if updates.is_empty() {
            break;
        }
        for (i, u, v) in updates {
            flow.u[i] = u;
            flow.v[i] = v;
            known[i] = true;
        }
    }
}

/// Refines a displacement field at one scale. Only pixels reliable in both
/// frames contribute to the local normal equations; pixels left without
/// support are filled from their neighbours.
#[allow(clippy::too_many_arguments)]
fn refine(
    r1: &PolyCoeffs,
    r2: &PolyCoeffs,
    rel1: &[bool],
    rel2: &[bool],
    flow: &mut FlowField,
    window_radius: usize,
    iterations: usize,
) {
    let (w, h) = (r1.width, r1.height);
    let n = w * h;
    let plane = |f: &dyn Fn(usize) -> f64| (0..n).map(f).collect::<Vec<f64>>();
    let a2xx = plane(&|i| r2.a[i][0]);
    let a2xy = plane(&|i| r2.a[i][1]);
    let a2yy = plane(&|i| r2.a[i][2]);
    let b2x = plane(&|i| r2.b[i][0]);
    let b2y = plane(&|i| r2.b[i][1]);
    let rel2_at = |sx: f64, sy: f64| -> bool {
        if sx < 0.0 || sy < 0.0 || sx > (w - 1) as f64 || sy > (h - 1) as f64 {
            return false;
        }
        let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        rel2[y0 * w + x0] && rel2[y0 * w + x1] && rel2[y1 * w + x0] && rel2[y1 * w + x1]
    };
    for _ in 0..iterations {
        // entries of A^T A (= A^2, symmetric) and A^T db
        let mut g11 = vec![0.0; n];
        let mut g12 = vec![0.0; n];
        let mut g22 = vec![0.0; n];
        let mut h1 = vec![0.0; n];
        let mut h2 = vec![0.0; n];
        let mut support = vec![0.0; n];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (du, dv) = (flow.u[i], flow.v[i]);
                let (sx, sy) = (x as f64 + du, y as f64 + dv);
                if !rel1[i] || !rel2_at(sx, sy) {
                    continue;
                }
                let axx = 0.5 * (r1.a[i][0] + bilinear(&a2xx, w, h, sx, sy));
                let axy = 0.5 * (r1.a[i][1] + bilinear(&a2xy, w, h, sx, sy));
                let ayy = 0.5 * (r1.a[i][2] + bilinear(&a2yy, w, h, sx, sy));
                let dbx = -0.5 * (bilinear(&b2x, w, h, sx, sy) - r1.b[i][0]) + axx * du + axy * dv;
                let dby = -0.5 * (bilinear(&b2y, w, h, sx, sy) - r1.b[i][1]) + axy * du + ayy * dv;
                g11[i] = axx * axx + axy * axy;
                g12[i] = axx * axy + axy * ayy;
                g22[i] = axy * axy + ayy * ayy;
                h1[i] = axx * dbx + axy * dby;
                h2[i] = axy * dbx + ayy * dby;
                support[i] = 1.0;
            }
        }
        let g11 = box_blur(&g11, w, h, window_radius);
        let g12 = box_blur(&g12, w, h, window_radius);
        let g22 = box_blur(&g22, w, h, window_radius);
        let h1 = box_blur(&h1, w, h, window_radius);
        let h2 = box_blur(&h2, w, h, window_radius);
        let support = box_blur(&support, w, h, window_radius);
        let mut known = vec![false; n];
        for i in 0..n {
            let det = g11[i] * g22[i] - g12[i] * g12[i];
            let scale = g11[i] + g22[i];
            if support[i] > 0.0 && det > 1e-12 * scale * scale && det > 1e-18 {
                flow.u[i] = (g22[i] * h1[i] - g12[i] * h2[i]) / det;
                flow.v[i] = (g11[i] * h2[i] - g12[i] * h1[i]) / det;
                known[i] = true;
            }
        }
        fill_holes(flow, &mut known);
    }
}

/// Dense displacement from `prev` to `next` (both grayscale, same size).
pub fn dense_flow(
    prev: &[f64],
    next: &[f64],
    width: usize,
    height: usize,
    params: &FlowParams,
) -> Result<FlowField> {
    dense_flow_masked(prev, next, None, width, height, params)
}

/// As [`dense_flow`], ignoring pixels outside `valid` (e.g. the black frame
/// around a fisheye disk). Flow at invalid pixels is reported as zero.
pub fn dense_flow_masked(
    prev: &[f64],
    next: &[f64],
    valid: Option<&[bool]>,
    width: usize,
    height: usize,
    params: &FlowParams,
) -> Result<FlowField> {
    if prev.len() != width * height || next.len() != width * height {
        return Err(Error::shape("dense flow", width * height, prev.len().max(next.len())));
    }
    if let Some(m) = valid {
        if m.len() != width * height {
            return Err(Error::shape("dense flow mask", width * height, m.len()));
        }
    }
    params.validate(width)?;
    let full_mask = valid.map_or_else(|| vec![true; width * height], <[bool]>::to_vec);
    let mut pyramid = vec![(prev.to_vec(), next.to_vec(), full_mask.clone(), width, height)];
    for _ in 1..params.pyramid_levels {
        let (p, q, m, w, h) = pyramid.last().unwrap();
        if w / 2 < 2 * params.poly_neighborhood + 1 || h / 2 < 2 * params.poly_neighborhood + 1 {
            break;
        }
        let (ps, nw, nh) = half_size(p, *w, *h);
        let (qs, _, _) = half_size(q, *w, *h);
        let ms = half_mask(m, *w, *h);
        pyramid.push((ps, qs, ms, nw, nh));
    }
    let mut flow: Option<FlowField> = None;
    for (level, (p, q, m, w, h)) in pyramid.iter().enumerate().rev() {
        let mut current = match flow.take() {
            None => FlowField::zeros(*w, *h),
            Some(coarse) => {
                let mut f = FlowField::zeros(*w, *h);
                for y in 0..*h {
                    for x in 0..*w {
                        let cx = ((x as f64 + 0.5) / 2.0 - 0.5).max(0.0);
                        let cy = ((y as f64 + 0.5) / 2.0 - 0.5).max(0.0);
                        f.u[y * w + x] = 2.0 * bilinear(&coarse.u, coarse.width, coarse.height, cx, cy);
                        f.v[y * w + x] = 2.0 * bilinear(&coarse.v, coarse.width, coarse.height, cx, cy);
                    }
                }
                f
            }
        };
        let r1 = polynomial_expansion(p, *w, *h, params.poly_neighborhood, params.poly_sigma)?;
        let r2 = polynomial_expansion(q, *w, *h, params.poly_neighborhood, params.poly_sigma)?;
        let rel = reliable(m, *w, *h, params.poly_neighborhood);
        let window = params.window_px(width >> level).max(3);
        refine(&r1, &r2, &rel, &rel, &mut current, window / 2, params.iterations);
        flow = Some(current);
    }
    let mut flow = flow.expect("at least one pyramid level");
    for (i, &ok) in full_mask.iter().enumerate() {
        if !ok {
            flow.u[i] = 0.0;
            flow.v[i] = 0.0;
        }
    }
    Ok(flow)
}
