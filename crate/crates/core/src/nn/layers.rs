//! Layers with explicit backward passes. Each `backward` takes the forward
//! input and the output gradient, accumulates parameter gradients and
//! returns the input gradient.

use rand::Rng;

use super::tensor::{Float, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Float> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(&value.shape);
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data.iter_mut().for_each(|g| *g = T::zero());
    }
}

pub fn glorot_uniform<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    (0..n).map(|_| rng.gen_range(-limit..=limit)).collect()
}

pub(crate) fn tensor_of<T: Float>(shape: &[usize], v: Vec<f64>) -> Tensor<T> {
    Tensor::from_vec(shape, v.into_iter().map(T::of).collect()).expect("initializer matches shape")
}

/// `c += a (m x k) * b (k x n)`.
pub(crate) fn matmul_acc<T: Float>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `out (k x n) += a^T g` with `a` m x k and `g` m x n.
pub(crate) fn matmul_at_b_acc<T: Float>(a: &[T], g: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

/// `out (m x k) += g b^T` with `g` m x n and `b` k x n.
pub(crate) fn matmul_a_bt_acc<T: Float>(g: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut s = T::zero();
            for (&gv, &bv) in grow.iter().zip(brow) {
                s += gv * bv;
            }
            out[i * k + p] += s;
        }
    }
}

/// Valid 2-D cross-correlation over an `[H, W, C_in]` image with
/// `[kh, kw, C_in, C_out]` kernels and a per-filter bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Float> Conv2d<T> {
    pub fn new<R: Rng>(name: &str, kh: usize, kw: usize, cin: usize, cout: usize, rng: &mut R) -> Self {
        let shape = [kh, kw, cin, cout];
        let w = glorot_uniform(rng, &shape, kh * kw * cin, kh * kw * cout);
        Self {
            weight: Param::new(format!("{name}.weight"), tensor_of(&shape, w)),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[cout])),
        }
    }

    pub fn from_params(weight: Tensor<T>, bias: Tensor<T>, name: &str) -> Result<Self> {
        if weight.shape.len() != 4 || bias.shape != [weight.shape[3]] {
            return Err(Error::shape(name, "[kh, kw, cin, cout] and [cout]", format!("{:?} / {:?}", weight.shape, bias.shape)));
        }
        Ok(Self {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Param::new(format!("{name}.bias"), bias),
        })
    }

    fn dims(&self) -> (usize, usize, usize, usize) {
        let s = &self.weight.value.shape;
        (s[0], s[1], s[2], s[3])
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (kh, kw, cin, cout) = self.dims();
        if input.len() != 3 || input[2] != cin || input[0] < kh || input[1] < kw {
            return Err(Error::shape(&self.weight.name, format!("[>={kh}, >={kw}, {cin}]"), format!("{input:?}")));
        }
        Ok(vec![input[0] - kh + 1, input[1] - kw + 1, cout])
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let out_shape = self.output_shape(&x.shape)?;
        let (kh, kw, cin, cout) = self.dims();
        let (w_in, ho, wo) = (x.shape[1], out_shape[0], out_shape[1]);
        let w = &self.weight.value.data;
        let mut y = Tensor::zeros(&out_shape);
        for oy in 0..ho {
            for ox in 0..wo {
                let yrow = &mut y.data[(oy * wo + ox) * cout..(oy * wo + ox + 1) * cout];
                yrow.copy_from_slice(&self.bias.value.data);
                for ky in 0..kh {
                    for kx in 0..kw {
                        let xi = ((oy + ky) * w_in + ox + kx) * cin;
                        let wi = (ky * kw + kx) * cin * cout;
                        matmul_acc(&x.data[xi..xi + cin], &w[wi..wi + cin * cout], yrow, 1, cin, cout);
                    }
                }
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
        let (kh, kw, cin, cout) = self.dims();
        let (w_in, ho, wo) = (x.shape[1], dy.shape[0], dy.shape[1]);
        let mut dx = Tensor::zeros(&x.shape);
        for oy in 0..ho {
            for ox in 0..wo {
                let g = &dy.data[(oy * wo + ox) * cout..(oy * wo + ox + 1) * cout];
                for (b, &gv) in self.bias.grad.data.iter_mut().zip(g) {
                    *b += gv;
                }
                for ky in 0..kh {
                    for kx in 0..kw {
                        let xi = ((oy + ky) * w_in + ox + kx) * cin;
                        let wi = (ky * kw + kx) * cin * cout;
                        matmul_at_b_acc(&x.data[xi..xi + cin], g, &mut self.weight.grad.data[wi..wi + cin * cout], 1, cin, cout);
                        matmul_a_bt_acc(g, &self.weight.value.data[wi..wi + cin * cout], &mut dx.data[xi..xi + cin], 1, cin, cout);
                    }
                }
            }
        }
        dx
    }
}

/// Trainable per-channel scaling (a 1x1 convolution restricted to the diagonal, no bias).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1x1Scale<T> {
    pub weight: Param<T>,
}

impl<T: Float> Conv1x1Scale<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            weight: Param::new(format!("{name}.weight"), Tensor::filled(&[channels], T::one())),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let c = self.weight.value.len();
        if x.shape.last() != Some(&c) {
            return Err(Error::shape(&self.weight.name, format!("[.., {c}]"), format!("{:?}", x.shape)));
        }
        let w = &self.weight.value.data;
        let data = x.data.iter().enumerate().map(|(i, &v)| v * w[i % c]).collect();
        Ok(Tensor {
            shape: x.shape.clone(),
            data,
        })
    }

    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
        let c = self.weight.value.len();
        let w = &self.weight.value.data;
        let mut dx = Tensor::zeros(&x.shape);
        for (i, (&xv, &g)) in x.data.iter().zip(&dy.data).enumerate() {
            self.weight.grad.data[i % c] += xv * g;
            dx.data[i] = w[i % c] * g;
        }
        dx
    }
}

/// 2x2 max pooling with stride 2 over `[H, W, C]`; trailing odd rows/columns are dropped.
pub fn maxpool2<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let (h, w, c) = (x.shape[0], x.shape[1], x.shape[2]);
    let (ho, wo) = (h / 2, w / 2);
    let mut y = Tensor::zeros(&[ho, wo, c]);
    for oy in 0..ho {
        for ox in 0..wo {
            for ch in 0..c {
                let (i, _) = pool_argmax(x, oy, ox, ch);
                y.data[(oy * wo + ox) * c + ch] = x.data[i];
            }
        }
    }
    y
}

fn pool_argmax<T: Float>(x: &Tensor<T>, oy: usize, ox: usize, ch: usize) -> (usize, T) {
    let (w, c) = (x.shape[1], x.shape[2]);
    let mut best = (usize::MAX, T::neg_infinity());
    for dy in 0..2 {
        for dx in 0..2 {
            let i = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
            if best.0 == usize::MAX || x.data[i] > best.1 {
                best = (i, x.data[i]);
            }
        }
    }
    best
}

/// Routes each output gradient to the first maximal input of its block.
pub fn maxpool2_backward<T: Float>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let (ho, wo, c) = (dy.shape[0], dy.shape[1], dy.shape[2]);
    let mut dx = Tensor::zeros(&x.shape);
    for oy in 0..ho {
        for ox in 0..wo {
            for ch in 0..c {
                let (i, _) = pool_argmax(x, oy, ox, ch);
                dx.data[i] += dy.data[(oy * wo + ox) * c + ch];
            }
        }
    }
    dx
}

pub fn relu<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| v.max(T::zero())).collect(),
    }
}

pub fn relu_backward<T: Float>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    Tensor {
        shape: x.shape.clone(),
        data: x
            .data
            .iter()
            .zip(&dy.data)
            .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
            .collect(),
    }
}

/// Fully connected layer on `[B, in]` rows with linear activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Float> Dense<T> {
    pub fn new<R: Rng>(name: &str, inputs: usize, units: usize, rng: &mut R) -> Self {
        let w = glorot_uniform(rng, &[inputs, units], inputs, units);
        Self {
            weight: Param::new(format!("{name}.weight"), tensor_of(&[inputs, units], w)),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[units])),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape[0]
    }

    pub fn units(&self) -> usize {
        self.weight.value.shape[1]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (k, n) = (self.inputs(), self.units());
        if x.shape.len() != 2 || x.shape[1] != k {
            return Err(Error::shape(&self.weight.name, format!("[B, {k}]"), format!("{:?}", x.shape)));
        }
        let m = x.shape[0];
        let mut y = Tensor::zeros(&[m, n]);
        for row in y.data.chunks_mut(n) {
            row.copy_from_slice(&self.bias.value.data);
        }
        matmul_acc(&x.data, &self.weight.value.data, &mut y.data, m, k, n);
        Ok(y)
    }

    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
        let (k, n, m) = (self.inputs(), self.units(), x.shape[0]);
        for row in dy.data.chunks(n) {
            for (b, &g) in self.bias.grad.data.iter_mut().zip(row) {
                *b += g;
            }
        }
        matmul_at_b_acc(&x.data, &dy.data, &mut self.weight.grad.data, m, k, n);
        let mut dx = Tensor::zeros(&[m, k]);
        matmul_a_bt_acc(&dy.data, &self.weight.value.data, &mut dx.data, m, k, n);
        dx
    }
}

/// Inverted dropout. Returns the output and the per-element scale used,
/// which the backward pass multiplies into the gradient.
pub fn dropout<T: Float, R: Rng>(x: &Tensor<T>, rate: f64, training: bool, rng: &mut R) -> (Tensor<T>, Option<Vec<T>>) {
    if !training || rate <= 0.0 {
        return (x.clone(), None);
    }
    let keep = T::of(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let data = x.data.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    (
        Tensor {
            shape: x.shape.clone(),
            data,
        },
        Some(mask),
    )
}

pub fn dropout_backward<T: Float>(mask: Option<&[T]>, dy: Tensor<T>) -> Tensor<T> {
    match mask {
        None => dy,
        Some(m) => Tensor {
            data: dy.data.iter().zip(m).map(|(&g, &k)| g * k).collect(),
            shape: dy.shape,
        },
    }
}

/// Mean absolute error and its gradient; the subgradient at zero error is 0.
pub fn mae_loss<T: Float>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if pred.shape != target.shape {
        return Err(Error::shape("mae loss", format!("{:?}", pred.shape), format!("{:?}", target.shape)));
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData("mae loss over an empty batch".into()));
    }
    let n = T::of(pred.len() as f64);
    let mut loss = T::zero();
    let grad = pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(&p, &t)| {
            let e = p - t;
            loss += e.abs();
            if e > T::zero() {
                T::one() / n
            } else if e < T::zero() {
                -T::one() / n
            } else {
                T::zero()
            }
        })
        .collect();
    Ok((
        loss / n,
        Tensor {
            shape: pred.shape.clone(),
            data: grad,
        },
    ))
}
