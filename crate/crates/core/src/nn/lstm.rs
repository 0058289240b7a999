use rand::Rng;

use super::layers::{matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, tensor_of, Param};
use super::tensor::{Float, Tensor};
use crate::error::{Error, Result};

/// LSTM over `[B, T, F]` batches with gate order input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm<T> {
    /// `[F, 4U]`
    pub wx: Param<T>,
    /// `[U, 4U]`
    pub wh: Param<T>,
    /// `[4U]`
    pub bias: Param<T>,
}

/// Forward activations kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    /// Hidden states `h_0 ..= h_T`, each `[B, U]`.
    pub h: Vec<Vec<T>>,
    pub c: Vec<Vec<T>>,
    /// Activated gates per step, `[B, 4U]`.
    pub gates: Vec<Vec<T>>,
}

fn sigmoid<T: Float>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

impl<T: Float> Lstm<T> {
    /// Uniform weights in `+-1/sqrt(U)`, zero biases except forget gate bias 1.
    pub fn new<R: Rng>(name: &str, inputs: usize, units: usize, rng: &mut R) -> Self {
        let lim = 1.0 / (units as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-lim..=lim)).collect::<Vec<f64>>();
        let wx = draw(inputs * 4 * units);
        let wh = draw(units * 4 * units);
        let mut b = vec![0.0; 4 * units];
        b[units..2 * units].iter_mut().for_each(|v| *v = 1.0);
        Self {
            wx: Param::new(format!("{name}.wx"), tensor_of(&[inputs, 4 * units], wx)),
            wh: Param::new(format!("{name}.wh"), tensor_of(&[units, 4 * units], wh)),
            bias: Param::new(format!("{name}.bias"), tensor_of(&[4 * units], b)),
        }
    }

    pub fn inputs(&self) -> usize {
        self.wx.value.shape[0]
    }

    pub fn units(&self) -> usize {
        self.wh.value.shape[0]
    }

    /// Returns the full hidden sequence `[B, T, U]` and the cache.
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, LstmCache<T>)> {
        let (f, u) = (self.inputs(), self.units());
        if x.shape.len() != 3 || x.shape[2] != f {
            return Err(Error::shape(&self.wx.name, format!("[B, T, {f}]"), format!("{:?}", x.shape)));
        }
        let (b, steps) = (x.shape[0], x.shape[1]);
        let mut cache = LstmCache {
            h: vec![vec![T::zero(); b * u]],
            c: vec![vec![T::zero(); b * u]],
            gates: Vec::with_capacity(steps),
        };
        let mut out = Tensor::zeros(&[b, steps, u]);
        let mut xt = vec![T::zero(); b * f];
        for t in 0..steps {
            for i in 0..b {
                xt[i * f..(i + 1) * f].copy_from_slice(&x.data[(i * steps + t) * f..(i * steps + t + 1) * f]);
            }
            let mut z = Vec::with_capacity(b * 4 * u);
            for _ in 0..b {
                z.extend_from_slice(&self.bias.value.data);
            }
            matmul_acc(&xt, &self.wx.value.data, &mut z, b, f, 4 * u);
            matmul_acc(&cache.h[t], &self.wh.value.data, &mut z, b, u, 4 * u);
            let c_prev = &cache.c[t];
            let mut c = vec![T::zero(); b * u];
            let mut h = vec![T::zero(); b * u];
            for i in 0..b {
                let zr = &mut z[i * 4 * u..(i + 1) * 4 * u];
                for k in 0..u {
                    let ig = sigmoid(zr[k]);
                    let fg = sigmoid(zr[u + k]);
                    let gg = zr[2 * u + k].tanh();
                    let og = sigmoid(zr[3 * u + k]);
                    zr[k] = ig;
                    zr[u + k] = fg;
                    zr[2 * u + k] = gg;
                    zr[3 * u + k] = og;
                    let cv = fg * c_prev[i * u + k] + ig * gg;
                    c[i * u + k] = cv;
                    h[i * u + k] = og * cv.tanh();
                }
                out.data[(i * steps + t) * u..(i * steps + t + 1) * u].copy_from_slice(&h[i * u..(i + 1) * u]);
            }
            cache.gates.push(z);
            cache.c.push(c);
            cache.h.push(h);
        }
        Ok((out, cache))
    }

    /// Backpropagation through time given the gradient of every hidden
    /// output `[B, T, U]`; returns the input gradient `[B, T, F]`.
    pub fn backward(&mut self, x: &Tensor<T>, cache: &LstmCache<T>, dh_seq: &Tensor<T>) -> Tensor<T> {
        let (f, u) = (self.inputs(), self.units());
        let (b, steps) = (x.shape[0], x.shape[1]);
        let mut dx = Tensor::zeros(&x.shape);
        let mut dh_next = vec![T::zero(); b * u];
        let mut dc_next = vec![T::zero(); b * u];
        let mut dz = vec![T::zero(); b * 4 * u];
        let mut xt = vec![T::zero(); b * f];
        let one = T::one();
        for t in (0..steps).rev() {
            let g = &cache.gates[t];
            let (c, c_prev) = (&cache.c[t + 1], &cache.c[t]);
            for i in 0..b {
                for k in 0..u {
                    let j = i * u + k;
                    let dh = dh_seq.data[(i * steps + t) * u + k] + dh_next[j];
                    let (ig, fg, gg, og) = (
                        g[i * 4 * u + k],
                        g[i * 4 * u + u + k],
                        g[i * 4 * u + 2 * u + k],
                        g[i * 4 * u + 3 * u + k],
                    );
                    let tc = c[j].tanh();
                    let dc = dh * og * (one - tc * tc) + dc_next[j];
                    let zr = &mut dz[i * 4 * u..(i + 1) * 4 * u];
                    zr[k] = dc * gg * ig * (one - ig);
                    zr[u + k] = dc * c_prev[j] * fg * (one - fg);
                    zr[2 * u + k] = dc * ig * (one - gg * gg);
                    zr[3 * u + k] = dh * tc * og * (one - og);
                    dc_next[j] = dc * fg;
                }
            }
            for i in 0..b {
                xt[i * f..(i + 1) * f].copy_from_slice(&x.data[(i * steps + t) * f..(i * steps + t + 1) * f]);
            }
            matmul_at_b_acc(&xt, &dz, &mut self.wx.grad.data, b, f, 4 * u);
            matmul_at_b_acc(&cache.h[t], &dz, &mut self.wh.grad.data, b, u, 4 * u);
            for row in dz.chunks(4 * u) {
                for (bg, &d) in self.bias.grad.data.iter_mut().zip(row) {
                    *bg += d;
                }
            }
            let mut dxt = vec![T::zero(); b * f];
            matmul_a_bt_acc(&dz, &self.wx.value.data, &mut dxt, b, f, 4 * u);
            for i in 0..b {
                dx.data[(i * steps + t) * f..(i * steps + t + 1) * f].copy_from_slice(&dxt[i * f..(i + 1) * f]);
            }
            dh_next.iter_mut().for_each(|v| *v = T::zero());
            matmul_a_bt_acc(&dz, &self.wh.value.data, &mut dh_next, b, u, 4 * u);
        }
        dx
    }
}

/// Last time step of a `[B, T, U]` sequence.
pub fn last_step<T: Float>(seq: &Tensor<T>) -> Tensor<T> {
    let (b, steps, u) = (seq.shape[0], seq.shape[1], seq.shape[2]);
    let mut out = Tensor::zeros(&[b, u]);
    for i in 0..b {
        out.data[i * u..(i + 1) * u].copy_from_slice(&seq.data[(i * steps + steps - 1) * u..(i * steps + steps) * u]);
    }
    out
}

/// Scatters a `[B, U]` gradient into the last step of a zero `[B, T, U]` tensor.
pub fn last_step_backward<T: Float>(d: &Tensor<T>, steps: usize) -> Tensor<T> {
    let (b, u) = (d.shape[0], d.shape[1]);
    let mut out = Tensor::zeros(&[b, steps, u]);
    for i in 0..b {
        out.data[(i * steps + steps - 1) * u..(i * steps + steps) * u].copy_from_slice(&d.data[i * u..(i + 1) * u]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeroed(inputs: usize, units: usize) -> Lstm<f64> {
        let mut l = Lstm::new("l", inputs, units, &mut ChaCha8Rng::seed_from_u64(0));
        for p in [&mut l.wx, &mut l.wh, &mut l.bias] {
            p.value.data.iter_mut().for_each(|v| *v = 0.0);
        }
        l
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let l = zeroed(3, 4);
        let x = Tensor::from_vec(&[2, 5, 3], (0..30).map(|i| i as f64 * 0.1).collect()).unwrap();
        let (y, _) = l.forward(&x).unwrap();
        assert!(y.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forget_bias_keeps_zero_cell() {
        let mut l = zeroed(2, 3);
        l.bias.value.data[3..6].iter_mut().for_each(|v| *v = 10.0);
        let (_, cache) = l.forward(&Tensor::zeros(&[1, 6, 2])).unwrap();
        assert!(cache.c.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn default_init_has_unit_forget_bias() {
        let l = Lstm::<f32>::new("l", 11, 25, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(l.bias.value.data[25..50].iter().all(|v| *v == 1.0));
        assert_eq!(l.wx.value.len() + l.wh.value.len() + l.bias.value.len(), 3700);
    }
}
