use super::layers::Param;
use super::tensor::Float;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Float> AdamState<T> {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.value.len()) {
            return Err(Error::shape("adam", "moments shaped like parameters", "different parameter set"));
        }
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let bc1 = T::of(1.0 - self.beta1.powf(self.step as f64));
        let bc2 = T::of(1.0 - self.beta2.powf(self.step as f64));
        let (lr, eps, one) = (T::of(self.lr), T::of(self.eps), T::one());
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for (((w, &g), mi), vi) in p.value.data.iter_mut().zip(&p.grad.data).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (one - b1) * g;
                *vi = b2 * *vi + (one - b2) * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Linear learning-rate scaling with the mini-batch size.
pub fn scale_lr(old_batch_size: usize, old_lr: f64, new_batch_size: usize) -> f64 {
    old_lr * new_batch_size as f64 / old_batch_size as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn scalar(v: f64) -> Param<f64> {
        Param::new("x", Tensor::from_vec(&[1], vec![v]).unwrap())
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = scalar(0.7);
        let mut adam = AdamState::new(0.1);
        for _ in 0..10 {
            adam.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.value.data[0], 0.7);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.01] {
            let mut p = scalar(1.0);
            p.grad.data[0] = g;
            AdamState::new(0.01).step(&mut [&mut p]).unwrap();
            assert!((p.value.data[0] - (1.0 - 0.01 * f64::signum(g))).abs() < 1e-6);
        }
    }

    #[test]
    fn quadratic_converges() {
        let mut p = scalar(1.0);
        let mut adam = AdamState::new(1e-2);
        for _ in 0..2000 {
            p.grad.data[0] = 2.0 * (p.value.data[0] - 0.3);
            adam.step(&mut [&mut p]).unwrap();
        }
        assert!((p.value.data[0] - 0.3).powi(2) < 1e-6);
    }

    #[test]
    fn lr_scaling_examples() {
        assert_eq!(scale_lr(64, 1e-3, 64), 1e-3);
        assert!((scale_lr(1, 1e-5, 128) - 1.28e-3).abs() < 1e-15);
    }
}
