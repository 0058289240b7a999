//! Central finite-difference checks in f64. Each check builds a random
//! instance, takes `L = sum(y * r)` for a random `r`, and returns the
//! norm-wise relative error between analytic and numeric gradients.

use asi_nowcast::features::{HORIZONS, LOOKBACK, METHOD_B_CHANNELS, METHOD_C_CHANNELS};
use asi_nowcast::forecasters::{build_model, ArchitectureSpec, ForecastData, Method, Network};
use asi_nowcast::nn::{
    last_step, last_step_backward, mae_loss, maxpool2, maxpool2_backward, Conv1x1Scale, Conv2d, Dense, Lstm, Tensor,
    Trainable,
};
use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-6;

pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + n.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

/// Numeric gradient of `f` with respect to every entry of `v`.
fn numeric(v: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let orig = v[i];
            v[i] = orig + EPS;
            let up = f(v);
            v[i] = orig - EPS;
            let down = f(v);
            v[i] = orig;
            (up - down) / (2.0 * EPS)
        })
        .collect()
}

fn with_data(t: &Tensor<f64>, d: &[f64]) -> Tensor<f64> {
    Tensor {
        shape: t.shape.clone(),
        data: d.to_vec(),
    }
}

pub fn conv(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (rng.gen_range(4..8), rng.gen_range(4..8));
    let (k, cin, cout) = (rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..4));
    let x = random(&mut rng, &[h, w, cin]);
    let mut layer = Conv2d::<f64>::new("c", k, k, cin, cout, &mut rng);
    layer.bias.value = random(&mut rng, &[cout]);
    let r = random(&mut rng, &[h - k + 1, w - k + 1, cout]);
    let dx = layer.backward(&x, &r);
    let mut worst = rel_err(
        &dx.data,
        &numeric(&mut x.data.clone(), |d| dot(&layer.forward(&with_data(&x, d)).unwrap(), &r)),
    );
    let wg = layer.weight.grad.data.clone();
    let bg = layer.bias.grad.data.clone();
    let probe = layer.clone();
    let nw = numeric(&mut layer.weight.value.data.clone(), |d| {
        let mut l = probe.clone();
        l.weight.value.data.copy_from_slice(d);
        dot(&l.forward(&x).unwrap(), &r)
    });
    let nb = numeric(&mut layer.bias.value.data.clone(), |d| {
        let mut l = probe.clone();
        l.bias.value.data.copy_from_slice(d);
        dot(&l.forward(&x).unwrap(), &r)
    });
    worst = worst.max(rel_err(&wg, &nw)).max(rel_err(&bg, &nb));
    worst
}

pub fn scale(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [rng.gen_range(2..6), rng.gen_range(2..6), rng.gen_range(1..5)];
    let x = random(&mut rng, &shape);
    let mut layer = Conv1x1Scale::<f64>::new("s", shape[2]);
    layer.weight.value = random(&mut rng, &[shape[2]]);
    let r = random(&mut rng, &shape);
    let dx = layer.backward(&x, &r);
    let ex = rel_err(
        &dx.data,
        &numeric(&mut x.data.clone(), |d| dot(&layer.forward(&with_data(&x, d)).unwrap(), &r)),
    );
    let probe = layer.clone();
    let nw = numeric(&mut layer.weight.value.data.clone(), |d| {
        let mut l = probe.clone();
        l.weight.value.data.copy_from_slice(d);
        dot(&l.forward(&x).unwrap(), &r)
    });
    ex.max(rel_err(&layer.weight.grad.data, &nw))
}

pub fn pool(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [rng.gen_range(2..8), rng.gen_range(2..8), rng.gen_range(1..4)];
    let x = random(&mut rng, &shape);
    let r = random(&mut rng, &maxpool2(&x).shape);
    let dx = maxpool2_backward(&x, &r);
    rel_err(&dx.data, &numeric(&mut x.data.clone(), |d| dot(&maxpool2(&with_data(&x, d)), &r)))
}

pub fn dense(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, i, u) = (rng.gen_range(1..5), rng.gen_range(1..7), rng.gen_range(1..7));
    let x = random(&mut rng, &[b, i]);
    let mut layer = Dense::<f64>::new("d", i, u, &mut rng);
    layer.bias.value = random(&mut rng, &[u]);
    let r = random(&mut rng, &[b, u]);
    let dx = layer.backward(&x, &r);
    let mut worst = rel_err(
        &dx.data,
        &numeric(&mut x.data.clone(), |d| dot(&layer.forward(&with_data(&x, d)).unwrap(), &r)),
    );
    let probe = layer.clone();
    let nw = numeric(&mut layer.weight.value.data.clone(), |d| {
        let mut l = probe.clone();
        l.weight.value.data.copy_from_slice(d);
        dot(&l.forward(&x).unwrap(), &r)
    });
    let nb = numeric(&mut layer.bias.value.data.clone(), |d| {
        let mut l = probe.clone();
        l.bias.value.data.copy_from_slice(d);
        dot(&l.forward(&x).unwrap(), &r)
    });
    worst = worst.max(rel_err(&layer.weight.grad.data, &nw)).max(rel_err(&layer.bias.grad.data, &nb));
    worst
}

pub fn lstm(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, t, f, u) = (rng.gen_range(1..4), rng.gen_range(2..6), rng.gen_range(1..5), rng.gen_range(1..5));
    let x = random(&mut rng, &[b, t, f]);
    let mut layer = Lstm::<f64>::new("l", f, u, &mut rng);
    layer.bias.value = random(&mut rng, &[4 * u]);
    let r = random(&mut rng, &[b, t, u]);
    let (_, cache) = layer.forward(&x).unwrap();
    let dx = layer.backward(&x, &cache, &r);
    let loss = |l: &Lstm<f64>, x: &Tensor<f64>| dot(&l.forward(x).unwrap().0, &r);
    let mut worst = rel_err(&dx.data, &numeric(&mut x.data.clone(), |d| loss(&layer, &with_data(&x, d))));
    let probe = layer.clone();
    for which in 0..3 {
        let (grad, value) = match which {
            0 => (&layer.wx.grad, &layer.wx.value),
            1 => (&layer.wh.grad, &layer.wh.value),
            _ => (&layer.bias.grad, &layer.bias.value),
        };
        let n = numeric(&mut value.data.clone(), |d| {
            let mut l = probe.clone();
            match which {
                0 => l.wx.value.data.copy_from_slice(d),
                1 => l.wh.value.data.copy_from_slice(d),
                _ => l.bias.value.data.copy_from_slice(d),
            }
            loss(&l, &x)
        });
        worst = worst.max(rel_err(&grad.data, &n));
    }
    // last-step selection feeding a dense head, as in the forecasters
    let seq = layer.forward(&x).unwrap().0;
    let rl = random(&mut rng, &[b, u]);
    let d = last_step_backward(&rl, t);
    let n = numeric(&mut seq.data.clone(), |s| dot(&last_step(&with_data(&seq, s)), &rl));
    worst.max(rel_err(&d.data, &n))
}

pub fn mae(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [rng.gen_range(1..6), rng.gen_range(1..10)];
    let p = random(&mut rng, &shape);
    let t = random(&mut rng, &shape);
    let (_, g) = mae_loss(&p, &t).unwrap();
    rel_err(&g.data, &numeric(&mut p.data.clone(), |d| mae_loss(&with_data(&p, d), &t).unwrap().0))
}

fn toy_windows(n: usize, rng: &mut ChaCha8Rng) -> Vec<asi_nowcast::features::SampleWindow> {
    let t0 = Utc.with_ymd_and_hms(2023, 6, 1, 10, 0, 0).unwrap();
    (0..n)
        .map(|i| asi_nowcast::features::SampleWindow {
            issue_time: t0 + chrono::Duration::seconds(10 * i as i64),
            start: i,
            inputs: (0..LOOKBACK)
                .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
                .collect(),
            ghi_history: (0..LOOKBACK).map(|_| rng.gen_range(0.0..1.0)).collect(),
            targets: (0..HORIZONS).map(|_| rng.gen_range(0.0..1.0)).collect(),
            ghi_now: 500.0,
            ghi_clear_now: 800.0,
            ghi_clear_future: vec![800.0; HORIZONS],
        })
        .collect()
}

/// Whole-network check: analytic MAE gradients against finite differences
/// of the inference loss, on a sample of entries of every parameter.
pub fn network(method: Method, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = ArchitectureSpec::for_method(method);
    spec.dropout = 0.0;
    spec.lstm_units = [3, 4];
    let n = 3;
    let windows = toy_windows(n, &mut rng);
    let data = if method.uses_images() {
        spec.conv_filters = vec![2, 3];
        spec.pools = 1;
        spec.image_size = 8;
        let c = if method == Method::A { 3 } else { METHOD_B_CHANNELS };
        let frames = (0..n + LOOKBACK).map(|_| random(&mut rng, &[8, 8, c])).collect();
        ForecastData::frames(frames, &windows).unwrap()
    } else {
        assert_eq!(windows[0].inputs[0].len(), METHOD_C_CHANNELS);
        ForecastData::series(&windows).unwrap()
    };
    let mut net: Network<f64> = build_model(&spec, seed).unwrap();
    let idx: Vec<usize> = (0..n).collect();
    net.loss_and_grad(&data, &idx, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let grads: Vec<Vec<f64>> = net.params().iter().map(|p| p.grad.data.clone()).collect();
    let mut analytic = Vec::new();
    let mut num = Vec::new();
    for (pi, g) in grads.iter().enumerate() {
        let picks: Vec<usize> = (0..g.len().min(12)).map(|_| rng.gen_range(0..g.len())).collect();
        for j in picks {
            let orig = net.params()[pi].value.data[j];
            let mut eval = |v: f64| {
                net.params_mut()[pi].value.data[j] = v;
                net.loss(&data, &idx).unwrap()
            };
            let up = eval(orig + EPS);
            let down = eval(orig - EPS);
            net.params_mut()[pi].value.data[j] = orig;
            analytic.push(g[j]);
            num.push((up - down) / (2.0 * EPS));
        }
    }
    rel_err(&analytic, &num)
}

/// Worst error of `check` over `shapes` seeds.
pub fn worst(check: fn(u64) -> f64, shapes: u64) -> f64 {
    (0..shapes).map(|s| check(1000 + s)).fold(0.0, f64::max)
}
