//! The three forecasting networks and the smart-persistence baseline.
//!
//! Method A consumes sky images, Method B the nine-channel feature maps and
//! Method C the ten scalar feature series. A and B share one CNN tower that
//! runs on every lookback frame; its 40 features plus the step's normalized
//! GHI feed a two-layer LSTM and a linear 90-unit head.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{SampleWindow, HORIZONS, LOOKBACK, METHOD_B_CHANNELS, METHOD_C_CHANNELS};
use crate::nn::{
    assign_weights, dropout, dropout_backward, last_step, last_step_backward, load_weights, mae_loss, maxpool2,
    maxpool2_backward, relu, relu_backward, save_weights, Conv1x1Scale, Conv2d, Dense, Float, Lstm, Param, Tensor,
    Trainable,
};

/// Reference parameter totals reported for the original models (A, B, C).
pub const REFERENCE_PARAMETER_COUNTS: [(Method, usize); 3] = [(Method::A, 85_228), (Method::B, 85_300), (Method::C, 42_640)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    A,
    B,
    C,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::A => "A",
            Method::B => "B",
            Method::C => "C",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Method::A),
            "B" => Ok(Method::B),
            "C" => Ok(Method::C),
            other => Err(Error::Config(format!("unknown method '{other}', expected A, B or C"))),
        }
    }

    pub fn uses_images(self) -> bool {
        self != Method::C
    }

    pub fn reference_parameter_count(self) -> usize {
        REFERENCE_PARAMETER_COUNTS.iter().find(|(m, _)| *m == self).map(|(_, n)| *n).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub method: Method,
    /// Empty for Method C.
    pub conv_filters: Vec<usize>,
    pub kernel: usize,
    pub pools: usize,
    pub lstm_units: [usize; 2],
    pub dense_units: usize,
    pub dropout: f64,
    pub lr: f64,
    pub batch_size: usize,
    /// Frame edge length for A/B.
    pub image_size: usize,
}

impl ArchitectureSpec {
    pub fn for_method(method: Method) -> Self {
        let image = method.uses_images();
        Self {
            method,
            conv_filters: if image { vec![8, 8, 16, 24, 32, 40] } else { Vec::new() },
            kernel: 3,
            pools: if image { 5 } else { 0 },
            lstm_units: [25, 25],
            dense_units: HORIZONS,
            dropout: if image { 0.05 } else { 0.0 },
            lr: if image { 1.5e-5 } else { 2e-4 },
            batch_size: if image { 128 } else { 1024 },
            image_size: if image { 100 } else { 0 },
        }
    }

    pub fn with_image_size(mut self, size: usize) -> Self {
        self.image_size = size;
        self
    }

    pub fn input_channels(&self) -> usize {
        match self.method {
            Method::A => 3,
            Method::B => METHOD_B_CHANNELS,
            Method::C => METHOD_C_CHANNELS,
        }
    }

    /// Spatial extent of each tower stage input and the kernel applied to it.
    pub fn conv_plan(&self) -> Result<Vec<(usize, usize)>> {
        let mut plan = Vec::new();
        let mut extent = self.image_size;
        let n = self.conv_filters.len();
        for i in 0..n {
            let last = i + 1 == n;
            let k = if last { self.kernel.min(extent) } else { self.kernel };
            if extent < k || extent == 0 {
                return Err(Error::Config(format!(
                    "image size {} too small for conv layer {} (input {extent}px)",
                    self.image_size,
                    i + 1
                )));
            }
            plan.push((extent, k));
            extent -= k - 1;
            if i < self.pools {
                extent /= 2;
            }
        }
        if self.pools >= n && n > 0 {
            return Err(Error::Config("pool count must be below the conv layer count".into()));
        }
        Ok(plan)
    }

    /// Per-step width of the first LSTM layer's input (features plus GHI).
    pub fn step_features(&self) -> Result<usize> {
        if self.method.uses_images() {
            let plan = self.conv_plan()?;
            let (extent, k) = plan[plan.len() - 1];
            let side = extent - k + 1;
            Ok(side * side * self.conv_filters[self.conv_filters.len() - 1] + 1)
        } else {
            Ok(METHOD_C_CHANNELS + 1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dense_units != HORIZONS {
            return Err(Error::Config(format!("dense head must have {HORIZONS} units")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.lstm_units.contains(&0) || self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::Config("LSTM units, batch size and lr must be positive".into()));
        }
        if self.method.uses_images() {
            if self.conv_filters.is_empty() {
                return Err(Error::Config("image methods need conv filters".into()));
            }
            self.conv_plan()?;
        } else if !self.conv_filters.is_empty() {
            return Err(Error::Config("method C has no conv tower".into()));
        }
        Ok(())
    }

    /// Closed-form parameter count of the implemented wiring.
    pub fn parameter_count(&self) -> Result<usize> {
        self.validate()?;
        let lstm = |f: usize, u: usize| 4 * u * (f + u + 1);
        let [u1, u2] = self.lstm_units;
        let mut n = lstm(self.step_features()?, u1) + lstm(u1, u2) + u2 * self.dense_units + self.dense_units;
        if self.method.uses_images() {
            let mut cin = self.input_channels();
            n += cin;
            for (&cout, (_, k)) in self.conv_filters.iter().zip(self.conv_plan()?) {
                n += k * k * cin * cout + cout;
                cin = cout;
            }
        }
        Ok(n)
    }
}

/// Step inputs for a set of windows.
#[derive(Debug, Clone, PartialEq)]
pub enum StepInputs<T> {
    /// `[N, 15, 10]` scaled feature series.
    Series(Tensor<T>),
    /// Shared `[H, W, C]` frames; window `i` uses frames `starts[i] .. starts[i] + 15`.
    Frames { frames: Vec<Tensor<T>>, starts: Vec<usize> },
}

/// Inputs and targets of a dataset of windows.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastData<T> {
    pub inputs: StepInputs<T>,
    /// `[N, 15]` normalized GHI history.
    pub ghi: Tensor<T>,
    /// `[N, 90]` normalized targets.
    pub targets: Tensor<T>,
}

impl<T: Float> ForecastData<T> {
    fn ghi_and_targets(windows: &[SampleWindow]) -> Result<(Tensor<T>, Tensor<T>)> {
        let n = windows.len();
        let ghi = windows.iter().flat_map(|w| w.ghi_history.iter().map(|v| T::of(*v))).collect();
        let tgt = windows.iter().flat_map(|w| w.targets.iter().map(|v| T::of(*v))).collect();
        Ok((Tensor::from_vec(&[n, LOOKBACK], ghi)?, Tensor::from_vec(&[n, HORIZONS], tgt)?))
    }

    pub fn series(windows: &[SampleWindow]) -> Result<Self> {
        let n = windows.len();
        let mut x = Vec::with_capacity(n * LOOKBACK * METHOD_C_CHANNELS);
        for w in windows {
            if w.inputs.len() != LOOKBACK {
                return Err(Error::shape("method C input", LOOKBACK, w.inputs.len()));
            }
            x.extend(w.inputs.iter().flatten().map(|v| T::of(*v)));
        }
        let (ghi, targets) = Self::ghi_and_targets(windows)?;
        Ok(Self {
            inputs: StepInputs::Series(Tensor::from_vec(&[n, LOOKBACK, METHOD_C_CHANNELS], x)?),
            ghi,
            targets,
        })
    }

    /// `frames[i]` belongs to feature row `i`; windows index rows by `start`.
    pub fn frames(frames: Vec<Tensor<T>>, windows: &[SampleWindow]) -> Result<Self> {
        if let Some(w) = windows.iter().find(|w| w.start + LOOKBACK > frames.len()) {
            return Err(Error::shape("frame inputs", w.start + LOOKBACK, frames.len()));
        }
        if let Some(f) = frames.iter().find(|f| f.shape != frames[0].shape) {
            return Err(Error::shape("frame inputs", format!("{:?}", frames[0].shape), format!("{:?}", f.shape)));
        }
        let (ghi, targets) = Self::ghi_and_targets(windows)?;
        Ok(Self {
            inputs: StepInputs::Frames {
                frames,
                starts: windows.iter().map(|w| w.start).collect(),
            },
            ghi,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.shape[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn batch_targets(&self, idx: &[usize]) -> Tensor<T> {
        let data = idx.iter().flat_map(|&i| self.targets.outer(i).iter().copied()).collect();
        Tensor {
            shape: vec![idx.len(), HORIZONS],
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Tower<T> {
    scale: Conv1x1Scale<T>,
    convs: Vec<Conv2d<T>>,
    pools: usize,
}

/// Activations of one frame through the tower, kept for the backward pass.
struct TowerTrace<T> {
    scaled_in: Tensor<T>,
    conv_in: Vec<Tensor<T>>,
    conv_out: Vec<Tensor<T>>,
}

impl<T: Float> Tower<T> {
    fn forward_trace(&self, x: &Tensor<T>) -> Result<(Tensor<T>, TowerTrace<T>)> {
        let mut h = self.scale.forward(x)?;
        let mut trace = TowerTrace {
            scaled_in: x.clone(),
            conv_in: Vec::with_capacity(self.convs.len()),
            conv_out: Vec::with_capacity(self.convs.len()),
        };
        for (i, conv) in self.convs.iter().enumerate() {
            let z = conv.forward(&h)?;
            trace.conv_in.push(h);
            let a = relu(&z);
            trace.conv_out.push(z);
            h = if i < self.pools { maxpool2(&a) } else { a };
        }
        Ok((h, trace))
    }

    fn backward(&mut self, trace: &TowerTrace<T>, dout: Tensor<T>) -> Tensor<T> {
        let mut d = dout;
        for i in (0..self.convs.len()).rev() {
            let z = &trace.conv_out[i];
            if i < self.pools {
                d = maxpool2_backward(&relu(z), &d);
            }
            d = relu_backward(z, &d);
            d = self.convs[i].backward(&trace.conv_in[i], &d);
        }
        self.scale.backward(&trace.scaled_in, &d)
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut v = vec![&self.scale.weight];
        for c in &self.convs {
            v.push(&c.weight);
            v.push(&c.bias);
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = vec![&mut self.scale.weight];
        for c in &mut self.convs {
            v.push(&mut c.weight);
            v.push(&mut c.bias);
        }
        v
    }
}

/// Trained or freshly initialized forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub spec: ArchitectureSpec,
    tower: Option<Tower<T>>,
    lstm1: Lstm<T>,
    lstm2: Lstm<T>,
    head: Dense<T>,
}

struct ForwardCache<T> {
    /// LSTM1 input before dropout.
    seq_in: Tensor<T>,
    seq_in_mask: Option<Vec<T>>,
    seq_in_dropped: Tensor<T>,
    c1: crate::nn::LstmCache<T>,
    h1: Tensor<T>,
    c2: crate::nn::LstmCache<T>,
    last_mask: Option<Vec<T>>,
    last_dropped: Tensor<T>,
}

pub fn build_model<T: Float>(spec: &ArchitectureSpec, seed: u64) -> Result<Network<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tower = if spec.method.uses_images() {
        let mut cin = spec.input_channels();
        let scale = Conv1x1Scale::new("scale", cin);
        let mut convs = Vec::new();
        for (i, (&cout, (_, k))) in spec.conv_filters.iter().zip(spec.conv_plan()?).enumerate() {
            convs.push(Conv2d::new(&format!("conv{}", i + 1), k, k, cin, cout, &mut rng));
            cin = cout;
        }
        Some(Tower {
            scale,
            convs,
            pools: spec.pools,
        })
    } else {
        None
    };
    let [u1, u2] = spec.lstm_units;
    let lstm1 = Lstm::new("lstm1", spec.step_features()?, u1, &mut rng);
    let lstm2 = Lstm::new("lstm2", u1, u2, &mut rng);
    let head = Dense::new("head", u2, spec.dense_units, &mut rng);
    Ok(Network {
        spec: spec.clone(),
        tower,
        lstm1,
        lstm2,
        head,
    })
}

impl<T: Float> Network<T> {
    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Assembles the `[B, 15, F + 1]` LSTM input.
    fn step_inputs(&self, data: &ForecastData<T>, idx: &[usize]) -> Result<Tensor<T>> {
        let f = self.lstm1.inputs();
        let b = idx.len();
        let mut seq = Tensor::zeros(&[b, LOOKBACK, f]);
        for (bi, &i) in idx.iter().enumerate() {
            if i >= data.len() {
                return Err(Error::shape("batch index", format!("< {}", data.len()), i));
            }
            for t in 0..LOOKBACK {
                let row = &mut seq.data[(bi * LOOKBACK + t) * f..(bi * LOOKBACK + t + 1) * f];
                match (&data.inputs, &self.tower) {
                    (StepInputs::Series(x), None) => {
                        if x.shape[1..] != [LOOKBACK, f - 1] {
                            return Err(Error::shape("series input", format!("[N, {LOOKBACK}, {}]", f - 1), format!("{:?}", x.shape)));
                        }
                        row[..f - 1].copy_from_slice(&x.data[(i * LOOKBACK + t) * (f - 1)..(i * LOOKBACK + t + 1) * (f - 1)]);
                    }
                    (StepInputs::Frames { frames, starts }, Some(tower)) => {
                        let (feat, _) = tower.forward_trace(&frames[starts[i] + t])?;
                        if feat.len() != f - 1 {
                            return Err(Error::shape("cnn tower output", f - 1, feat.len()));
                        }
                        row[..f - 1].copy_from_slice(&feat.data);
                    }
                    _ => {
                        return Err(Error::InvalidInput(format!(
                            "method {} got the wrong kind of input",
                            self.spec.method.tag()
                        )))
                    }
                }
                row[f - 1] = data.ghi.data[i * LOOKBACK + t];
            }
        }
        Ok(seq)
    }

    fn forward_cached(
        &self,
        data: &ForecastData<T>,
        idx: &[usize],
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor<T>, ForwardCache<T>)> {
        let seq_in = self.step_inputs(data, idx)?;
        let (seq_in_dropped, seq_in_mask) = dropout(&seq_in, self.spec.dropout, training, rng);
        let (h1, c1) = self.lstm1.forward(&seq_in_dropped)?;
        let (h2, c2) = self.lstm2.forward(&h1)?;
        let last = last_step(&h2);
        let (last_dropped, last_mask) = dropout(&last, self.spec.dropout, training, rng);
        let y = self.head.forward(&last_dropped)?;
        Ok((
            y,
            ForwardCache {
                seq_in,
                seq_in_mask,
                seq_in_dropped,
                c1,
                h1,
                c2,
                last_mask,
                last_dropped,
            },
        ))
    }

    /// Normalized outputs `[B, 90]` in inference mode.
    pub fn forward(&self, data: &ForecastData<T>, idx: &[usize]) -> Result<Tensor<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward_cached(data, idx, false, &mut rng)?.0)
    }

    fn backward(&mut self, data: &ForecastData<T>, idx: &[usize], cache: &ForwardCache<T>, dy: &Tensor<T>) -> Result<()> {
        let dlast = self.head.backward(&cache.last_dropped, dy);
        let dlast = dropout_backward(cache.last_mask.as_deref(), dlast);
        let dh2 = last_step_backward(&dlast, LOOKBACK);
        let dh1 = self.lstm2.backward(&cache.h1, &cache.c2, &dh2);
        let dseq = self.lstm1.backward(&cache.seq_in_dropped, &cache.c1, &dh1);
        let dseq = dropout_backward(cache.seq_in_mask.as_deref(), dseq);
        debug_assert_eq!(dseq.shape, cache.seq_in.shape);
        if let (Some(tower), StepInputs::Frames { frames, starts }) = (self.tower.as_mut(), &data.inputs) {
            let f = self.lstm1.inputs();
            for (bi, &i) in idx.iter().enumerate() {
                for t in 0..LOOKBACK {
                    let off = (bi * LOOKBACK + t) * f;
                    let g = &dseq.data[off..off + f - 1];
                    if g.iter().all(|v| *v == T::zero()) {
                        continue;
                    }
                    // activations are recomputed per frame to bound memory
                    let (feat, trace) = tower.forward_trace(&frames[starts[i] + t])?;
                    let dfeat = Tensor {
                        shape: feat.shape.clone(),
                        data: g.to_vec(),
                    };
                    tower.backward(&trace, dfeat);
                }
            }
        }
        Ok(())
    }

    /// Forecasts in W/m²: outputs times G0, clamped at zero.
    pub fn predict(
        &self,
        data: &ForecastData<T>,
        issue_times: &[DateTime<Utc>],
        solar_constant: f64,
    ) -> Result<Vec<ForecastRecord>> {
        if issue_times.len() != data.len() {
            return Err(Error::shape("predict", data.len(), issue_times.len()));
        }
        let idx: Vec<usize> = (0..data.len()).collect();
        let mut out = Vec::with_capacity(idx.len());
        for chunk in idx.chunks(256) {
            let y = self.forward(data, chunk)?;
            for (bi, &i) in chunk.iter().enumerate() {
                let values = y.outer(bi).iter().map(|v| denormalize(v.to_f64().unwrap_or(f64::NAN), solar_constant)).collect();
                out.push(ForecastRecord {
                    issue_time: issue_times[i],
                    values,
                    method: self.spec.method.tag().to_string(),
                });
            }
        }
        if out.iter().flat_map(|r| &r.values).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite forecast".into()));
        }
        Ok(out)
    }

    /// Text summary with per-layer shapes and parameter totals.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method {}", self.spec.method.tag());
        let mut extent = self.spec.image_size;
        if let Some(tower) = &self.tower {
            let _ = writeln!(
                s,
                "  {:<10} in [{extent}, {extent}, {}] params {}",
                "scale",
                self.spec.input_channels(),
                tower.scale.weight.value.len()
            );
            for (i, conv) in tower.convs.iter().enumerate() {
                let sh = &conv.weight.value.shape;
                extent = extent + 1 - sh[0];
                let pooled = if i < tower.pools { extent / 2 } else { extent };
                let _ = writeln!(
                    s,
                    "  {:<10} kernel {}x{} out [{extent}, {extent}, {}]{} params {}",
                    format!("conv{}", i + 1),
                    sh[0],
                    sh[1],
                    sh[3],
                    if i < tower.pools { format!(" pool -> [{pooled}, {pooled}, {}]", sh[3]) } else { String::new() },
                    conv.weight.value.len() + conv.bias.value.len()
                );
                extent = pooled;
            }
        }
        let [u1, u2] = self.spec.lstm_units;
        let lstm_params = |l: &Lstm<T>| l.wx.value.len() + l.wh.value.len() + l.bias.value.len();
        let _ = writeln!(s, "  {:<10} in [{LOOKBACK}, {}] out [{LOOKBACK}, {u1}] params {}", "lstm1", self.lstm1.inputs(), lstm_params(&self.lstm1));
        let _ = writeln!(s, "  {:<10} in [{LOOKBACK}, {u1}] out [{u2}] params {}", "lstm2", lstm_params(&self.lstm2));
        let _ = writeln!(
            s,
            "  {:<10} in [{u2}] out [{}] params {}",
            "dense",
            self.head.units(),
            self.head.weight.value.len() + self.head.bias.value.len()
        );
        let _ = writeln!(s, "  dropout {} lr {} batch {}", self.spec.dropout, self.spec.lr, self.spec.batch_size);
        let _ = writeln!(s, "total parameters {}", self.parameter_count());
        let _ = writeln!(s, "reference total {}", self.spec.method.reference_parameter_count());
        if self.tower.is_some() {
            let _ = writeln!(
                s,
                "note: pools follow conv1-conv5 and the last conv kernel is clipped to its input extent"
            );
        }
        s
    }

    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        let meta = serde_json::json!({ "architecture": self.spec, "extra": extra });
        save_weights(path, &self.params(), meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, tensors) = load_weights(path)?;
        let spec: ArchitectureSpec = serde_json::from_value(header.meta["architecture"].clone())?;
        let mut net = build_model(&spec, 0)?;
        assign_weights(&mut net.params_mut(), &header, &tensors)?;
        Ok(net)
    }
}

impl<T: Float> Trainable<T> for Network<T> {
    type Data = ForecastData<T>;

    fn data_len(data: &Self::Data) -> usize {
        data.len()
    }

    fn loss_and_grad(&mut self, data: &Self::Data, idx: &[usize], rng: &mut ChaCha8Rng) -> Result<f64> {
        let (y, cache) = self.forward_cached(data, idx, true, rng)?;
        let (loss, dy) = mae_loss(&y, &data.batch_targets(idx))?;
        self.backward(data, idx, &cache, &dy)?;
        Ok(loss.to_f64().unwrap_or(f64::NAN))
    }

    fn loss(&self, data: &Self::Data, idx: &[usize]) -> Result<f64> {
        let y = self.forward(data, idx)?;
        Ok(mae_loss(&y, &data.batch_targets(idx))?.0.to_f64().unwrap_or(f64::NAN))
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.tower.as_ref().map(Tower::params).unwrap_or_default();
        v.extend([&self.lstm1.wx, &self.lstm1.wh, &self.lstm1.bias]);
        v.extend([&self.lstm2.wx, &self.lstm2.wh, &self.lstm2.bias]);
        v.extend([&self.head.weight, &self.head.bias]);
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.tower.as_mut().map(Tower::params_mut).unwrap_or_default();
        v.extend([&mut self.lstm1.wx, &mut self.lstm1.wh, &mut self.lstm1.bias]);
        v.extend([&mut self.lstm2.wx, &mut self.lstm2.wh, &mut self.lstm2.bias]);
        v.extend([&mut self.head.weight, &mut self.head.bias]);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub issue_time: DateTime<Utc>,
    /// W/m² at +10 s .. +900 s.
    pub values: Vec<f64>,
    pub method: String,
}

pub fn normalize(ghi: f64, solar_constant: f64) -> f64 {
    ghi / solar_constant
}

pub fn denormalize(v: f64, solar_constant: f64) -> f64 {
    (v * solar_constant).max(0.0)
}

/// Current clearness carried forward: `k(t) * GHI_clear(t + h)`.
pub fn smart_persistence(
    issue_time: DateTime<Utc>,
    ghi_t: f64,
    ghi_clear_t: f64,
    ghi_clear_future: &[f64],
) -> Result<ForecastRecord> {
    let k = crate::solar::clearness_index(ghi_t, ghi_clear_t).ok_or_else(|| {
        Error::InvalidInput(format!("clear-sky GHI {ghi_clear_t} W/m2 too small for persistence"))
    })?;
    if ghi_clear_future.len() != HORIZONS {
        return Err(Error::shape("smart persistence", HORIZONS, ghi_clear_future.len()));
    }
    Ok(ForecastRecord {
        issue_time,
        values: ghi_clear_future.iter().map(|g| k * g).collect(),
        method: "persistence".into(),
    })
}

pub fn smart_persistence_for(window: &SampleWindow) -> Result<ForecastRecord> {
    smart_persistence(window.issue_time, window.ghi_now, window.ghi_clear_now, &window.ghi_clear_future)
}
