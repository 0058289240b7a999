//! Error metrics, skill scores, per-day tables and permutation importance.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{SampleWindow, CADENCE_S, HORIZONS, LOOKBACK, METHOD_C_CHANNELS, METHOD_C_CHANNEL_NAMES};
use crate::forecasters::{denormalize, ForecastData, ForecastRecord, Network, StepInputs};
use crate::nn::{Float, Tensor};

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::shape("metric", truth.len(), pred.len()));
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData("metric over no samples".into()));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((s / pred.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(s / pred.len() as f64)
}

/// `1 - rmse_forecast / rmse_reference`; `None` when the reference RMSE is 0.
pub fn skill_score(rmse_forecast: f64, rmse_reference: f64) -> Option<f64> {
    (rmse_reference > 0.0).then(|| 1.0 - rmse_forecast / rmse_reference)
}

/// Pearson correlation, `None` for fewer than two samples or a constant input.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// Pairwise Pearson matrix of equally long columns.
pub fn correlation_matrix(columns: &[Vec<f64>]) -> Vec<Vec<Option<f64>>> {
    columns
        .iter()
        .map(|a| columns.iter().map(|b| pearson(a, b)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    /// `None` for aggregates over all days.
    pub day: Option<NaiveDate>,
    /// `None` for aggregates over all horizons.
    pub horizon_s: Option<u32>,
    pub samples: usize,
    pub rmse: f64,
    pub mae: f64,
    pub rmse_reference: f64,
    pub ss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub model: String,
    /// Per (day, horizon), sorted by day then horizon.
    pub cells: Vec<MetricCell>,
    /// Per horizon, pooled over days.
    pub by_horizon: Vec<MetricCell>,
    /// Per day, pooled over horizons.
    pub by_day: Vec<MetricCell>,
}

#[derive(Default)]
struct Acc {
    pred: Vec<f64>,
    reference: Vec<f64>,
    truth: Vec<f64>,
}

impl Acc {
    fn cell(&self, day: Option<NaiveDate>, horizon_s: Option<u32>) -> Result<MetricCell> {
        let r = rmse(&self.pred, &self.truth)?;
        let rr = rmse(&self.reference, &self.truth)?;
        Ok(MetricCell {
            day,
            horizon_s,
            samples: self.truth.len(),
            rmse: r,
            mae: mae(&self.pred, &self.truth)?,
            rmse_reference: rr,
            ss: skill_score(r, rr),
        })
    }
}

pub fn horizon_seconds(h: usize) -> u32 {
    ((h + 1) as i64 * CADENCE_S) as u32
}

/// Metrics of `forecasts` against `truth` (W/m², one 90-vector per record),
/// with `reference` as the skill-score baseline. Days are UTC dates of the
/// issue time.
pub fn evaluate(
    model: &str,
    forecasts: &[ForecastRecord],
    reference: &[ForecastRecord],
    truth: &[Vec<f64>],
) -> Result<MetricTable> {
    if forecasts.len() != truth.len() || reference.len() != truth.len() {
        return Err(Error::shape(
            "evaluate",
            truth.len(),
            format!("{} forecasts / {} reference", forecasts.len(), reference.len()),
        ));
    }
    if truth.is_empty() {
        return Err(Error::InsufficientData("nothing to evaluate".into()));
    }
    let mut cells: BTreeMap<(NaiveDate, usize), Acc> = BTreeMap::new();
    for ((f, r), t) in forecasts.iter().zip(reference).zip(truth) {
        if f.issue_time != r.issue_time {
            return Err(Error::InvalidInput(format!(
                "forecast issued {} paired with reference issued {}",
                f.issue_time, r.issue_time
            )));
        }
        for v in [&f.values, &r.values, t] {
            if v.len() != HORIZONS {
                return Err(Error::shape("evaluate horizons", HORIZONS, v.len()));
            }
        }
        let day = f.issue_time.date_naive();
        for h in 0..HORIZONS {
            let acc = cells.entry((day, h)).or_default();
            acc.pred.push(f.values[h]);
            acc.reference.push(r.values[h]);
            acc.truth.push(t[h]);
        }
    }
    let mut by_h: BTreeMap<usize, Acc> = BTreeMap::new();
    let mut by_d: BTreeMap<NaiveDate, Acc> = BTreeMap::new();
    let mut out = Vec::with_capacity(cells.len());
    for ((day, h), acc) in &cells {
        out.push(acc.cell(Some(*day), Some(horizon_seconds(*h)))?);
        for target in [by_h.entry(*h).or_default(), by_d.entry(*day).or_default()] {
            target.pred.extend(&acc.pred);
            target.reference.extend(&acc.reference);
            target.truth.extend(&acc.truth);
        }
    }
    Ok(MetricTable {
        model: model.to_string(),
        cells: out,
        by_horizon: by_h
            .iter()
            .map(|(h, a)| a.cell(None, Some(horizon_seconds(*h))))
            .collect::<Result<_>>()?,
        by_day: by_d.iter().map(|(d, a)| a.cell(Some(*d), None)).collect::<Result<_>>()?,
    })
}

impl MetricTable {
    /// Mean over horizons of the pooled per-horizon RMSE.
    pub fn mean_rmse(&self) -> f64 {
        self.by_horizon.iter().map(|c| c.rmse).sum::<f64>() / self.by_horizon.len().max(1) as f64
    }

    /// Mean SS over horizons at or beyond `min_horizon_s` (undefined cells skipped).
    pub fn mean_ss_from(&self, min_horizon_s: u32) -> Option<f64> {
        let v: Vec<f64> = self
            .by_horizon
            .iter()
            .filter(|c| c.horizon_s.is_some_and(|h| h >= min_horizon_s))
            .filter_map(|c| c.ss)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// CSV with header `day,horizon_s,rmse,mae,ss,model`; undefined SS is empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["day", "horizon_s", "rmse", "mae", "ss", "model"])?;
        for c in &self.cells {
            w.write_record([
                c.day.map(|d| d.to_string()).unwrap_or_default(),
                c.horizon_s.map(|h| h.to_string()).unwrap_or_default(),
                c.rmse.to_string(),
                c.mae.to_string(),
                c.ss.map(|s| s.to_string()).unwrap_or_default(),
                self.model.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Anything that maps a window dataset to normalized `[N, 90]` outputs.
pub trait Predictor: Sync {
    fn predict_normalized(&self, data: &ForecastData<f32>) -> Result<Tensor<f32>>;
}

impl Predictor for Network<f32> {
    fn predict_normalized(&self, data: &ForecastData<f32>) -> Result<Tensor<f32>> {
        let idx: Vec<usize> = (0..data.len()).collect();
        let mut out = Vec::with_capacity(data.len() * HORIZONS);
        for chunk in idx.chunks(512) {
            out.extend(self.forward(data, chunk)?.data);
        }
        Tensor::from_vec(&[data.len(), HORIZONS], out)
    }
}

/// Feature names that permutation importance can shuffle: the ten series
/// channels followed by the GHI history.
pub fn pi_feature_names() -> Vec<String> {
    METHOD_C_CHANNEL_NAMES
        .iter()
        .map(|s| s.to_string())
        .chain(std::iter::once("ghi".to_string()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PiConfig {
    pub repetitions: usize,
    pub bucket_s: u32,
    pub seed: u64,
    pub solar_constant: f64,
}

impl Default for PiConfig {
    fn default() -> Self {
        Self {
            repetitions: 10,
            bucket_s: 100,
            seed: 0,
            solar_constant: crate::solar::DEFAULT_SOLAR_CONSTANT,
        }
    }
}

impl PiConfig {
    pub fn buckets(&self) -> usize {
        let max = horizon_seconds(HORIZONS - 1);
        max.div_ceil(self.bucket_s.max(1)) as usize
    }

    fn bucket_of(&self, h: usize) -> usize {
        ((horizon_seconds(h) - 1) / self.bucket_s) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiRow {
    pub feature: String,
    /// Mean delta MAE per horizon bucket, W/m².
    pub delta_mae: Vec<f64>,
    /// Mean delta MAE over all horizons.
    pub overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiReport {
    pub repetitions: usize,
    pub bucket_s: u32,
    pub reference_mae: Vec<f64>,
    pub reference_mae_overall: f64,
    pub rows: Vec<PiRow>,
}

impl PiReport {
    /// Long-format CSV: `feature,bucket_end_s,delta_mae,reference_mae`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["feature", "bucket_end_s", "delta_mae", "reference_mae"])?;
        for row in &self.rows {
            for (b, d) in row.delta_mae.iter().enumerate() {
                w.write_record([
                    row.feature.clone(),
                    ((b as u32 + 1) * self.bucket_s).to_string(),
                    d.to_string(),
                    self.reference_mae[b].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Series dataset plus the feature-table row behind every window step.
#[derive(Debug, Clone)]
pub struct PiDataset {
    pub data: ForecastData<f32>,
    /// `[N][15]` row index per window step.
    pub rows: Vec<[usize; LOOKBACK]>,
    /// Ground truth W/m², `[N][90]`.
    pub truth: Vec<Vec<f64>>,
}

impl PiDataset {
    pub fn from_windows(windows: &[SampleWindow], solar_constant: f64) -> Result<Self> {
        let data = ForecastData::series(windows)?;
        let rows = windows
            .iter()
            .map(|w| std::array::from_fn(|t| w.start + t))
            .collect();
        let truth = windows
            .iter()
            .map(|w| w.targets.iter().map(|v| v * solar_constant).collect())
            .collect();
        Ok(Self { data, rows, truth })
    }

    pub fn distinct_rows(&self) -> Vec<usize> {
        self.rows.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Copy with `feature` replaced by the value of row `perm[k]` wherever
    /// row `distinct[k]` appears.
    pub fn permuted(&self, feature: usize, distinct: &[usize], perm: &[usize]) -> Result<ForecastData<f32>> {
        let StepInputs::Series(x) = &self.data.inputs else {
            return Err(Error::InvalidInput("permutation importance needs series inputs".into()));
        };
        if feature > METHOD_C_CHANNELS {
            return Err(Error::InvalidInput(format!("feature index {feature} out of range")));
        }
        // value of the feature per distinct row, taken from its first occurrence
        let pos: BTreeMap<usize, usize> = distinct.iter().enumerate().map(|(k, r)| (*r, k)).collect();
        let mut value = vec![0.0f32; distinct.len()];
        let read = |i: usize, t: usize| -> f32 {
            if feature == METHOD_C_CHANNELS {
                self.data.ghi.data[i * LOOKBACK + t]
            } else {
                x.data[(i * LOOKBACK + t) * METHOD_C_CHANNELS + feature]
            }
        };
        let mut seen = vec![false; distinct.len()];
        for (i, steps) in self.rows.iter().enumerate() {
            for (t, r) in steps.iter().enumerate() {
                let k = pos[r];
                if !seen[k] {
                    seen[k] = true;
                    value[k] = read(i, t);
                }
            }
        }
        let mut out = self.data.clone();
        for (i, steps) in self.rows.iter().enumerate() {
            for (t, r) in steps.iter().enumerate() {
                let v = value[perm[pos[r]]];
                match &mut out.inputs {
                    StepInputs::Series(xs) if feature < METHOD_C_CHANNELS => {
                        xs.data[(i * LOOKBACK + t) * METHOD_C_CHANNELS + feature] = v
                    }
                    _ => out.ghi.data[i * LOOKBACK + t] = v,
                }
            }
        }
        Ok(out)
    }
}

/// Absolute errors per horizon, averaged over windows, in W/m².
fn mae_per_horizon<P: Predictor>(model: &P, data: &ForecastData<f32>, truth: &[Vec<f64>], g0: f64) -> Result<Vec<f64>> {
    let y = model.predict_normalized(data)?;
    let mut acc = vec![0.0; HORIZONS];
    for (i, t) in truth.iter().enumerate() {
        for h in 0..HORIZONS {
            acc[h] += (denormalize(y.data[i * HORIZONS + h] as f64, g0) - t[h]).abs();
        }
    }
    let n = truth.len().max(1) as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

fn bucketize(per_h: &[f64], cfg: &PiConfig) -> Vec<f64> {
    let nb = cfg.buckets();
    let mut sum = vec![0.0; nb];
    let mut cnt = vec![0usize; nb];
    for (h, v) in per_h.iter().enumerate() {
        let b = cfg.bucket_of(h);
        sum[b] += v;
        cnt[b] += 1;
    }
    sum.iter().zip(&cnt).map(|(s, c)| s / (*c).max(1) as f64).collect()
}

/// Delta MAE per horizon for one explicit permutation of the distinct rows.
pub fn pi_for_permutation<P: Predictor>(
    model: &P,
    ds: &PiDataset,
    feature: usize,
    perm: &[usize],
    reference: &[f64],
    g0: f64,
) -> Result<Vec<f64>> {
    let distinct = ds.distinct_rows();
    if perm.len() != distinct.len() {
        return Err(Error::shape("permutation", distinct.len(), perm.len()));
    }
    let shuffled = ds.permuted(feature, &distinct, perm)?;
    let m = mae_per_horizon(model, &shuffled, &ds.truth, g0)?;
    Ok(m.iter().zip(reference).map(|(a, b)| a - b).collect())
}

/// Permutation importance of every feature in `features`, averaged over
/// repetitions. Each repetition's seed derives from the master seed, the
/// feature and the repetition index.
pub fn permutation_importance<P: Predictor>(
    model: &P,
    ds: &PiDataset,
    features: &[usize],
    cfg: &PiConfig,
) -> Result<PiReport> {
    if ds.truth.is_empty() {
        return Err(Error::InsufficientData("permutation importance over no windows".into()));
    }
    if cfg.repetitions == 0 || cfg.bucket_s == 0 {
        return Err(Error::Config("repetitions and bucket width must be >= 1".into()));
    }
    let g0 = cfg.solar_constant;
    let reference = mae_per_horizon(model, &ds.data, &ds.truth, g0)?;
    let distinct = ds.distinct_rows();
    let names = pi_feature_names();
    let mut rows = Vec::with_capacity(features.len());
    for &f in features {
        let name = names
            .get(f)
            .ok_or_else(|| Error::InvalidInput(format!("feature index {f} out of range")))?
            .clone();
        let reps: Vec<Vec<f64>> = (0..cfg.repetitions)
            .into_par_iter()
            .map(|r| {
                let seed = cfg.seed ^ ((f as u64 + 1) << 32) ^ (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                let mut perm: Vec<usize> = (0..distinct.len()).collect();
                perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                pi_for_permutation(model, ds, f, &perm, &reference, g0)
            })
            .collect::<Result<_>>()?;
        let mean: Vec<f64> = (0..HORIZONS)
            .map(|h| reps.iter().map(|r| r[h]).sum::<f64>() / cfg.repetitions as f64)
            .collect();
        rows.push(PiRow {
            feature: name,
            delta_mae: bucketize(&mean, cfg),
            overall: mean.iter().sum::<f64>() / HORIZONS as f64,
        });
    }
    Ok(PiReport {
        repetitions: cfg.repetitions,
        bucket_s: cfg.bucket_s,
        reference_mae: bucketize(&reference, cfg),
        reference_mae_overall: reference.iter().sum::<f64>() / HORIZONS as f64,
        rows,
    })
}

/// Normalized-space MAE of a dataset, for diagnostics.
pub fn normalized_mae<T: Float>(pred: &Tensor<T>, target: &Tensor<T>) -> f64 {
    pred.data
        .iter()
        .zip(&target.data)
        .map(|(p, t)| (p.to_f64().unwrap_or(f64::NAN) - t.to_f64().unwrap_or(f64::NAN)).abs())
        .sum::<f64>()
        / pred.len().max(1) as f64
}
