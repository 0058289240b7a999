#![allow(dead_code)]

pub mod grad;

use asi_nowcast::evaluation::{Predictor, PiDataset};
use asi_nowcast::features::{
    FeatureSeriesRow, SampleWindow, CADENCE_S, HORIZONS, LOOKBACK, METHOD_C_CHANNELS, MIN_ELEVATION_DEG,
};
use asi_nowcast::forecasters::{ForecastData, StepInputs};
use asi_nowcast::nn::Tensor;
use asi_nowcast::solar::IrradianceSeries;
use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Low-precision almanac ephemeris (Michalsky 1988), no refraction.
/// Returns the zenith angle in degrees.
pub fn almanac_zenith(t: DateTime<Utc>, lat_deg: f64, lon_deg: f64) -> f64 {
    let jd = t.timestamp() as f64 / 86_400.0 + 2_440_587.5;
    let n = jd - 2_451_545.0;
    let mnlong = (280.460 + 0.985_647_4 * n).rem_euclid(360.0);
    let mnanom = (357.528 + 0.985_600_3 * n).rem_euclid(360.0).to_radians();
    let eclong = (mnlong + 1.915 * mnanom.sin() + 0.020 * (2.0 * mnanom).sin())
        .rem_euclid(360.0)
        .to_radians();
    let oblqec = (23.439 - 0.000_000_4 * n).to_radians();
    let ra = (oblqec.cos() * eclong.sin()).atan2(eclong.cos()).rem_euclid(std::f64::consts::TAU);
    let dec = (oblqec.sin() * eclong.sin()).asin();
    let ut_hours = (jd + 0.5).fract() * 24.0;
    let gmst = (6.697_375 + 0.065_709_824_2 * n + ut_hours).rem_euclid(24.0);
    let lmst = (gmst + lon_deg / 15.0).rem_euclid(24.0) * 15.0;
    let mut ha = lmst.to_radians() - ra;
    if ha < -std::f64::consts::PI {
        ha += std::f64::consts::TAU;
    } else if ha > std::f64::consts::PI {
        ha -= std::f64::consts::TAU;
    }
    let lat = lat_deg.to_radians();
    let el = (dec.sin() * lat.sin() + dec.cos() * lat.cos() * ha.cos()).clamp(-1.0, 1.0).asin();
    90.0 - el.to_degrees()
}

/// A random calendar: rows at 10 s steps with occasional gaps, random
/// zenith angles around the cutoff, and GHI missing at random.
pub fn random_calendar(rng: &mut ChaCha8Rng) -> (Vec<FeatureSeriesRow>, IrradianceSeries) {
    let len = rng.gen_range(0..400);
    let mut t = Utc.with_ymd_and_hms(2023, 5, 1, 6, 0, 0).unwrap() + Duration::seconds(rng.gen_range(0..1000));
    let p_gap = rng.gen_range(0.0..0.02);
    let p_low = rng.gen_range(0.0..0.02);
    let p_missing = rng.gen_range(0.0..0.02);
    let mut rows = Vec::with_capacity(len);
    let (mut ts, mut ghi) = (Vec::new(), Vec::new());
    for _ in 0..len {
        let zenith = if rng.gen_bool(p_low) {
            rng.gen_range(80.0..95.0)
        } else {
            rng.gen_range(10.0..80.0)
        };
        rows.push(FeatureSeriesRow {
            timestamp: t,
            cs_cam1: 0.5,
            cs_cam2: 0.5,
            cmv_u1: 0.0,
            cmv_v1: 0.0,
            cmv_u2: 0.0,
            cmv_v2: 0.0,
            median_cbh_m: 1000.0,
            zenith_deg: zenith,
            azimuth_deg: 180.0,
            ghi_clear_wm2: 900.0,
        });
        if !rng.gen_bool(p_missing) {
            ts.push(t);
            ghi.push(rng.gen_range(0.0..1000.0));
        }
        let step = if rng.gen_bool(p_gap) { rng.gen_range(2..5) } else { 1 };
        t += Duration::seconds(CADENCE_S * step);
    }
    (rows, IrradianceSeries::new(ts, ghi).unwrap())
}

/// Issue times of every window by direct enumeration: each start whose
/// 105 rows are daytime, have GHI and sit exactly 10 s apart.
pub fn brute_force_issue_times(rows: &[FeatureSeriesRow], irr: &IrradianceSeries) -> Vec<DateTime<Utc>> {
    let span = LOOKBACK + HORIZONS;
    let mut out = Vec::new();
    for s in 0..rows.len().saturating_sub(span - 1) {
        let ok = (0..span).all(|j| {
            let r = &rows[s + j];
            let day = 90.0 - r.zenith_deg >= MIN_ELEVATION_DEG;
            let has = irr.get(r.timestamp).is_some();
            let step = j == 0 || (r.timestamp - rows[s + j - 1].timestamp).num_seconds() == CADENCE_S;
            day && has && step
        });
        if ok {
            out.push(rows[s + LOOKBACK - 1].timestamp);
        }
    }
    out
}

pub const PLANTED: usize = 0;
pub const NOISE: usize = 2;

/// Coupling of the planted channel to the target at horizon `h`, growing with `h`.
pub fn coupling(h: usize) -> f64 {
    0.05 + 0.35 * h as f64 / (HORIZONS - 1) as f64
}

/// Windows whose targets depend on the planted channel with a strength that
/// grows with horizon. Channel `NOISE` is random but unused; all other
/// channels and the GHI history are constant. Windows use disjoint rows.
pub fn planted_windows(n: usize, seed: u64) -> Vec<SampleWindow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = Utc.with_ymd_and_hms(2023, 6, 1, 9, 0, 0).unwrap();
    (0..n)
        .map(|i| {
            let x: f64 = rng.gen_range(-0.5..0.5);
            let noise: f64 = rng.gen_range(-0.5..0.5);
            let mut step = [0.3; METHOD_C_CHANNELS];
            step[PLANTED] = x;
            step[NOISE] = noise;
            SampleWindow {
                issue_time: t0 + Duration::seconds(CADENCE_S * (i * LOOKBACK) as i64),
                start: i * LOOKBACK,
                inputs: vec![step; LOOKBACK],
                ghi_history: vec![0.4; LOOKBACK],
                targets: (0..HORIZONS).map(|h| 0.4 + coupling(h) * x).collect(),
                ghi_now: 0.4 * 1361.0,
                ghi_clear_now: 800.0,
                ghi_clear_future: vec![800.0; HORIZONS],
            }
        })
        .collect()
}

/// Reads the planted channel at the last step and applies the generator's coupling.
pub struct PlantedModel;

impl Predictor for PlantedModel {
    fn predict_normalized(&self, data: &ForecastData<f32>) -> asi_nowcast::error::Result<Tensor<f32>> {
        let StepInputs::Series(x) = &data.inputs else {
            unreachable!("series inputs")
        };
        let n = data.len();
        let mut out = Vec::with_capacity(n * HORIZONS);
        for i in 0..n {
            let v = x.data[(i * LOOKBACK + LOOKBACK - 1) * METHOD_C_CHANNELS + PLANTED] as f64;
            out.extend((0..HORIZONS).map(|h| (0.4 + coupling(h) * v) as f32));
        }
        Tensor::from_vec(&[n, HORIZONS], out)
    }
}

pub fn planted_dataset(n: usize, seed: u64) -> PiDataset {
    PiDataset::from_windows(&planted_windows(n, seed), 1361.0).unwrap()
}
