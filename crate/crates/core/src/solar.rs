//! Solar geometry, extraterrestrial clear-sky GHI and daily clearness statistics.
//!
//! Azimuths throughout the crate are degrees clockwise from geographic north.
//!
//! The ephemeris follows the low-precision solar coordinates of Meeus
//! (Astronomical Algorithms, ch. 25) with apparent-longitude, nutation-in-
//! obliquity and equation-of-the-equinoxes corrections. Quoted accuracy is
//! about 0.01 degrees between 1950 and 2050, well inside the 10 degree
//! elevation cutoff used downstream. Refraction is not applied.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SOLAR_CONSTANT: f64 = 1361.0;

/// Below this clear-sky irradiance the clearness index is undefined.
pub const CLEARNESS_FLOOR_WM2: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoLocation {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
}

impl GeoLocation {
    pub fn new(latitude_deg: f64, longitude_deg: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&latitude_deg) || !(-180.0..=180.0).contains(&longitude_deg) {
            return Err(Error::InvalidInput(format!(
                "location out of range: lat {latitude_deg}, lon {longitude_deg}"
            )));
        }
        Ok(Self {
            latitude_deg,
            longitude_deg,
        })
    }

    /// East/north offset in metres of `other` relative to `self` on a local
    /// tangent plane (equirectangular, adequate for kilometre baselines).
    pub fn local_offset_m(&self, other: &GeoLocation) -> (f64, f64) {
        const EARTH_RADIUS_M: f64 = 6_371_008.8;
        let lat0 = self.latitude_deg.to_radians();
        let east = (other.longitude_deg - self.longitude_deg).to_radians() * lat0.cos() * EARTH_RADIUS_M;
        let north = (other.latitude_deg - self.latitude_deg).to_radians() * EARTH_RADIUS_M;
        (east, north)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarGeometry {
    pub zenith_deg: f64,
    pub azimuth_deg: f64,
}

impl SolarGeometry {
    pub fn elevation_deg(&self) -> f64 {
        90.0 - self.zenith_deg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearSkyModel {
    pub solar_constant: f64,
}

impl Default for ClearSkyModel {
    fn default() -> Self {
        Self {
            solar_constant: DEFAULT_SOLAR_CONSTANT,
        }
    }
}

impl ClearSkyModel {
    pub fn new(solar_constant: f64) -> Result<Self> {
        if !(solar_constant > 0.0) {
            return Err(Error::InvalidInput(format!(
                "solar constant must be positive, got {solar_constant}"
            )));
        }
        Ok(Self { solar_constant })
    }
}

/// Measured GHI time series at the nominal 10 s cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrradianceSeries {
    timestamps: Vec<DateTime<Utc>>,
    ghi: Vec<f64>,
}

impl IrradianceSeries {
    pub fn new(timestamps: Vec<DateTime<Utc>>, ghi: Vec<f64>) -> Result<Self> {
        if timestamps.len() != ghi.len() {
            return Err(Error::InvalidInput(format!(
                "{} timestamps but {} GHI values",
                timestamps.len(),
                ghi.len()
            )));
        }
        if let Some(w) = timestamps.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "timestamps not strictly increasing at {}",
                w[1]
            )));
        }
        if let Some(g) = ghi.iter().find(|g| !(**g >= 0.0)) {
            return Err(Error::InvalidInput(format!("negative or NaN GHI {g}")));
        }
        Ok(Self { timestamps, ghi })
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn ghi(&self) -> &[f64] {
        &self.ghi
    }

    pub fn len(&self) -> usize {
        self.ghi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ghi.is_empty()
    }

    pub fn get(&self, t: DateTime<Utc>) -> Option<f64> {
        self.timestamps
            .binary_search(&t)
            .ok()
            .map(|i| self.ghi[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyStats {
    pub mean_clearness: f64,
    pub mean_variability: f64,
}

pub fn julian_day(time: DateTime<Utc>) -> f64 {
    let secs = time.timestamp() as f64 + f64::from(time.timestamp_subsec_nanos()) * 1e-9;
    secs / 86_400.0 + 2_440_587.5
}

fn wrap_deg(x: f64) -> f64 {
    x.rem_euclid(360.0)
}

pub fn solar_position(time: DateTime<Utc>, location: &GeoLocation) -> SolarGeometry {
    let d = julian_day(time) - 2_451_545.0;
    let t = d / 36_525.0;

    let mean_lon = wrap_deg(280.46646 + t * (36_000.76983 + 0.000_303_2 * t));
    let mean_anom = (357.52911 + t * (35_999.05029 - 0.000_153_7 * t)).to_radians();
    let center = (1.914_602 - t * (0.004_817 + 0.000_014 * t)) * mean_anom.sin()
        + (0.019_993 - 0.000_101 * t) * (2.0 * mean_anom).sin()
        + 0.000_289 * (3.0 * mean_anom).sin();
    let node = (125.04 - 1934.136 * t).to_radians();
    let apparent_lon = (mean_lon + center - 0.005_69 - 0.004_78 * node.sin()).to_radians();

    let eps0 = 23.0 + (26.0 + (21.448 - t * (46.815 + t * (0.000_59 - 0.001_813 * t))) / 60.0) / 60.0;
    let eps = (eps0 + 0.002_56 * node.cos()).to_radians();

    let ra = (eps.cos() * apparent_lon.sin()).atan2(apparent_lon.cos());
    let dec = (eps.sin() * apparent_lon.sin()).asin();

    let gmst = 280.460_618_37 + 360.985_647_366_29 * d + t * t * (0.000_387_933 - t / 38_710_000.0);
    // equation of the equinoxes, nutation in longitude truncated to its main term
    let gast = gmst - 0.004_78 * node.sin() * eps.cos();
    let hour_angle = (gast + location.longitude_deg).to_radians() - ra;

    let lat = location.latitude_deg.to_radians();
    let cos_zen = (lat.sin() * dec.sin() + lat.cos() * dec.cos() * hour_angle.cos()).clamp(-1.0, 1.0);
    let zenith_deg = cos_zen.acos().to_degrees();
    let az = (-hour_angle.sin() * dec.cos())
        .atan2(dec.sin() * lat.cos() - dec.cos() * lat.sin() * hour_angle.cos());
    SolarGeometry {
        zenith_deg,
        azimuth_deg: wrap_deg(az.to_degrees()),
    }
}

/// Extraterrestrial GHI, `G0 cos(zenith)`, clamped to zero below the horizon.
pub fn clear_sky_ghi(geom: &SolarGeometry, model: &ClearSkyModel) -> f64 {
    if geom.zenith_deg >= 90.0 {
        return 0.0;
    }
    let c = geom.zenith_deg.to_radians().cos();
    if c <= 0.0 {
        0.0
    } else {
        model.solar_constant * c
    }
}

/// `ghi / ghi_clear`, or `None` when the clear-sky value is at or below 1 W/m².
pub fn clearness_index(ghi: f64, ghi_clear: f64) -> Option<f64> {
    if ghi_clear <= CLEARNESS_FLOOR_WM2 || !ghi.is_finite() {
        None
    } else {
        Some(ghi / ghi_clear)
    }
}

pub fn daily_stats(k: &[f64]) -> Result<DailyStats> {
    if k.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "daily statistics need at least 2 clearness samples, got {}",
            k.len()
        )));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("clearness series contains undefined samples".into()));
    }
    let mean_clearness = k.iter().sum::<f64>() / k.len() as f64;
    let sq: f64 = k.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    let mean_variability = (sq / (k.len() - 1) as f64).sqrt();
    Ok(DailyStats {
        mean_clearness,
        mean_variability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn clear_sky_examples() {
        let m = ClearSkyModel::default();
        let g = |z: f64| clear_sky_ghi(&SolarGeometry { zenith_deg: z, azimuth_deg: 0.0 }, &m);
        assert_eq!(g(0.0), 1361.0);
        assert!((g(60.0) - 680.5).abs() < 1e-9);
        assert_eq!(g(120.0), 0.0);
        assert_eq!(g(90.0), 0.0);
    }

    #[test]
    fn clearness_examples() {
        assert_eq!(clearness_index(800.0, 800.0), Some(1.0));
        assert_eq!(clearness_index(400.0, 800.0), Some(0.5));
        assert_eq!(clearness_index(10.0, 0.0), None);
        assert_eq!(clearness_index(10.0, 1.0), None);
    }

    #[test]
    fn daily_stats_examples() {
        let s = daily_stats(&[0.5; 50]).unwrap();
        assert_eq!(s.mean_clearness, 0.5);
        assert_eq!(s.mean_variability, 0.0);
        let alt: Vec<f64> = (0..40).map(|i| (i % 2) as f64).collect();
        assert_eq!(daily_stats(&alt).unwrap().mean_variability, 1.0);
        assert!(daily_stats(&[0.3]).is_err());
    }

    #[test]
    fn equinox_noon_on_equator_is_overhead() {
        let loc = GeoLocation::new(0.0, 0.0).unwrap();
        // local apparent noon at Greenwich on 2024-03-20 is ~12:07 UTC
        let t = Utc.with_ymd_and_hms(2024, 3, 20, 12, 7, 0).unwrap();
        assert!(solar_position(t, &loc).zenith_deg < 0.5);
    }

    #[test]
    fn midwinter_midnight_is_dark_at_site() {
        let loc = GeoLocation::new(59.9724, 11.0524).unwrap();
        let t = Utc.with_ymd_and_hms(2023, 12, 21, 23, 15, 0).unwrap();
        let geom = solar_position(t, &loc);
        assert!(geom.elevation_deg() < 0.0);
        assert_eq!(geom.elevation_deg() + geom.zenith_deg, 90.0);
    }

    #[test]
    fn rejects_bad_location() {
        assert!(GeoLocation::new(91.0, 0.0).is_err());
        assert!(GeoLocation::new(0.0, -181.0).is_err());
    }

    #[test]
    fn irradiance_series_validation() {
        let t0 = Utc.with_ymd_and_hms(2023, 6, 1, 10, 0, 0).unwrap();
        let ts = vec![t0, t0 + chrono::Duration::seconds(10)];
        assert!(IrradianceSeries::new(ts.clone(), vec![1.0, 2.0]).is_ok());
        assert!(IrradianceSeries::new(vec![ts[1], ts[0]], vec![1.0, 2.0]).is_err());
        assert!(IrradianceSeries::new(ts, vec![1.0, -2.0]).is_err());
    }
}
