//! Equidistant fisheye lens with a polynomial deviation correction.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEVIATION_ORDER: usize = 7;
pub const DEVIATION_COEFFS: usize = DEVIATION_ORDER + 1;

/// Zenith angle as a function of normalized image radius `rho = r / R_img`:
/// `theta(rho) = rho * theta_fov + sum_k c_k rho^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LensModel {
    pub theta_fov_deg: f64,
    pub image_radius_px: f64,
    /// Deviation coefficients `c_0 ..= c_7` in degrees, lowest order first.
    pub deviation_poly: [f64; DEVIATION_COEFFS],
}

impl LensModel {
    pub fn equidistant(theta_fov_deg: f64, image_radius_px: f64) -> Self {
        Self {
            theta_fov_deg,
            image_radius_px,
            deviation_poly: [0.0; DEVIATION_COEFFS],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_fov_deg > 0.0 && self.theta_fov_deg <= 90.0) {
            return Err(Error::Config(format!(
                "lens FOV zenith must be in (0, 90], got {}",
                self.theta_fov_deg
            )));
        }
        if !(self.image_radius_px > 0.0) {
            return Err(Error::Config(format!(
                "lens image radius must be positive, got {}",
                self.image_radius_px
            )));
        }
        // the radius <-> zenith mapping must stay invertible on [0, 1]
        let mut prev = self.zenith_deg(0.0);
        for i in 1..=200 {
            let z = self.zenith_deg(i as f64 / 200.0);
            if z <= prev {
                return Err(Error::Config("lens zenith mapping is not monotone".into()));
            }
            prev = z;
        }
        Ok(())
    }

    pub fn deviation_deg(&self, rho: f64) -> f64 {
        eval_poly(&self.deviation_poly, rho)
    }

    pub fn zenith_deg(&self, rho: f64) -> f64 {
        rho * self.theta_fov_deg + self.deviation_deg(rho)
    }

    fn dzenith(&self, rho: f64) -> f64 {
        let mut d = 0.0;
        for k in (1..DEVIATION_COEFFS).rev() {
            d = d * rho + k as f64 * self.deviation_poly[k];
        }
        self.theta_fov_deg + d
    }

    /// Inverse of [`zenith_deg`](Self::zenith_deg); Newton iterations guarded by bisection.
    pub fn radius_of_zenith(&self, zenith_deg: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, 1.5_f64);
        let f = |r: f64| self.zenith_deg(r) - zenith_deg;
        if f(lo) >= 0.0 {
            return 0.0;
        }
        while f(hi) < 0.0 && hi < 64.0 {
            hi *= 2.0;
        }
        let mut r = (zenith_deg / self.theta_fov_deg).clamp(lo, hi);
        for _ in 0..60 {
            let fr = f(r);
            if fr.abs() < 1e-13 {
                break;
            }
            if fr < 0.0 {
                lo = r;
            } else {
                hi = r;
            }
            let d = self.dzenith(r);
            let step = r - fr / d;
            r = if d > 0.0 && step > lo && step < hi {
                step
            } else {
                0.5 * (lo + hi)
            };
        }
        r
    }
}

pub(crate) fn eval_poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck)
}

/// Result of fitting the deviation polynomial to a lens table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationFit {
    pub coefficients: [f64; DEVIATION_COEFFS],
    pub mae_deg: f64,
    /// Fit MAE as a percentage of the FOV zenith.
    pub mae_percent_of_fov: f64,
}

/// Least-squares 7th-order fit of `angle - rho * theta_fov` over `(rho, angle_deg)` rows.
pub fn fit_deviation_poly(table: &[(f64, f64)], theta_fov_deg: f64) -> Result<DeviationFit> {
    if table.len() < DEVIATION_COEFFS + 1 {
        return Err(Error::InsufficientData(format!(
            "deviation fit needs at least {} rows, got {}",
            DEVIATION_COEFFS + 1,
            table.len()
        )));
    }
    let n = table.len();
    let vander = DMatrix::from_fn(n, DEVIATION_COEFFS, |i, k| table[i].0.powi(k as i32));
    let rhs = DVector::from_iterator(n, table.iter().map(|&(r, a)| a - r * theta_fov_deg));
    let svd = vander.svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Numeric(format!("deviation fit failed: {e}")))?;
    let mut coefficients = [0.0; DEVIATION_COEFFS];
    coefficients.copy_from_slice(sol.as_slice());
    let mae_deg = table
        .iter()
        .map(|&(r, a)| (r * theta_fov_deg + eval_poly(&coefficients, r) - a).abs())
        .sum::<f64>()
        / n as f64;
    Ok(DeviationFit {
        coefficients,
        mae_deg,
        mae_percent_of_fov: 100.0 * mae_deg / theta_fov_deg,
    })
}

#[derive(Debug, Deserialize)]
struct LensRow {
    radius_norm: f64,
    angle_deg: f64,
}

/// Reads a `radius_norm,angle_deg` CSV table.
pub fn read_lens_table(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["radius_norm", "angle_deg"] {
        return Err(Error::InvalidInput(format!(
            "{}: expected header radius_norm,angle_deg",
            path.display()
        )));
    }
    rdr.deserialize::<LensRow>()
        .map(|r| r.map(|r| (r.radius_norm, r.angle_deg)).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_radius_is_half_fov_without_deviation() {
        let lens = LensModel::equidistant(90.0, 960.0);
        assert!((lens.zenith_deg(0.5) - 45.0).abs() < 1e-12);
        assert_eq!(lens.zenith_deg(0.0), 0.0);
        assert!((lens.radius_of_zenith(45.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn inverse_with_deviation() {
        let mut lens = LensModel::equidistant(90.0, 500.0);
        lens.deviation_poly = [0.0, 0.5, -2.0, 3.0, -1.0, 0.2, 0.0, -0.1];
        lens.validate().unwrap();
        for i in 0..=100 {
            let rho = i as f64 / 100.0;
            let z = lens.zenith_deg(rho);
            assert!((lens.radius_of_zenith(z) - rho).abs() < 1e-10, "rho {rho}");
        }
    }

    #[test]
    fn recovers_known_polynomial() {
        let truth = [0.01, -0.3, 1.2, -2.5, 3.0, -2.0, 0.7, -0.1];
        let table: Vec<(f64, f64)> = (0..60)
            .map(|i| {
                let r = i as f64 / 59.0;
                (r, r * 90.0 + eval_poly(&truth, r))
            })
            .collect();
        let fit = fit_deviation_poly(&table, 90.0).unwrap();
        for (a, b) in fit.coefficients.iter().zip(truth) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!(fit.mae_percent_of_fov < 1e-6);
    }

    #[test]
    fn ideal_table_has_zero_deviation() {
        let table: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 / 19.0, i as f64 / 19.0 * 85.0)).collect();
        let fit = fit_deviation_poly(&table, 85.0).unwrap();
        assert!(fit.coefficients.iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn underdetermined_table_is_rejected() {
        let table: Vec<(f64, f64)> = (0..8).map(|i| (i as f64 / 7.0, i as f64)).collect();
        assert!(matches!(
            fit_deviation_poly(&table, 90.0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn invalid_lens_rejected() {
        assert!(LensModel::equidistant(0.0, 10.0).validate().is_err());
        assert!(LensModel::equidistant(95.0, 10.0).validate().is_err());
        assert!(LensModel::equidistant(90.0, 0.0).validate().is_err());
    }
}
