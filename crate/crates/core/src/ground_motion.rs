//! Stochastic ground acceleration from white noise shaped by a Kanai-Tajimi
//! filter, `F(s) = (2 zeta_g omega_g s + omega_g^2) / (s^2 + 2 zeta_g omega_g s + omega_g^2)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::building::{discretize, propagate};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KanaiTajimiParams {
    /// Ground frequency, rad/s.
    pub omega_g: f64,
    pub zeta_g: f64,
    /// Record length, s.
    pub duration: f64,
    /// Sampling time, s.
    pub dt: f64,
    /// Peak ground acceleration of every record, m/s^2.
    pub target_pga: f64,
    /// Standard deviation of the driving noise before scaling.
    pub noise_std: f64,
}

impl Default for KanaiTajimiParams {
    fn default() -> Self {
        Self {
            omega_g: 17.0,
            zeta_g: 0.3,
            duration: 10.0,
            dt: 0.01,
            target_pga: 1.5,
            noise_std: 1.0,
        }
    }
}

impl KanaiTajimiParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.omega_g.is_finite() && self.omega_g > 0.0) {
            return bad("omega_g must be positive");
        }
        if !(self.zeta_g > 0.0 && self.zeta_g < 1.0) {
            return bad("zeta_g must lie in (0, 1)");
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.duration.is_finite() && self.duration >= self.dt) {
            return bad("duration must be at least dt");
        }
        if !(self.target_pga.is_finite() && self.target_pga > 0.0) {
            return bad("target PGA must be positive");
        }
        if !(self.noise_std.is_finite() && self.noise_std > 0.0) {
            return bad("noise_std must be positive");
        }
        Ok(())
    }

    /// Samples per record, `duration / dt + 1`.
    pub fn n_samples(&self) -> usize {
        (self.duration / self.dt).round() as usize + 1
    }

    /// Controllable canonical realization `(A, B, C)` of the filter.
    pub fn realization(&self) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let w2 = self.omega_g * self.omega_g;
        let two_zw = 2.0 * self.zeta_g * self.omega_g;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -w2, -two_zw]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        let c = DVector::from_vec(vec![w2, two_zw]);
        (a, b, c)
    }
}

/// `F(j omega)`.
pub fn filter_frequency_response(params: &KanaiTajimiParams, omega: f64) -> Complex64 {
    let s = Complex64::new(0.0, omega);
    let w2 = params.omega_g * params.omega_g;
    let two_zw = 2.0 * params.zeta_g * params.omega_g;
    (two_zw * s + w2) / (s * s + two_zw * s + w2)
}

/// Filtered white noise before PGA scaling.
pub fn filtered_noise(params: &KanaiTajimiParams, noise: &[f64]) -> Result<Vec<f64>> {
    let (a, b, c) = params.realization();
    let sys = discretize(&a, &b, params.dt)?;
    let y = propagate(&sys, &[c], noise)?;
    Ok(y.column(0).iter().copied().collect())
}

/// Draws one record of `n_samples()` ground accelerations with peak
/// magnitude exactly `target_pga`. Deterministic in `seed`.
pub fn generate(params: &KanaiTajimiParams, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, params.noise_std)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let noise: Vec<f64> = (0..params.n_samples()).map(|_| normal.sample(&mut rng)).collect();
    let raw = filtered_noise(params, &noise)?;
    scale_to_pga(raw, params.target_pga)
}

/// Rescales so that `max |x| == pga` exactly.
pub fn scale_to_pga(mut record: Vec<f64>, pga: f64) -> Result<Vec<f64>> {
    if !(pga.is_finite() && pga > 0.0) {
        return Err(Error::InvalidParameter(format!("target PGA must be positive, got {pga}")));
    }
    let peak = record.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::GenerationFailed("record has no non-zero finite peak".into()));
    }
    // (v / peak) is exactly +-1 at the peak and never exceeds it in magnitude.
    for v in &mut record {
        *v = (*v / peak) * pga;
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn response_limits() {
        let p = KanaiTajimiParams::default();
        let dc = filter_frequency_response(&p, 0.0);
        assert_eq!(dc, Complex64::new(1.0, 0.0));
        let at_g = filter_frequency_response(&p, p.omega_g).norm();
        assert_relative_eq!(at_g, 1.36_f64.sqrt() / 0.6, max_relative = 1e-12);
        assert!(filter_frequency_response(&p, 1e6).norm() < 1e-3);
    }

    #[test]
    fn record_contract() {
        let p = KanaiTajimiParams::default();
        let rec = generate(&p, 3).unwrap();
        assert_eq!(rec.len(), 1001);
        let peak = rec.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert_eq!(peak, 1.5);
        assert_eq!(generate(&p, 3).unwrap(), rec);
        assert_ne!(generate(&p, 4).unwrap(), rec);
    }

    #[test]
    fn all_zero_record_fails() {
        assert!(matches!(scale_to_pga(vec![0.0; 10], 1.5), Err(Error::GenerationFailed(_))));
    }

    #[test]
    fn filter_is_linear() {
        let p = KanaiTajimiParams::default();
        let u1: Vec<f64> = (0..300).map(|i| ((i * 7919) % 97) as f64 / 97.0 - 0.5).collect();
        let u2: Vec<f64> = (0..300).map(|i| ((i * 104729) % 89) as f64 / 89.0 - 0.5).collect();
        let mix: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let y1 = filtered_noise(&p, &u1).unwrap();
        let y2 = filtered_noise(&p, &u2).unwrap();
        let ym = filtered_noise(&p, &mix).unwrap();
        for i in 0..300 {
            assert!((ym[i] - (2.0 * y1[i] - 3.0 * y2[i])).abs() < 1e-10 * (1.0 + ym[i].abs()));
        }
    }

    #[test]
    fn validation() {
        let base = KanaiTajimiParams::default();
        assert!(KanaiTajimiParams { zeta_g: 1.0, ..base }.validate().is_err());
        assert!(generate(&KanaiTajimiParams { dt: 0.0, ..base }, 0).is_err());
        assert!(KanaiTajimiParams { duration: 0.001, ..base }.validate().is_err());
    }
}
