//! Linear shear-building model.
//!
//! A building with `n` stories is described by story stiffnesses, story
//! damping coefficients and floor masses. The continuous state is
//! `x = [u; u']` (floor displacements relative to the ground, then their
//! velocities) and obeys `x' = A x + B a_g` for a ground acceleration `a_g`.
//!
//! Sensor channels are rows of an observation matrix acting on `x`. Absolute
//! floor acceleration is written in relative coordinates,
//! `u''_abs = -M^-1 (K u + C u')`, so no channel has direct feedthrough.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Story stiffness (N/m), damping (N*s/m) and mass (kg), first story first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingParams {
    pub stiffness: Vec<f64>,
    pub damping: Vec<f64>,
    pub mass: Vec<f64>,
}

impl BuildingParams {
    pub fn new(stiffness: Vec<f64>, damping: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        let params = Self {
            stiffness,
            damping,
            mass,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn n_story(&self) -> usize {
        self.stiffness.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.stiffness.len();
        if n == 0 {
            return Err(Error::InvalidParameter("building needs at least one story".into()));
        }
        if self.damping.len() != n || self.mass.len() != n {
            return Err(Error::InvalidParameter(format!(
                "stiffness, damping and mass lengths differ ({}, {}, {})",
                n,
                self.damping.len(),
                self.mass.len()
            )));
        }
        for (name, values) in [
            ("stiffness", &self.stiffness),
            ("damping", &self.damping),
            ("mass", &self.mass),
        ] {
            if let Some((i, v)) = values
                .iter()
                .enumerate()
                .find(|(_, v)| !(v.is_finite() && **v > 0.0))
            {
                return Err(Error::InvalidParameter(format!(
                    "{name} of story {} must be positive and finite, got {v}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Uncertain parameter vector: stiffnesses followed by damping coefficients.
    pub fn theta(&self) -> Vec<f64> {
        self.stiffness.iter().chain(&self.damping).copied().collect()
    }

    /// Same masses, stiffness and damping replaced by `theta` (layout of [`Self::theta`]).
    pub fn with_theta(&self, theta: &[f64]) -> Result<Self> {
        let n = self.n_story();
        if theta.len() != 2 * n {
            return Err(Error::Shape(format!(
                "parameter vector has length {}, expected {}",
                theta.len(),
                2 * n
            )));
        }
        Self::new(theta[..n].to_vec(), theta[n..].to_vec(), self.mass.clone())
    }
}

/// Tridiagonal shear-building matrix for per-story coefficients.
pub fn shear_matrix(coeffs: &[f64]) -> DMatrix<f64> {
    let n = coeffs.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = coeffs[i] + coeffs.get(i + 1).copied().unwrap_or(0.0);
        if i + 1 < n {
            m[(i, i + 1)] = -coeffs[i + 1];
            m[(i + 1, i)] = -coeffs[i + 1];
        }
    }
    m
}

/// Continuous-time `x' = A x + B a_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl StateSpaceModel {
    pub fn n_story(&self) -> usize {
        self.b.len() / 2
    }

    pub fn n_state(&self) -> usize {
        self.b.len()
    }

    /// Observation row for `ch`, see [`channel_row`].
    pub fn channel_row(&self, ch: &ChannelSpec) -> Result<DVector<f64>> {
        let n = self.n_story();
        ch.check_location(n)?;
        let i = ch.location - 1;
        let mut row = DVector::zeros(2 * n);
        match ch.kind {
            SensorKind::Acceleration => {
                row.copy_from(&self.a.row(n + i).transpose());
            }
            SensorKind::DriftVelocity => {
                row[n + i] = 1.0;
                if i > 0 {
                    row[n + i - 1] = -1.0;
                }
            }
            SensorKind::Drift => {
                row[i] = 1.0;
                if i > 0 {
                    row[i - 1] = -1.0;
                }
            }
        }
        Ok(row)
    }
}

pub fn assemble_matrices(params: &BuildingParams) -> Result<StateSpaceModel> {
    params.validate()?;
    let n = params.n_story();
    let k = shear_matrix(&params.stiffness);
    let c = shear_matrix(&params.damping);

    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        a[(i, n + i)] = 1.0;
        let inv_m = 1.0 / params.mass[i];
        for j in 0..n {
            a[(n + i, j)] = -inv_m * k[(i, j)];
            a[(n + i, n + j)] = -inv_m * c[(i, j)];
        }
    }
    let mut b = DVector::zeros(2 * n);
    b.rows_mut(n, n).fill(-1.0);
    Ok(StateSpaceModel { a, b })
}

/// Uniform floor mass that places the fundamental period at `target_period`.
pub fn calibrate_uniform_mass(stiffness: &[f64], target_period: f64) -> Result<f64> {
    if stiffness.is_empty() || stiffness.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
        return Err(Error::InvalidParameter(
            "stiffness must be non-empty, positive and finite".into(),
        ));
    }
    if !(target_period.is_finite() && target_period > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "target period must be positive, got {target_period}"
        )));
    }
    let lambda_min = SymmetricEigen::new(shear_matrix(stiffness))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let omega = 2.0 * PI / target_period;
    Ok(lambda_min / (omega * omega))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    /// Undamped natural frequency, rad/s.
    pub frequency: f64,
    pub damping_ratio: f64,
}

impl Mode {
    pub fn period(&self) -> f64 {
        2.0 * PI / self.frequency
    }
}

/// Natural frequencies and damping ratios from the eigenvalues of `A`,
/// ascending by frequency.
///
/// Complex pairs `s +/- j w` give `|lambda|` and `-s/|lambda|`. Real
/// eigenvalues are paired in sorted order and reported with ratio 1.
pub fn modal_properties(model: &StateSpaceModel) -> Vec<Mode> {
    let eig = model.a.clone().complex_eigenvalues();
    let mut modes = Vec::new();
    let mut real = Vec::new();
    for z in eig.iter() {
        let mag = z.norm();
        if z.im.abs() <= 1e-9 * mag.max(1e-300) {
            real.push(z.re);
        } else if z.im > 0.0 {
            modes.push(Mode {
                frequency: mag,
                damping_ratio: -z.re / mag,
            });
        }
    }
    real.sort_by(|a, b| a.total_cmp(b));
    for pair in real.chunks(2) {
        let frequency = match pair {
            [a, b] => (a * b).abs().sqrt(),
            [a] => a.abs(),
            _ => unreachable!(),
        };
        modes.push(Mode {
            frequency,
            damping_ratio: 1.0,
        });
    }
    modes.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    modes
}

/// Physical quantity measured by a sensor; the declaration order is the
/// channel-type order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Acceleration,
    DriftVelocity,
    Drift,
}

impl SensorKind {
    pub const ALL: [SensorKind; 3] = [
        SensorKind::Acceleration,
        SensorKind::DriftVelocity,
        SensorKind::Drift,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SensorKind::Acceleration => "acceleration",
            SensorKind::DriftVelocity => "drift-velocity",
            SensorKind::Drift => "drift",
        }
    }

    pub fn units(self) -> &'static str {
        match self {
            SensorKind::Acceleration => "m^2/s^4",
            SensorKind::DriftVelocity => "m^2/s^2",
            SensorKind::Drift => "m^2",
        }
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One measurement channel: a sensor kind at a story (1-based) with its
/// noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub kind: SensorKind,
    pub location: usize,
    pub noise_variance: f64,
}

impl ChannelSpec {
    pub fn label(&self) -> String {
        format!("{}:story{}", self.kind, self.location)
    }

    fn check_location(&self, n_story: usize) -> Result<()> {
        if self.location == 0 || self.location > n_story {
            return Err(Error::InvalidChannel(format!(
                "story {} outside 1..={n_story}",
                self.location
            )));
        }
        Ok(())
    }
}

/// Observation row of length `2 n` for `ch` on the building `params`.
pub fn channel_row(params: &BuildingParams, ch: &ChannelSpec) -> Result<DVector<f64>> {
    ch.check_location(params.n_story())?;
    assemble_matrices(params)?.channel_row(ch)
}

/// Zero-order-hold discretization `x[i+1] = Ad x[i] + Bd u[i]`.
#[derive(Debug, Clone)]
pub struct Discretized {
    pub ad: DMatrix<f64>,
    pub bd: DVector<f64>,
}

/// Exact ZOH discretization: `Ad = exp(A dt)`, `Bd = A^-1 (Ad - I) B`.
pub fn discretize(a: &DMatrix<f64>, b: &DVector<f64>, dt: f64) -> Result<Discretized> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let n = a.nrows();
    let ad = (a * dt).exp();
    let rhs = (&ad - DMatrix::identity(n, n)) * b;
    let bd = a
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidParameter("system matrix is singular".into()))?;
    Ok(Discretized { ad, bd })
}

/// Noise-free channel outputs sampled at `i * dt`, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRecord {
    pub y: DMatrix<f64>,
    pub dt: f64,
}

impl ResponseRecord {
    pub fn n_samples(&self) -> usize {
        self.y.nrows()
    }
}

/// Propagates a discrete system from rest and records `C x` at every sample.
///
/// Row-major copies of the matrices keep the inner loop allocation-free; it
/// runs a few hundred thousand times per training episode.
pub(crate) fn propagate(
    sys: &Discretized,
    rows: &[DVector<f64>],
    input: &[f64],
) -> Result<DMatrix<f64>> {
    let n = sys.bd.len();
    let ad: Vec<f64> = (0..n * n).map(|idx| sys.ad[(idx / n, idx % n)]).collect();
    let bd: Vec<f64> = sys.bd.iter().copied().collect();
    let c: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    let n_ch = rows.len();

    let mut y = DMatrix::zeros(input.len(), n_ch);
    let mut x = vec![0.0; n];
    let mut next = vec![0.0; n];
    for (i, &u) in input.iter().enumerate() {
        for j in 0..n_ch {
            let row = &c[j * n..(j + 1) * n];
            y[(i, j)] = row.iter().zip(&x).map(|(a, b)| a * b).sum();
        }
        for r in 0..n {
            let arow = &ad[r * n..(r + 1) * n];
            next[r] = arow.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + bd[r] * u;
        }
        std::mem::swap(&mut x, &mut next);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::SimulationDiverged { sample: i + 1 });
        }
    }
    Ok(y)
}

/// Response of `model` at rest to the ground acceleration record `excitation`.
pub fn simulate(
    model: &StateSpaceModel,
    excitation: &[f64],
    dt: f64,
    channels: &[ChannelSpec],
) -> Result<ResponseRecord> {
    if let Some(i) = excitation.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("excitation sample {i} is not finite")));
    }
    let sys = discretize(&model.a, &model.b, dt)?;
    let rows = channels
        .iter()
        .map(|ch| model.channel_row(ch))
        .collect::<Result<Vec<_>>>()?;
    let y = propagate(&sys, &rows, excitation)?;
    Ok(ResponseRecord { y, dt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_story() -> BuildingParams {
        BuildingParams::new(vec![100.0], vec![2.0], vec![4.0]).unwrap()
    }

    fn ch(kind: SensorKind, location: usize) -> ChannelSpec {
        ChannelSpec {
            kind,
            location,
            noise_variance: 1.0,
        }
    }

    #[test]
    fn one_story_matrices() {
        let m = assemble_matrices(&one_story()).unwrap();
        assert_eq!(m.a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -25.0, -0.5]));
        assert_eq!(m.b.as_slice(), &[0.0, -1.0]);
    }

    #[test]
    fn two_story_stiffness() {
        let k = shear_matrix(&[2.0, 1.0]);
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[3.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn rejects_non_positive() {
        assert!(matches!(
            BuildingParams::new(vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]),
            Err(Error::InvalidParameter(_))
        ));
        assert!(BuildingParams::new(vec![1.0], vec![-1.0], vec![1.0]).is_err());
        assert!(BuildingParams::new(vec![1.0], vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(BuildingParams::new(vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn calibration() {
        assert_relative_eq!(calibrate_uniform_mass(&[100.0], 2.0 * PI).unwrap(), 100.0, max_relative = 1e-12);
        let k = [175e6, 175e6, 140e6, 140e6];
        let k2: Vec<f64> = k.iter().map(|v| 2.0 * v).collect();
        let m1 = calibrate_uniform_mass(&k, 0.45).unwrap();
        let m2 = calibrate_uniform_mass(&k2, 0.45).unwrap();
        assert_relative_eq!(m2, 2.0 * m1, max_relative = 1e-12);
        assert!(calibrate_uniform_mass(&k, 0.0).is_err());
    }

    #[test]
    fn one_story_modes() {
        let modes = modal_properties(&assemble_matrices(&one_story()).unwrap());
        assert_eq!(modes.len(), 1);
        assert_relative_eq!(modes[0].frequency, 5.0, max_relative = 1e-12);
        assert_relative_eq!(modes[0].damping_ratio, 0.05, max_relative = 1e-10);
    }

    #[test]
    fn undamped_modes_have_zero_ratio() {
        let a = DMatrix::from_row_slice(4, 4, &[
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
            -3.0, 1.0, 0.0, 0.0,
            1.0, -1.0, 0.0, 0.0,
        ]);
        let model = StateSpaceModel { a, b: DVector::from_vec(vec![0.0, 0.0, -1.0, -1.0]) };
        let modes = modal_properties(&model);
        assert_eq!(modes.len(), 2);
        for m in modes {
            assert!(m.damping_ratio.abs() < 1e-10);
        }
    }

    #[test]
    fn overdamped_is_real_mode() {
        // s^2 + 10 s + 1: two real roots, product 1
        let model = StateSpaceModel {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -10.0]),
            b: DVector::from_vec(vec![0.0, -1.0]),
        };
        let modes = modal_properties(&model);
        assert_eq!(modes.len(), 1);
        assert_relative_eq!(modes[0].frequency, 1.0, max_relative = 1e-10);
        assert_eq!(modes[0].damping_ratio, 1.0);
    }

    #[test]
    fn drift_rows() {
        let p = BuildingParams::new(vec![2.0, 1.0], vec![0.1, 0.1], vec![1.0, 1.0]).unwrap();
        let r1 = channel_row(&p, &ch(SensorKind::Drift, 1)).unwrap();
        assert_eq!(r1.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        let r2 = channel_row(&p, &ch(SensorKind::Drift, 2)).unwrap();
        assert_eq!(r2.as_slice(), &[-1.0, 1.0, 0.0, 0.0]);
        let v2 = channel_row(&p, &ch(SensorKind::DriftVelocity, 2)).unwrap();
        assert_eq!(v2.as_slice(), &[0.0, 0.0, -1.0, 1.0]);
        assert!(matches!(
            channel_row(&p, &ch(SensorKind::Drift, 3)),
            Err(Error::InvalidChannel(_))
        ));
        assert!(channel_row(&p, &ch(SensorKind::Drift, 0)).is_err());
    }

    #[test]
    fn acceleration_row_one_story() {
        let r = channel_row(&one_story(), &ch(SensorKind::Acceleration, 1)).unwrap();
        assert_eq!(r.as_slice(), &[-25.0, -0.5]);
    }

    #[test]
    fn zero_excitation_zero_response() {
        let model = assemble_matrices(&one_story()).unwrap();
        let rec = simulate(&model, &[0.0; 50], 0.01, &[ch(SensorKind::Drift, 1)]).unwrap();
        assert_eq!(rec.n_samples(), 50);
        assert!(rec.y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn step_reaches_static_drift() {
        let model = assemble_matrices(&one_story()).unwrap();
        let rec = simulate(&model, &vec![1.0; 20001], 0.01, &[ch(SensorKind::Drift, 1)]).unwrap();
        assert_relative_eq!(rec.y[(20000, 0)], -0.04, max_relative = 1e-9);
        assert_eq!(rec.y[(0, 0)], 0.0);
    }

    #[test]
    fn non_finite_excitation_rejected() {
        let model = assemble_matrices(&one_story()).unwrap();
        assert!(simulate(&model, &[0.0, f64::NAN], 0.01, &[ch(SensorKind::Drift, 1)]).is_err());
        assert!(simulate(&model, &[0.0, 1.0], 0.0, &[ch(SensorKind::Drift, 1)]).is_err());
    }

    #[test]
    fn diverges_on_unstable_system() {
        let model = StateSpaceModel {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 50.0]),
            b: DVector::from_vec(vec![0.0, -1.0]),
        };
        let err = simulate(&model, &vec![1.0; 5000], 1.0, &[ch(SensorKind::Drift, 1)]);
        assert!(matches!(err, Err(Error::SimulationDiverged { .. })));
    }
}
