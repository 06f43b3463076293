//! Output sensitivities, Fisher information and entropy-based information
//! gain.
//!
//! The Fisher information of a channel set is the time sum
//! `F = sum_i J_i^T R^-1 J_i`, with `J_i` the output sensitivities at sample
//! `i`. The gain of a measurement is `0.5 ln|F + P0^-1| - 0.5 ln|P0^-1|`
//! in nats.
//!
//! The training reward uses the entrywise gain matrix: entry `(j, k)` is the
//! gain on parameter `k` from channel `j` alone, and the reward of placing
//! channel `j` is the sum of row `j` after dividing by the largest entry.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::building::{assemble_matrices, simulate};
use crate::error::{Error, Result};
use crate::problem::PlacementProblem;

/// Relative central-difference step used for sensitivities.
pub const DEFAULT_REL_STEP: f64 = 1e-3;

/// `dy/dtheta` laid out as `[sample][channel][parameter]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTensor {
    n_samples: usize,
    n_channels: usize,
    n_params: usize,
    data: Vec<f64>,
}

impl SensitivityTensor {
    pub fn zeros(n_samples: usize, n_channels: usize, n_params: usize) -> Self {
        Self {
            n_samples,
            n_channels,
            n_params,
            data: vec![0.0; n_samples * n_channels * n_params],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_samples, self.n_channels, self.n_params)
    }

    #[inline]
    fn idx(&self, sample: usize, channel: usize, param: usize) -> usize {
        (sample * self.n_channels + channel) * self.n_params + param
    }

    pub fn get(&self, sample: usize, channel: usize, param: usize) -> f64 {
        self.data[self.idx(sample, channel, param)]
    }

    pub fn set(&mut self, sample: usize, channel: usize, param: usize, value: f64) {
        let i = self.idx(sample, channel, param);
        self.data[i] = value;
    }

    /// Time series of `dy_channel / dtheta_param`.
    pub fn series(&self, channel: usize, param: usize) -> Vec<f64> {
        (0..self.n_samples).map(|i| self.get(i, channel, param)).collect()
    }

    /// Sensitivity row of one channel at one sample.
    pub fn row(&self, sample: usize, channel: usize) -> &[f64] {
        let start = self.idx(sample, channel, 0);
        &self.data[start..start + self.n_params]
    }
}

/// Central-difference sensitivities of every problem channel with the
/// default relative step.
pub fn sensitivities(
    problem: &PlacementProblem,
    theta_hat: &[f64],
    excitation: &[f64],
) -> Result<SensitivityTensor> {
    sensitivities_with_step(problem, theta_hat, excitation, DEFAULT_REL_STEP)
}

/// Central differences with step `h_rel * |theta_j|`. Both perturbed
/// simulations of a column share the same excitation record.
pub fn sensitivities_with_step(
    problem: &PlacementProblem,
    theta_hat: &[f64],
    excitation: &[f64],
    h_rel: f64,
) -> Result<SensitivityTensor> {
    let n_params = problem.n_params();
    if theta_hat.len() != n_params {
        return Err(Error::Shape(format!(
            "parameter vector has length {}, expected {n_params}",
            theta_hat.len()
        )));
    }
    if !(h_rel.is_finite() && h_rel > 0.0) {
        return Err(Error::InvalidParameter(format!("relative step must be positive, got {h_rel}")));
    }
    let channels = problem.channels();
    let dt = problem.excitation().dt;
    let base = problem.building();
    let mut sens = SensitivityTensor::zeros(excitation.len(), channels.len(), n_params);

    let respond = |theta: &[f64]| -> Result<DMatrix<f64>> {
        let model = assemble_matrices(&base.with_theta(theta)?)?;
        Ok(simulate(&model, excitation, dt, channels)?.y)
    };

    for k in 0..n_params {
        let value = theta_hat[k];
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "parameter {k} must be positive to differentiate, got {value}"
            )));
        }
        let mut delta = h_rel * value;
        if value - delta <= 0.0 {
            delta /= 10.0;
            if value - delta <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "perturbed parameter {k} is non-positive even after shrinking the step"
                )));
            }
        }
        let mut plus = theta_hat.to_vec();
        plus[k] = value + delta;
        let mut minus = theta_hat.to_vec();
        minus[k] = value - delta;
        let (yp, ym) = (respond(&plus)?, respond(&minus)?);
        let span = (value + delta) - (value - delta);
        for i in 0..excitation.len() {
            for j in 0..channels.len() {
                sens.set(i, j, k, (yp[(i, j)] - ym[(i, j)]) / span);
            }
        }
    }
    Ok(sens)
}

/// Fisher information of one channel about one parameter.
pub fn fisher_scalar(dy: &[f64], noise_variance: f64) -> f64 {
    dy.iter().map(|v| v * v).sum::<f64>() / noise_variance
}

/// Scalar Fisher information for every `(channel, parameter)` pair.
pub fn fisher_scalars(sens: &SensitivityTensor, noise_variances: &[f64]) -> DMatrix<f64> {
    let (n_samples, n_channels, n_params) = sens.shape();
    let mut f = DMatrix::zeros(n_channels, n_params);
    for i in 0..n_samples {
        for j in 0..n_channels {
            for (k, v) in sens.row(i, j).iter().enumerate() {
                f[(j, k)] += v * v;
            }
        }
    }
    for (j, var) in noise_variances.iter().enumerate().take(n_channels) {
        f.row_mut(j).scale_mut(1.0 / var);
    }
    f
}

/// Full Fisher matrix of a channel subset with diagonal noise covariance
/// (`noise_variances` is indexed by channel).
pub fn fisher_matrix(
    sens: &SensitivityTensor,
    channels: &[usize],
    noise_variances: &[f64],
) -> Result<DMatrix<f64>> {
    let (n_samples, n_channels, n_params) = sens.shape();
    if channels.is_empty() {
        return Err(Error::InvalidChannel("channel subset is empty".into()));
    }
    if let Some(&j) = channels.iter().find(|&&j| j >= n_channels) {
        return Err(Error::InvalidChannel(format!("channel {j} out of range")));
    }
    let mut f = DMatrix::zeros(n_params, n_params);
    for &j in channels {
        let w = 1.0 / noise_variances[j];
        for i in 0..n_samples {
            let row = sens.row(i, j);
            for a in 0..n_params {
                let ra = row[a] * w;
                for b in a..n_params {
                    f[(a, b)] += ra * row[b];
                }
            }
        }
    }
    f.fill_lower_triangle_with_upper_triangle();
    Ok(f)
}

/// Per-channel Fisher matrices; the matrix of a set is their sum.
pub fn channel_fishers(sens: &SensitivityTensor, noise_variances: &[f64]) -> Vec<DMatrix<f64>> {
    (0..sens.shape().1)
        .map(|j| fisher_matrix(sens, &[j], noise_variances).expect("channel in range"))
        .collect()
}

/// `0.5 ln(f + 1/p0) - 0.5 ln(1/p0)` for a scalar Fisher value and prior variance.
pub fn info_gain_scalar(fisher: f64, prior_variance: f64) -> f64 {
    0.5 * (fisher * prior_variance).ln_1p()
}

/// `0.5 ln|F + P0^-1| - 0.5 ln|P0^-1|`, evaluated as `0.5 ln|I + L^T F L|`
/// with `P0 = L L^T` so that badly scaled parameters do not lose precision.
pub fn info_gain(fisher: &DMatrix<f64>, prior_cov: &DMatrix<f64>) -> Result<f64> {
    let n = prior_cov.nrows();
    if fisher.shape() != (n, n) || prior_cov.ncols() != n {
        return Err(Error::Shape(format!(
            "Fisher matrix {:?} does not match prior covariance {:?}",
            fisher.shape(),
            prior_cov.shape()
        )));
    }
    let scale = fisher.abs().max();
    if !scale.is_finite() {
        return Err(Error::InvalidFisher("non-finite entries".into()));
    }
    if scale == 0.0 {
        return Ok(0.0);
    }
    let asym = (fisher - fisher.transpose()).abs().max();
    if asym > 1e-10 * scale {
        return Err(Error::InvalidFisher(format!("asymmetric by {asym:e}")));
    }
    let min_eig = SymmetricEigen::new(fisher.clone()).eigenvalues.min();
    if min_eig < -1e-10 * scale {
        return Err(Error::InvalidFisher(format!("negative eigenvalue {min_eig:e}")));
    }
    let l = prior_cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("prior covariance is not positive definite".into()))?
        .unpack();
    let m = DMatrix::identity(n, n) + l.transpose() * fisher * &l;
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::InvalidFisher("I + L^T F L is not positive definite".into()))?;
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    Ok(0.5 * log_det)
}

/// Channel-by-parameter gain matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    pub g: DMatrix<f64>,
    pub normalized: bool,
}

impl GainMatrix {
    /// Divides by the largest entry; an all-zero matrix is returned as is.
    pub fn normalize(raw: DMatrix<f64>) -> Self {
        let max = raw.max();
        if max > 0.0 {
            Self {
                g: raw / max,
                normalized: true,
            }
        } else {
            Self {
                g: raw,
                normalized: false,
            }
        }
    }

    pub fn n_channels(&self) -> usize {
        self.g.nrows()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.g.row_iter().map(|r| r.sum()).collect()
    }
}

/// Entrywise gains `info_gain_scalar(F[j, k], P0[k, k])`.
pub fn raw_gains(fisher: &DMatrix<f64>, prior_variances: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(fisher.nrows(), fisher.ncols(), |j, k| {
        info_gain_scalar(fisher[(j, k)], prior_variances[k])
    })
}

/// Normalized gain matrix of one Monte Carlo sample, taking the sampled
/// parameters as the point estimate.
pub fn gain_matrix(
    problem: &PlacementProblem,
    theta_sample: &[f64],
    excitation: &[f64],
) -> Result<GainMatrix> {
    let sens = sensitivities(problem, theta_sample, excitation)?;
    Ok(gain_matrix_from_sensitivities(problem, &sens))
}

pub fn gain_matrix_from_sensitivities(
    problem: &PlacementProblem,
    sens: &SensitivityTensor,
) -> GainMatrix {
    let f = fisher_scalars(sens, &problem.noise_variances());
    GainMatrix::normalize(raw_gains(&f, &problem.prior().variances()))
}

/// Sum of the gain-matrix row of `action`.
pub fn reward_of_action(gain: &GainMatrix, action: usize) -> Result<f64> {
    if action >= gain.n_channels() {
        return Err(Error::InvalidAction {
            action,
            reason: format!("only {} channels exist", gain.n_channels()),
        });
    }
    Ok(gain.g.row(action).sum())
}
