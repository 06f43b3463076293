//! Immutable definition of a placement problem.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::building::{calibrate_uniform_mass, BuildingParams, ChannelSpec, SensorKind};
use crate::error::{Error, Result};
use crate::ground_motion::KanaiTajimiParams;

/// Independent Gaussian prior on the uncertain parameters, stated as a mean
/// and a coefficient of variation per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPrior {
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

impl ParameterPrior {
    pub fn uniform_cov(mean: Vec<f64>, cov: f64) -> Result<Self> {
        let prior = Self {
            cov: vec![cov; mean.len()],
            mean,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.is_empty() || self.mean.len() != self.cov.len() {
            return Err(Error::InvalidParameter(
                "prior mean and coefficient-of-variation vectors must be non-empty and equally long"
                    .into(),
            ));
        }
        if self.mean.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::InvalidParameter("prior means must be positive".into()));
        }
        if self.cov.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidParameter(
                "coefficients of variation must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Diagonal of `P0`, `(cov * mean)^2`.
    pub fn variances(&self) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.cov)
            .map(|(m, c)| (m * c) * (m * c))
            .collect()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.variances().into())
    }

    /// Draws every component independently, redrawing non-positive values.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.cov)
            .map(|(&m, &c)| loop {
                let z: f64 = StandardNormal.sample(rng);
                let v = m + c * m * z;
                if v > 0.0 {
                    break v;
                }
            })
            .collect()
    }
}

/// A sensor type that may be placed at any story.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorType {
    pub kind: SensorKind,
    pub noise_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementProblem {
    building: BuildingParams,
    sensors: Vec<SensorType>,
    prior: ParameterPrior,
    excitation: KanaiTajimiParams,
    budget: usize,
    channels: Vec<ChannelSpec>,
}

impl PlacementProblem {
    /// `building` supplies the fixed masses and the mean stiffness and
    /// damping; its parameter vector must equal the prior mean.
    pub fn new(
        building: BuildingParams,
        mut sensors: Vec<SensorType>,
        prior: ParameterPrior,
        excitation: KanaiTajimiParams,
        budget: usize,
    ) -> Result<Self> {
        building.validate()?;
        prior.validate()?;
        excitation.validate()?;
        let n = building.n_story();
        if prior.len() != 2 * n {
            return Err(Error::InvalidParameter(format!(
                "prior has {} parameters, a {n}-story building has {}",
                prior.len(),
                2 * n
            )));
        }
        if sensors.is_empty() {
            return Err(Error::InvalidParameter("at least one sensor type is required".into()));
        }
        sensors.sort_by_key(|s| s.kind);
        if sensors.windows(2).any(|w| w[0].kind == w[1].kind) {
            return Err(Error::InvalidParameter("sensor types must be distinct".into()));
        }
        if let Some(s) = sensors
            .iter()
            .find(|s| !(s.noise_variance.is_finite() && s.noise_variance > 0.0))
        {
            return Err(Error::InvalidParameter(format!(
                "noise variance of {} sensors must be positive, got {}",
                s.kind, s.noise_variance
            )));
        }
        let channels: Vec<ChannelSpec> = sensors
            .iter()
            .flat_map(|s| {
                (1..=n).map(move |location| ChannelSpec {
                    kind: s.kind,
                    location,
                    noise_variance: s.noise_variance,
                })
            })
            .collect();
        if budget == 0 || budget > channels.len() {
            return Err(Error::InvalidParameter(format!(
                "sensor budget must be in 1..={}, got {budget}",
                channels.len()
            )));
        }
        Ok(Self {
            building,
            sensors,
            prior,
            excitation,
            budget,
            channels,
        })
    }

    /// Four-story benchmark: stiffness 175/175/140/140 MN/m, damping 1% of
    /// stiffness, uniform mass tuned to a 0.45 s fundamental period, 20%
    /// coefficient of variation, three sensor types, three sensors.
    pub fn benchmark() -> Self {
        let stiffness = vec![175e6, 175e6, 140e6, 140e6];
        let damping: Vec<f64> = stiffness.iter().map(|k| k / 100.0).collect();
        let mass = calibrate_uniform_mass(&stiffness, 0.45).expect("positive stiffness");
        let building = BuildingParams::new(stiffness, damping, vec![mass; 4]).expect("valid");
        let prior = ParameterPrior::uniform_cov(building.theta(), 0.2).expect("valid");
        let sensors = vec![
            SensorType { kind: SensorKind::Acceleration, noise_variance: 1e-3 },
            SensorType { kind: SensorKind::DriftVelocity, noise_variance: 1e-5 },
            SensorType { kind: SensorKind::Drift, noise_variance: 1e-6 },
        ];
        Self::new(building, sensors, prior, KanaiTajimiParams::default(), 3).expect("valid")
    }

    pub fn building(&self) -> &BuildingParams {
        &self.building
    }

    pub fn sensors(&self) -> &[SensorType] {
        &self.sensors
    }

    pub fn prior(&self) -> &ParameterPrior {
        &self.prior
    }

    pub fn excitation(&self) -> &KanaiTajimiParams {
        &self.excitation
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn n_story(&self) -> usize {
        self.building.n_story()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_params(&self) -> usize {
        self.prior.len()
    }

    /// Channels in action-index order.
    pub fn channels(&self) -> &[ChannelSpec] {
        &self.channels
    }

    pub fn channel_label(&self, index: usize) -> String {
        self.channels
            .get(index)
            .map(ChannelSpec::label)
            .unwrap_or_else(|| format!("channel{index}"))
    }

    pub fn noise_variances(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.noise_variance).collect()
    }

    pub fn with_budget(&self, budget: usize) -> Result<Self> {
        Self::new(
            self.building.clone(),
            self.sensors.clone(),
            self.prior.clone(),
            self.excitation,
            budget,
        )
    }
}
