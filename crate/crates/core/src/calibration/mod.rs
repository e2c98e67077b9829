//! Position RMSE loss and swarm calibration of car-following parameters.

mod pso;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pso::{minimize, pso_calibrate, CalibrationReport, PsoConfig, PsoError, PsoOutcome};

use crate::dataset::TrajectoryPair;
use crate::dynamics::{simulate_pair, CarFollowingModel, DrsModel};
use crate::idm::{IdmModel, IdmParams};
use crate::params::{AccelBounds, DrsParams, ParamError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RmseError {
    #[error("series lengths differ ({real} vs {sim})")]
    LengthMismatch { real: usize, sim: usize },
    #[error("series are empty")]
    Empty,
}

/// Root-mean-square difference between two position series, m.
pub fn rmse(real: &[f64], sim: &[f64]) -> Result<f64, RmseError> {
    if real.len() != sim.len() {
        return Err(RmseError::LengthMismatch { real: real.len(), sim: sim.len() });
    }
    if real.is_empty() {
        return Err(RmseError::Empty);
    }
    let sq: f64 = real.iter().zip(sim).map(|(r, s)| (r - s) * (r - s)).sum();
    Ok((sq / real.len() as f64).sqrt())
}

/// Mean per-pair position RMSE of `model`, m.
///
/// Any pair that collides, hits a model error or fails to simulate makes the
/// whole fitness `+inf`. Pairs are simulated in parallel and the per-pair
/// losses are summed in sorted order, so the result does not depend on pair
/// order or thread count.
pub fn fitness(pairs: &[TrajectoryPair], model: &dyn CarFollowingModel, bounds: AccelBounds) -> f64 {
    if pairs.is_empty() {
        return f64::INFINITY;
    }
    let mut losses: Vec<f64> = pairs
        .par_iter()
        .map(|pair| match simulate_pair(pair, model, bounds) {
            Ok(r) if !r.collision_flag && r.model_errors == 0 && r.rmse_position.is_finite() => r.rmse_position,
            _ => f64::INFINITY,
        })
        .collect();
    losses.sort_by(f64::total_cmp);
    losses.iter().sum::<f64>() / losses.len() as f64
}

/// Which model family is calibrated, with the values of the non-calibrated
/// fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelKind {
    Drs { base: DrsParams },
    Idm { bounds: AccelBounds },
}

/// A complete parameter set for one model family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", content = "params", rename_all = "lowercase")]
pub enum FittedParams {
    Drs(DrsParams),
    Idm(IdmParams),
}

impl FittedParams {
    pub fn model_name(&self) -> &'static str {
        match self {
            FittedParams::Drs(_) => "drs",
            FittedParams::Idm(_) => "idm",
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        match self {
            FittedParams::Drs(p) => p.validate(),
            FittedParams::Idm(p) => p.validate(),
        }
    }

    pub fn model(&self, bounds: AccelBounds) -> Box<dyn CarFollowingModel> {
        match *self {
            FittedParams::Drs(params) => Box::new(DrsModel::new(params)),
            FittedParams::Idm(params) => Box::new(IdmModel { params, bounds }),
        }
    }
}

impl ModelKind {
    pub fn drs() -> Self {
        ModelKind::Drs { base: DrsParams::reference() }
    }

    pub fn idm() -> Self {
        ModelKind::Idm { bounds: AccelBounds::default() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Drs { .. } => "drs",
            ModelKind::Idm { .. } => "idm",
        }
    }

    pub fn parameter_names(&self) -> &'static [&'static str] {
        match self {
            ModelKind::Drs { .. } => &DrsParams::CALIBRATED,
            ModelKind::Idm { .. } => &IdmParams::CALIBRATED,
        }
    }

    pub fn dimension(&self) -> usize {
        self.parameter_names().len()
    }

    pub fn accel_bounds(&self) -> AccelBounds {
        match self {
            ModelKind::Drs { base } => base.accel_bounds(),
            ModelKind::Idm { bounds } => *bounds,
        }
    }

    /// Search box used when the configuration gives none. It contains the
    /// reference values and keeps `lambda`, `alpha`, `beta2` positive.
    pub fn default_bounds(&self) -> Vec<(f64, f64)> {
        match self {
            ModelKind::Drs { .. } => vec![
                (5.0, 40.0),
                (0.01, 10.0),
                (0.0, 1.0),
                (1e-3, 1e3),
                (0.0, 20.0),
                (0.05, 3.0),
                (0.1, 5.0),
                (0.1, 4.0),
                (0.0, 1.0),
                (0.0, 1.0),
                (0.0, 1.0),
                (0.0, 2.0),
            ],
            ModelKind::Idm { .. } => vec![(10.0, 45.0), (0.1, 5.0), (0.1, 5.0), (0.5, 10.0), (0.1, 4.0), (1.0, 8.0)],
        }
    }

    /// Builds a parameter set, checking the analytic constraints.
    pub fn params(&self, values: &[f64]) -> Result<FittedParams, ParamError> {
        match self {
            ModelKind::Drs { base } => {
                let p = base.with_vector(values)?;
                p.validate()?;
                Ok(FittedParams::Drs(p))
            }
            ModelKind::Idm { .. } => {
                let p = IdmParams::from_vector(values)?;
                p.validate()?;
                Ok(FittedParams::Idm(p))
            }
        }
    }

    pub fn feasible(&self, values: &[f64]) -> bool {
        self.params(values).is_ok()
    }

    /// Fitness of a parameter vector; violating vectors are refused rather
    /// than scored.
    pub fn fitness(&self, values: &[f64], pairs: &[TrajectoryPair]) -> Result<f64, ParamError> {
        let params = self.params(values)?;
        let bounds = self.accel_bounds();
        Ok(fitness(pairs, params.model(bounds).as_ref(), bounds))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]), Ok(0.0));
        assert_eq!(rmse(&[1.0, 2.0, 3.0], &[1.25, 2.25, 3.25]), Ok(0.25));
        assert_eq!(rmse(&[0.0, 1.0, 2.0], &[0.0, 1.0, 5.0]), Ok(3f64.sqrt()));
        assert_eq!(rmse(&[1.0], &[]), Err(RmseError::LengthMismatch { real: 1, sim: 0 }));
        assert_eq!(rmse(&[], &[]), Err(RmseError::Empty));
    }

    #[test]
    fn reference_set_lies_inside_default_bounds() {
        let drs = ModelKind::drs();
        for ((lo, hi), v) in drs.default_bounds().iter().zip(DrsParams::reference().to_vector()) {
            assert!(*lo <= v && v <= *hi);
        }
        let idm = ModelKind::idm();
        for ((lo, hi), v) in idm.default_bounds().iter().zip(IdmParams::reference().to_vector()) {
            assert!(*lo <= v && v <= *hi);
        }
    }

    #[test]
    fn violating_vector_is_refused() {
        let mut x = DrsParams::reference().to_vector();
        x[5] = -0.5;
        assert!(matches!(ModelKind::drs().fitness(&x, &[]), Err(ParamError::SigmaForbidden(_))));
        assert!(!ModelKind::drs().feasible(&x));
    }

    #[test]
    fn fitted_params_json_is_tagged() {
        let json = serde_json::to_value(FittedParams::Idm(IdmParams::reference())).unwrap();
        assert_eq!(json["model"], "idm");
        assert_eq!(json["params"]["s0"], 3.0);
    }
}
