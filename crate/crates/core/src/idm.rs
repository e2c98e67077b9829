//! Intelligent Driver Model baseline.

use serde::{Deserialize, Serialize};

use crate::dynamics::{bumper_gap, CarFollowingModel};
use crate::error::ModelError;
use crate::params::{AccelBounds, ParamError};
use crate::vehicle::VehicleState;

/// Reference IDM parameter set, as shipped in `data/idm.json`.
pub const IDM_DEFAULT_JSON: &str = include_str!("../data/idm.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    /// Free-flow speed, m/s.
    pub v_free: f64,
    /// Maximum acceleration, m/s².
    pub a_max: f64,
    /// Comfortable deceleration, m/s².
    pub b: f64,
    /// Jam gap, m.
    pub s0: f64,
    /// Safe time headway, s.
    pub time_headway: f64,
    pub delta: f64,
}

impl Default for IdmParams {
    /// Reference calibrated values.
    fn default() -> Self {
        Self { v_free: 21.9612, a_max: 0.4708, b: 1.1153, s0: 3.0, time_headway: 1.5754, delta: 4.0 }
    }
}

impl IdmParams {
    pub const CALIBRATED: [&'static str; 6] = ["v_free", "a_max", "b", "s0", "time_headway", "delta"];

    pub fn reference() -> Self {
        Self::default()
    }

    pub fn to_vector(&self) -> [f64; 6] {
        [self.v_free, self.a_max, self.b, self.s0, self.time_headway, self.delta]
    }

    pub fn from_vector(values: &[f64]) -> Result<Self, ParamError> {
        let [v_free, a_max, b, s0, time_headway, delta]: [f64; 6] =
            values.try_into().map_err(|_| ParamError::VectorLength { expected: 6, got: values.len() })?;
        Ok(Self { v_free, a_max, b, s0, time_headway, delta })
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, value) in Self::CALIBRATED.iter().zip(self.to_vector()) {
            if !value.is_finite() {
                return Err(ParamError::NonFinite(name));
            }
            if value <= 0.0 {
                return Err(ParamError::NonPositive(name, value));
            }
        }
        Ok(())
    }

    /// Desired dynamic gap `s*`. The dynamic part is floored at 0 so that a
    /// much faster leader never shrinks `s*` below the jam gap.
    pub fn desired_gap(&self, v: f64, v_leader: f64) -> f64 {
        let dynamic = v * self.time_headway + v * (v - v_leader) / (2.0 * (self.a_max * self.b).sqrt());
        self.s0 + dynamic.max(0.0)
    }

    /// Steady-state net gap when following at constant speed `v < v_free`.
    pub fn equilibrium_gap(&self, v: f64) -> f64 {
        self.desired_gap(v, v) / (1.0 - (v / self.v_free).powf(self.delta)).sqrt()
    }
}

/// IDM acceleration from the bumper-to-bumper gap.
pub fn idm_accel(
    leader: &VehicleState,
    follower: &VehicleState,
    params: &IdmParams,
    bounds: AccelBounds,
) -> Result<f64, ModelError> {
    let s = bumper_gap(leader, follower);
    if !(s > 0.0) {
        return Err(ModelError::DegenerateDistance { vehicle: leader.id, distance: s });
    }
    let v = follower.v;
    let s_star = params.desired_gap(v, leader.v);
    let a = params.a_max * (1.0 - (v / params.v_free).powf(params.delta) - (s_star / s).powi(2));
    Ok(bounds.clamp(a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmModel {
    pub params: IdmParams,
    pub bounds: AccelBounds,
}

impl IdmModel {
    pub fn new(params: IdmParams) -> Self {
        Self { params, bounds: AccelBounds::default() }
    }
}

impl CarFollowingModel for IdmModel {
    fn name(&self) -> &str {
        "idm"
    }

    fn accel(&self, leader: &VehicleState, follower: &VehicleState) -> Result<f64, ModelError> {
        idm_accel(leader, follower, &self.params, self.bounds)
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::vehicle::VehicleId;

    fn pair(net_gap: f64, v_l: f64, v_f: f64) -> (VehicleState, VehicleState) {
        let leader = VehicleState::on_lane(VehicleId(1), 0.0, net_gap + 4.5, v_l, 0.0, 4.5, 1.8);
        let follower = VehicleState::on_lane(VehicleId(2), 0.0, 0.0, v_f, 0.0, 4.5, 1.8);
        (leader, follower)
    }

    #[test]
    fn shipped_json_is_reference() {
        let parsed: IdmParams = serde_json::from_str(IDM_DEFAULT_JSON).unwrap();
        assert_eq!(parsed, IdmParams::reference());
    }

    #[test]
    fn free_road_start() {
        let p = IdmParams::reference();
        let (l, f) = pair(1e9, 0.0, 0.0);
        assert_relative_eq!(idm_accel(&l, &f, &p, AccelBounds::default()).unwrap(), p.a_max, max_relative = 1e-12);
    }

    #[test]
    fn at_free_speed_only_interaction_remains() {
        let p = IdmParams::reference();
        for s in [50.0, 500.0, 5e4] {
            let (l, f) = pair(s, p.v_free, p.v_free);
            let a = idm_accel(&l, &f, &p, AccelBounds::default()).unwrap();
            let s_star = p.desired_gap(p.v_free, p.v_free);
            assert_relative_eq!(a, -p.a_max * (s_star / s).powi(2), max_relative = 1e-9);
            assert!(a < 0.0);
        }
    }

    #[test]
    fn reference_value() {
        // s* = 3 + 15 * 1.5754; a = a_max (1 - (15/v_free)^4 - (s*/30)^2)
        let p = IdmParams::reference();
        let (l, f) = pair(30.0, 15.0, 15.0);
        let a = idm_accel(&l, &f, &p, AccelBounds::default()).unwrap();
        assert_relative_eq!(a, -0.002_661_111_166_806_127_4, max_relative = 1e-9);
    }

    #[test]
    fn fast_leader_keeps_jam_gap() {
        let p = IdmParams::reference();
        assert_eq!(p.desired_gap(5.0, 30.0), p.s0);
    }

    #[test]
    fn overlap_is_degenerate() {
        let p = IdmParams::reference();
        let (l, f) = pair(-0.5, 10.0, 10.0);
        assert!(matches!(idm_accel(&l, &f, &p, AccelBounds::default()), Err(ModelError::DegenerateDistance { .. })));
    }

    #[test]
    fn equilibrium_has_zero_acceleration() {
        let p = IdmParams::reference();
        let s_eq = p.equilibrium_gap(15.0);
        let (l, f) = pair(s_eq, 15.0, 15.0);
        assert!(idm_accel(&l, &f, &p, AccelBounds::default()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_non_positive() {
        assert!(matches!(IdmParams { b: 0.0, ..IdmParams::reference() }.validate(), Err(ParamError::NonPositive("b", _))));
        assert!(IdmParams::reference().validate().is_ok());
    }
}
