use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u64);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Kinematic and geometric snapshot of one vehicle.
///
/// Positions are centroids in the global frame; `theta` is the heading
/// counterclockwise from +x. Speeds are non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub a: f64,
    pub theta: f64,
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StateError {
    #[error("vehicle {0}: field `{1}` is not finite")]
    NonFinite(VehicleId, &'static str),
    #[error("vehicle {0}: negative speed {1}")]
    NegativeSpeed(VehicleId, f64),
    #[error("vehicle {0}: body dimensions must be positive (L = {1}, W = {2})")]
    BadSize(VehicleId, f64, f64),
}

impl VehicleState {
    /// A vehicle travelling along the lane axis (+x, `y = 0`).
    pub fn on_lane(id: VehicleId, t: f64, x: f64, v: f64, a: f64, length: f64, width: f64) -> Self {
        Self { id, t, x, y: 0.0, v, a, theta: 0.0, length, width }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Unit heading vector; also the velocity direction since `v >= 0`.
    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.theta)
    }

    pub fn validate(&self) -> Result<(), StateError> {
        let fields = [
            ("t", self.t),
            ("x", self.x),
            ("y", self.y),
            ("v", self.v),
            ("a", self.a),
            ("theta", self.theta),
            ("length", self.length),
            ("width", self.width),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, value)| !value.is_finite()) {
            return Err(StateError::NonFinite(self.id, name));
        }
        if self.v < 0.0 {
            return Err(StateError::NegativeSpeed(self.id, self.v));
        }
        if self.length <= 0.0 || self.width <= 0.0 {
            return Err(StateError::BadSize(self.id, self.length, self.width));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let ok = VehicleState::on_lane(VehicleId(3), 0.0, 1.0, 2.0, 0.0, 4.5, 1.8);
        assert!(ok.validate().is_ok());
        assert!(matches!(VehicleState { v: -0.1, ..ok }.validate(), Err(StateError::NegativeSpeed(..))));
        assert!(matches!(VehicleState { width: 0.0, ..ok }.validate(), Err(StateError::BadSize(..))));
        assert!(matches!(VehicleState { t: f64::NAN, ..ok }.validate(), Err(StateError::NonFinite(_, "t"))));
    }
}
