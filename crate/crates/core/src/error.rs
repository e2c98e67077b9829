use thiserror::Error;

use crate::vehicle::VehicleId;

/// Failure of a model evaluation at a singular configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// The subject sits on (or within `eps_dist` of) a field source.
    #[error("distance {distance} m to vehicle {vehicle} is at or below the singular radius")]
    DegenerateDistance { vehicle: VehicleId, distance: f64 },
    /// The vehicle body touches or penetrates a restriction.
    #[error("vehicle body touches restriction {restriction} (clearance {clearance} m)")]
    BodyContact { restriction: u32, clearance: f64 },
    /// `1 + w2 * v` is not positive, so the virtual distance is undefined.
    #[error("speed scale 1 + w2*v is not positive at v = {speed} m/s")]
    SingularSpeedScale { speed: f64 },
}
