//! Planar vectors, vehicle-frame transforms and distance measures.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::params::DrsParams;
use crate::vehicle::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at `angle` radians counterclockwise from +x.
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c, y: s }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// `None` for the zero vector.
    pub fn unit(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0).then(|| self * (1.0 / n))
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Expresses a global point in the frame of `origin` (x along its heading).
pub fn to_vehicle_frame(point: Vec2, origin: &VehicleState) -> Vec2 {
    let (s, c) = origin.theta.sin_cos();
    let dx = point.x - origin.x;
    let dy = point.y - origin.y;
    Vec2::new(c * dx + s * dy, -s * dx + c * dy)
}

/// Rotates a vehicle-frame direction back into the global frame.
pub fn rotate_to_global(local: Vec2, origin: &VehicleState) -> Vec2 {
    let (s, c) = origin.theta.sin_cos();
    Vec2::new(c * local.x - s * local.y, s * local.x + c * local.y)
}

pub fn euclidean_distance(p: Vec2, q: Vec2) -> f64 {
    (p - q).norm()
}

/// Natural log of the longitudinal stretch `e^{w1 v} / (1 + w2 v)`.
pub fn ln_speed_stretch(speed: f64, params: &DrsParams) -> Result<f64, ModelError> {
    let denom = 1.0 + params.w2 * speed;
    if !(denom > 0.0) {
        return Err(ModelError::SingularSpeedScale { speed });
    }
    Ok(params.w1 * speed - denom.ln())
}

/// Offset of `subject` from `other` in `other`'s frame, with the longitudinal
/// component stretched by the speed of `other`.
pub fn virtual_offset(subject: Vec2, other: &VehicleState, params: &DrsParams) -> Result<Vec2, ModelError> {
    let local = to_vehicle_frame(subject, other);
    let stretch = ln_speed_stretch(other.v, params)?.exp();
    Ok(Vec2::new(local.x * stretch, local.y))
}

/// Anisotropic distance from `other`'s centroid to `subject`.
///
/// Points ahead of or behind a moving vehicle are stretched by
/// `e^{w1 v} / (1 + w2 v)`; lateral offsets are left untouched.
pub fn virtual_distance(subject: Vec2, other: &VehicleState, params: &DrsParams) -> Result<f64, ModelError> {
    Ok(virtual_offset(subject, other, params)?.norm())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::vehicle::{VehicleId, VehicleState};

    fn origin_at(x: f64, y: f64, theta: f64, v: f64) -> VehicleState {
        VehicleState { theta, y, ..VehicleState::on_lane(VehicleId(1), 0.0, x, v, 0.0, 4.5, 1.8) }
    }

    #[test]
    fn frame_identity_and_quarter_turn() {
        let o = origin_at(0.0, 0.0, 0.0, 0.0);
        assert_eq!(to_vehicle_frame(Vec2::new(5.0, 0.0), &o), Vec2::new(5.0, 0.0));
        let o = origin_at(0.0, 0.0, FRAC_PI_2, 0.0);
        let p = to_vehicle_frame(Vec2::new(0.0, 5.0), &o);
        assert_relative_eq!(p.x, 5.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn frame_matches_hand_rotation() {
        // dx = 2, dy = 3, theta = 0.3
        let (c, s) = (0.955_336_489_125_606_f64, 0.295_520_206_661_339_6_f64);
        let expected = Vec2::new(c * 2.0 + s * 3.0, -s * 2.0 + c * 3.0);
        let p = to_vehicle_frame(Vec2::new(3.0, 4.0), &origin_at(1.0, 1.0, 0.3, 0.0));
        assert_relative_eq!(p.x, expected.x, epsilon = 1e-12);
        assert_relative_eq!(p.y, expected.y, epsilon = 1e-12);
        assert_relative_eq!(p.x, 2.797_233_598_2, epsilon = 1e-9);
        assert_relative_eq!(p.y, 2.274_969_054_1, epsilon = 1e-9);
    }

    #[test]
    fn virtual_distance_examples() {
        let p = DrsParams::default();
        let still = origin_at(0.0, 0.0, 0.0, 0.0);
        assert_eq!(virtual_distance(Vec2::new(10.0, 0.0), &still, &p).unwrap(), 10.0);
        let moving = origin_at(0.0, 0.0, 0.0, 13.0);
        assert_relative_eq!(virtual_distance(Vec2::new(0.0, 3.0), &moving, &p).unwrap(), 3.0, epsilon = 1e-12);

        // 30 * e^{0.239 * 20} / (1 + 0.881 * 20)
        let expected = 30.0 * (4.78_f64).exp() / 18.62;
        let fast = origin_at(0.0, 0.0, 0.0, 20.0);
        let d = virtual_distance(Vec2::new(30.0, 0.0), &fast, &p).unwrap();
        assert_relative_eq!(d, expected, max_relative = 1e-12);
        assert_relative_eq!(d, 191.897_449_05, max_relative = 1e-8);
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(euclidean_distance(Vec2::ZERO, Vec2::ZERO), 0.0);
        assert_eq!(euclidean_distance(Vec2::ZERO, Vec2::new(3.0, 4.0)), 5.0);
    }

    #[test]
    fn singular_speed_scale() {
        let p = DrsParams { w2: -0.1, ..DrsParams::default() };
        let o = origin_at(0.0, 0.0, 0.0, 20.0);
        assert!(matches!(
            virtual_distance(Vec2::new(1.0, 0.0), &o, &p),
            Err(ModelError::SingularSpeedScale { .. })
        ));
    }

    proptest! {
        #[test]
        fn frame_is_isometry(
            ox in -100.0..100.0f64, oy in -100.0..100.0f64, th in -7.0..7.0f64,
            px in -100.0..100.0f64, py in -100.0..100.0f64,
            qx in -100.0..100.0f64, qy in -100.0..100.0f64,
        ) {
            let o = origin_at(ox, oy, th, 0.0);
            let (p, q) = (Vec2::new(px, py), Vec2::new(qx, qy));
            let d_local = (to_vehicle_frame(p, &o) - to_vehicle_frame(q, &o)).norm();
            prop_assert!((d_local - (p - q).norm()).abs() < 1e-9);
        }

        #[test]
        fn stationary_unrotated_equals_euclidean(
            ox in -100.0..100.0f64, oy in -100.0..100.0f64,
            px in -100.0..100.0f64, py in -100.0..100.0f64,
        ) {
            let o = origin_at(ox, oy, 0.0, 0.0);
            let p = Vec2::new(px, py);
            let d = virtual_distance(p, &o, &DrsParams::default()).unwrap();
            prop_assert_eq!(d, euclidean_distance(p, Vec2::new(ox, oy)));
        }

        #[test]
        fn virtual_distance_monotone_in_offsets(
            v in 0.0..40.0f64, x in 0.0..100.0f64, y in 0.0..20.0f64, dx in 0.01..10.0f64,
        ) {
            let p = DrsParams::default();
            let o = origin_at(0.0, 0.0, 0.0, v);
            let base = virtual_distance(Vec2::new(x, y), &o, &p).unwrap();
            prop_assert!(base >= 0.0);
            prop_assert!(virtual_distance(Vec2::new(x + dx, y), &o, &p).unwrap() > base);
            prop_assert!(virtual_distance(Vec2::new(-(x + dx), y), &o, &p).unwrap() > base);
            prop_assert!(virtual_distance(Vec2::new(x, y + dx), &o, &p).unwrap() > base);
        }
    }
}
