//! Car-following simulation against a replayed leader trajectory.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::rmse;
use crate::dataset::TrajectoryPair;
use crate::error::ModelError;
use crate::params::{AccelBounds, DrsParams};
use crate::risk::{desired_velocity, interactive_acceleration_1d, speed_acceleration};
use crate::vehicle::VehicleState;

/// A longitudinal acceleration law for a follower behind a leader.
///
/// Implementations are pure: the same states always give the same answer.
pub trait CarFollowingModel: Sync {
    fn name(&self) -> &str;

    fn accel(&self, leader: &VehicleState, follower: &VehicleState) -> Result<f64, ModelError>;
}

impl<M: CarFollowingModel + ?Sized> CarFollowingModel for &M {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn accel(&self, leader: &VehicleState, follower: &VehicleState) -> Result<f64, ModelError> {
        (**self).accel(leader, follower)
    }
}

/// Leader repulsion plus the free-driving speed term, clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrsModel {
    pub params: DrsParams,
}

impl DrsModel {
    pub fn new(params: DrsParams) -> Self {
        Self { params }
    }
}

impl CarFollowingModel for DrsModel {
    fn name(&self) -> &str {
        "drs"
    }

    fn accel(&self, leader: &VehicleState, follower: &VehicleState) -> Result<f64, ModelError> {
        let p = &self.params;
        let repulsion = interactive_acceleration_1d(leader, follower, p)?;
        let v_d = desired_velocity(leader.v, p);
        Ok(p.accel_bounds().clamp(repulsion + speed_acceleration(follower.v, v_d, p)))
    }
}

/// Plays back a recorded acceleration series, looked up by follower time.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayModel {
    times: Vec<f64>,
    accels: Vec<f64>,
}

impl ReplayModel {
    /// `times` must be sorted ascending and as long as `accels`.
    pub fn new(times: Vec<f64>, accels: Vec<f64>) -> Self {
        assert_eq!(times.len(), accels.len(), "replay series length mismatch");
        assert!(!times.is_empty(), "replay series is empty");
        Self { times, accels }
    }

    /// Replays the recorded follower of `pair`.
    pub fn from_follower(pair: &TrajectoryPair) -> Self {
        let times = pair.follower.iter().map(|r| r.t).collect();
        let accels = pair.follower.iter().map(|r| r.a.unwrap_or(0.0)).collect();
        Self::new(times, accels)
    }

    fn nearest(&self, t: f64) -> usize {
        let i = self.times.partition_point(|&s| s < t);
        if i == 0 {
            0
        } else if i == self.times.len() || t - self.times[i - 1] <= self.times[i] - t {
            i - 1
        } else {
            i
        }
    }
}

impl CarFollowingModel for ReplayModel {
    fn name(&self) -> &str {
        "replay"
    }

    fn accel(&self, _leader: &VehicleState, follower: &VehicleState) -> Result<f64, ModelError> {
        Ok(self.accels[self.nearest(follower.t)])
    }
}

/// Advances `state` by `dt` under constant acceleration with a velocity floor at 0.
///
/// When the vehicle would reverse inside the step it stops at `v^2 / 2|a|`
/// and stays there.
pub fn kinematic_update(state: &VehicleState, accel: f64, dt: f64) -> VehicleState {
    let v_next = state.v + accel * dt;
    let (x, v) = if v_next < 0.0 {
        (state.x + state.v * state.v / (-2.0 * accel), 0.0)
    } else {
        (state.x + state.v * dt + 0.5 * accel * dt * dt, v_next)
    };
    VehicleState { t: state.t + dt, x, v, a: accel, ..*state }
}

/// One integration step of `follower`.
pub fn step(
    leader: &VehicleState,
    follower: &VehicleState,
    model: &dyn CarFollowingModel,
    dt: f64,
    bounds: AccelBounds,
) -> Result<VehicleState, ModelError> {
    let a = bounds.clamp(model.accel(leader, follower)?);
    Ok(kinematic_update(follower, a, dt))
}

/// Bumper-to-bumper gap between two lane-frame vehicles, m.
pub fn bumper_gap(leader: &VehicleState, follower: &VehicleState) -> f64 {
    leader.x - follower.x - 0.5 * (leader.length + follower.length)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowerSample {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub model: String,
    pub follower: Vec<FollowerSample>,
    /// Bumper-to-bumper gap at each sample, m.
    pub gap: Vec<f64>,
    pub rmse_position: f64,
    /// `true` iff some gap is `<= 0`.
    pub collision_flag: bool,
    /// Steps where the model could not be evaluated (or returned a non-finite
    /// value) and full braking was applied instead.
    pub model_errors: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("trajectory pair has {0} samples; at least 2 are required")]
    EmptyTrajectory(usize),
    #[error("leader and follower series differ in length ({leader} vs {follower})")]
    LengthMismatch { leader: usize, follower: usize },
}

/// Simulates the follower of `pair` while replaying the recorded leader.
///
/// The follower starts from its first recorded sample; each step uses the
/// recorded sample spacing as `dt`.
pub fn simulate_pair(
    pair: &TrajectoryPair,
    model: &dyn CarFollowingModel,
    bounds: AccelBounds,
) -> Result<SimulationResult, SimError> {
    let n = pair.follower.len();
    if pair.leader.len() != n {
        return Err(SimError::LengthMismatch { leader: pair.leader.len(), follower: n });
    }
    if n < 2 {
        return Err(SimError::EmptyTrajectory(n));
    }

    let mut follower = pair.follower[0].to_state();
    let mut samples = Vec::with_capacity(n);
    let mut gaps = Vec::with_capacity(n);
    let mut model_errors = 0;
    for k in 0..n {
        let leader = pair.leader[k].to_state();
        gaps.push(bumper_gap(&leader, &follower));
        let a = match model.accel(&leader, &follower) {
            Ok(a) if a.is_finite() => bounds.clamp(a),
            _ => {
                model_errors += 1;
                bounds.min
            }
        };
        samples.push(FollowerSample { t: follower.t, x: follower.x, v: follower.v, a });
        if k + 1 < n {
            let dt = pair.follower[k + 1].t - pair.follower[k].t;
            follower = kinematic_update(&follower, a, dt);
            follower.t = pair.follower[k + 1].t;
        }
    }

    let recorded: Vec<f64> = pair.follower.iter().map(|r| r.x).collect();
    let simulated: Vec<f64> = samples.iter().map(|s| s.x).collect();
    let rmse_position = rmse(&recorded, &simulated).expect("series have equal non-zero length");
    Ok(SimulationResult {
        model: model.name().to_string(),
        follower: samples,
        collision_flag: gaps.iter().any(|&g| g <= 0.0),
        gap: gaps,
        rmse_position,
        model_errors,
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::vehicle::VehicleId;

    fn car(x: f64, v: f64) -> VehicleState {
        VehicleState::on_lane(VehicleId(2), 0.0, x, v, 0.0, 4.5, 1.8)
    }

    struct Constant(f64);

    impl CarFollowingModel for Constant {
        fn name(&self) -> &str {
            "constant"
        }
        fn accel(&self, _: &VehicleState, _: &VehicleState) -> Result<f64, ModelError> {
            Ok(self.0)
        }
    }

    #[test]
    fn cruising_step() {
        let next = kinematic_update(&car(0.0, 10.0), 0.0, 0.1);
        assert_eq!(next.x, 1.0);
        assert_eq!(next.v, 10.0);
        assert_relative_eq!(next.t, 0.1);
    }

    #[test]
    fn velocity_floor_stops_exactly() {
        let next = kinematic_update(&car(0.0, 0.05), -1.0, 0.1);
        assert_eq!(next.v, 0.0);
        assert_relative_eq!(next.x, 0.001_25, epsilon = 1e-15);
        let parked = kinematic_update(&next, -1.0, 0.1);
        assert_eq!(parked.x, next.x);
    }

    #[test]
    fn constant_acceleration_matches_closed_form() {
        let mut s = car(0.0, 0.0);
        let leader = car(1000.0, 0.0);
        for _ in 0..10 {
            s = step(&leader, &s, &Constant(1.0), 0.1, AccelBounds::default()).unwrap();
        }
        assert!((s.x - 0.5).abs() < 1e-12);
        assert!((s.v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_clamps_model_output() {
        let s = step(&car(100.0, 0.0), &car(0.0, 20.0), &Constant(-50.0), 0.1, AccelBounds::default()).unwrap();
        assert_eq!(s.a, -10.0);
        assert_relative_eq!(s.v, 19.0);
    }

    #[test]
    fn replay_lookup_uses_nearest_sample() {
        let m = ReplayModel::new(vec![0.0, 0.1, 0.2], vec![1.0, 2.0, 3.0]);
        let at = |t| m.accel(&car(0.0, 0.0), &VehicleState { t, ..car(0.0, 0.0) }).unwrap();
        assert_eq!(at(-1.0), 1.0);
        assert_eq!(at(0.1 + 1e-12), 2.0);
        assert_eq!(at(0.19), 3.0);
        assert_eq!(at(5.0), 3.0);
    }

    #[test]
    fn drs_model_combines_terms() {
        let p = DrsParams::reference();
        let m = DrsModel::new(p);
        let leader = VehicleState { id: VehicleId(1), ..car(40.0, 18.0) };
        let follower = car(0.0, 18.0);
        let expected = interactive_acceleration_1d(&leader, &follower, &p).unwrap()
            + speed_acceleration(18.0, desired_velocity(18.0, &p), &p);
        assert_relative_eq!(m.accel(&leader, &follower).unwrap(), expected, max_relative = 1e-12);
        let rammed = VehicleState { x: 5.0, ..leader };
        assert_eq!(m.accel(&rammed, &car(0.0, 35.0)).unwrap(), -10.0);
    }

    proptest! {
        #[test]
        fn no_teleport(v in 0.0..45.0f64, a in -10.0..10.0f64, dt in 0.01..0.5f64) {
            let next = kinematic_update(&car(3.0, v), a, dt);
            prop_assert!(next.v >= 0.0);
            prop_assert!((next.x - 3.0).abs() <= v * dt + 0.5 * a.abs() * dt * dt + 1e-12);
            prop_assert!(next.x >= 3.0);
        }
    }
}
