//! Synthetic leader profiles and model-generated trajectory pairs.

use serde::{Deserialize, Serialize};

use crate::dataset::{TrajectoryPair, TrajectoryRecord};
use crate::dynamics::{kinematic_update, CarFollowingModel};
use crate::error::ModelError;
use crate::params::AccelBounds;
use crate::vehicle::{VehicleId, VehicleState};

/// Leader speed as a function of time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LeaderProfile {
    Constant { speed: f64 },
    /// `mean + amplitude sin(2 pi t / period)`.
    Sinusoidal { mean: f64, amplitude: f64, period: f64 },
    /// Cruise, brake at `decel` for `duration` from `start`, then regain the
    /// cruise speed at the same rate.
    BrakingPulse { cruise: f64, decel: f64, start: f64, duration: f64 },
}

impl LeaderProfile {
    pub fn accel(&self, t: f64) -> f64 {
        match *self {
            LeaderProfile::Constant { .. } => 0.0,
            LeaderProfile::Sinusoidal { amplitude, period, .. } => {
                let w = 2.0 * std::f64::consts::PI / period;
                amplitude * w * (w * t).cos()
            }
            LeaderProfile::BrakingPulse { decel, start, duration, .. } => {
                if t >= start && t < start + duration {
                    -decel
                } else if t >= start + duration && t < start + 2.0 * duration {
                    decel
                } else {
                    0.0
                }
            }
        }
    }

    pub fn initial_speed(&self) -> f64 {
        match *self {
            LeaderProfile::Constant { speed } => speed,
            LeaderProfile::Sinusoidal { mean, .. } => mean,
            LeaderProfile::BrakingPulse { cruise, .. } => cruise,
        }
    }
}

/// Car dimensions used by generated vehicles, m.
pub const CAR_LENGTH: f64 = 4.5;
pub const CAR_WIDTH: f64 = 1.8;

fn record(id: VehicleId, s: &VehicleState, lane_id: i64) -> TrajectoryRecord {
    TrajectoryRecord {
        vehicle_id: id,
        t: s.t,
        x: s.x,
        y: 0.0,
        lane_id,
        v: s.v,
        a: Some(s.a),
        length: s.length,
        width: s.width,
    }
}

/// Leader samples at `t = k dt`, `k = 0..=duration/dt`, integrated with the
/// same kinematics as the simulator.
pub fn leader_series(profile: &LeaderProfile, x0: f64, dt: f64, duration: f64) -> Vec<TrajectoryRecord> {
    let n = (duration / dt).round() as usize;
    let id = VehicleId(1);
    let mut s = VehicleState::on_lane(id, 0.0, x0, profile.initial_speed(), profile.accel(0.0), CAR_LENGTH, CAR_WIDTH);
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        s.a = profile.accel(s.t);
        out.push(record(id, &s, 1));
        if k < n {
            s = kinematic_update(&s, s.a, dt);
            s.t = (k + 1) as f64 * dt;
        }
    }
    out
}

/// A pair whose follower is driven by `model` behind `profile`.
///
/// The follower starts `gap` behind the leader (centroid distance) at
/// `follower_speed`. Replaying the pair with the same model reproduces the
/// follower exactly.
pub fn generate_pair(
    profile: &LeaderProfile,
    model: &dyn CarFollowingModel,
    bounds: AccelBounds,
    gap: f64,
    follower_speed: f64,
    dt: f64,
    duration: f64,
) -> Result<TrajectoryPair, ModelError> {
    let leader = leader_series(profile, gap, dt, duration);
    let id = VehicleId(2);
    let mut f = VehicleState::on_lane(id, 0.0, 0.0, follower_speed, 0.0, CAR_LENGTH, CAR_WIDTH);
    let mut follower = Vec::with_capacity(leader.len());
    for (k, l) in leader.iter().enumerate() {
        f.a = bounds.clamp(model.accel(&l.to_state(), &f)?);
        follower.push(record(id, &f, 1));
        if k + 1 < leader.len() {
            let a = f.a;
            f = kinematic_update(&f, a, leader[k + 1].t - l.t);
            f.t = leader[k + 1].t;
        }
    }
    Ok(TrajectoryPair { lane_id: 1, leader_id: VehicleId(1), follower_id: id, leader, follower })
}

/// The three leader profile families at a few intensities, `count` in total.
pub fn profile_suite(count: usize) -> Vec<LeaderProfile> {
    (0..count)
        .map(|i| {
            let level = (i / 3) as f64;
            match i % 3 {
                0 => LeaderProfile::Constant { speed: 12.0 + 2.0 * level },
                1 => LeaderProfile::Sinusoidal { mean: 14.0 + level, amplitude: 1.5 + 0.3 * level, period: 20.0 + 2.0 * level },
                _ => LeaderProfile::BrakingPulse {
                    cruise: 15.0 + level,
                    decel: 1.0 + 0.25 * level,
                    start: 5.0 + level,
                    duration: 3.0,
                },
            }
        })
        .collect()
}
