use drs_core::calibration::fitness;
use drs_core::dataset::TrajectoryPair;
use drs_core::dynamics::{bumper_gap, kinematic_update, simulate_pair, CarFollowingModel, DrsModel, ReplayModel};
use drs_core::idm::{IdmModel, IdmParams};
use drs_core::synthetic::{generate_pair, profile_suite, LeaderProfile, CAR_LENGTH, CAR_WIDTH};
use drs_core::{AccelBounds, DrsParams, VehicleId, VehicleState};

fn idm_pairs(n: usize, secs: f64) -> Vec<TrajectoryPair> {
    let model = IdmModel::new(IdmParams::reference());
    profile_suite(n)
        .iter()
        .map(|p| generate_pair(p, &model, AccelBounds::default(), 40.0, p.initial_speed(), 0.1, secs).unwrap())
        .collect()
}

#[test]
fn replay_reproduces_recorded_follower() {
    let pair = &idm_pairs(2, 60.0)[1];
    let r = simulate_pair(pair, &ReplayModel::from_follower(pair), AccelBounds::default()).unwrap();
    assert!(r.rmse_position <= 0.05, "{}", r.rmse_position);
    assert!(!r.collision_flag);
    assert_eq!(r.follower.len(), pair.len());
}

#[test]
fn idm_converges_to_closed_form_spacing() {
    let p = IdmParams::reference();
    let model = IdmModel::new(p);
    let s_eq = p.equilibrium_gap(15.0);
    let car = |id, x| VehicleState::on_lane(VehicleId(id), 0.0, x, 15.0, 0.0, CAR_LENGTH, CAR_WIDTH);
    let (mut leader, mut follower) = (car(1, CAR_LENGTH + s_eq - 8.0), car(2, 0.0));
    for _ in 0..6000 {
        let a = model.accel(&leader, &follower).unwrap();
        follower = kinematic_update(&follower, a, 0.1);
        leader = kinematic_update(&leader, 0.0, 0.1);
    }
    let gap = bumper_gap(&leader, &follower);
    assert!((gap - s_eq).abs() / s_eq < 0.01, "{gap} vs {s_eq}");
}

#[test]
fn stopped_leader_collision_is_flagged() {
    // leader parked 20 m ahead; the follower is replayed at constant 20 m/s
    let mut pair = idm_pairs(1, 5.0).remove(0);
    for (k, (l, f)) in pair.leader.iter_mut().zip(pair.follower.iter_mut()).enumerate() {
        l.x = 20.0;
        l.v = 0.0;
        l.a = Some(0.0);
        f.x = 20.0 * k as f64 * 0.1;
        f.v = 20.0;
        f.a = Some(0.0);
    }
    let r = simulate_pair(&pair, &ReplayModel::from_follower(&pair), AccelBounds::default()).unwrap();
    assert!(r.collision_flag);
    assert!(r.gap.iter().any(|&g| g <= 0.0));
}

#[test]
fn single_pair_fitness_is_its_rmse() {
    let pairs = idm_pairs(1, 20.0);
    let model = DrsModel::new(DrsParams { lambda: 50.0, beta2: 1.5, gamma: 1.0, ..DrsParams::reference() });
    let r = simulate_pair(&pairs[0], &model, AccelBounds::default()).unwrap();
    assert_eq!(fitness(&pairs, &model, AccelBounds::default()), r.rmse_position);
}

#[test]
fn fitness_ignores_pair_order() {
    let mut pairs = idm_pairs(6, 20.0);
    let model = DrsModel::new(DrsParams { lambda: 50.0, beta2: 1.5, gamma: 1.0, ..DrsParams::reference() });
    let a = fitness(&pairs, &model, AccelBounds::default());
    pairs.reverse();
    pairs.swap(1, 4);
    assert_eq!(fitness(&pairs, &model, AccelBounds::default()), a);
    assert!(a.is_finite());
}

#[test]
fn collision_makes_fitness_infinite() {
    let profile = LeaderProfile::Constant { speed: 12.0 };
    let recorded = generate_pair(&profile, &IdmModel::new(IdmParams::reference()), AccelBounds::default(), 40.0, 12.0, 0.1, 60.0).unwrap();
    let reference = DrsModel::new(DrsParams::reference());
    assert!(simulate_pair(&recorded, &reference, AccelBounds::default()).unwrap().collision_flag);
    assert_eq!(fitness(&[recorded], &reference, AccelBounds::default()), f64::INFINITY);
}
