//! Risk surrogates: interactive vehicles, static restrictions and speed.
//!
//! Every surrogate produces a field strength at the subject and an
//! acceleration obtained by dividing the induced force by the subject's size
//! term. Products of exponentials overflow `f64` quickly (`e^{alpha v}` with
//! `alpha ≈ 5.4` and highway speeds), so strengths and accelerations are
//! assembled as `sign * exp(sum of logs)`. [`virtual_energy`] is the raw
//! product and can overflow; it is kept for inspection only.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::geometry::{ln_speed_stretch, rotate_to_global, to_vehicle_frame, virtual_offset, Vec2};
use crate::params::{DrsParams, Restriction};
use crate::vehicle::{VehicleId, VehicleState};

/// A field strength with its direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldVector {
    pub magnitude: f64,
    pub direction: Vec2,
}

impl FieldVector {
    pub fn zero(direction: Vec2) -> Self {
        Self { magnitude: 0.0, direction }
    }

    pub fn vector(&self) -> Vec2 {
        self.direction * self.magnitude
    }

    /// Builds from a signed strength; a negative value flips the direction.
    fn signed(value: f64, direction: Vec2) -> Self {
        if value < 0.0 {
            Self { magnitude: -value, direction: -direction }
        } else {
            Self { magnitude: value, direction }
        }
    }
}

/// `coeff * exp(ln_rest)` evaluated as `sign(coeff) * exp(ln|coeff| + ln_rest)`.
fn scaled_exp(coeff: f64, ln_rest: f64) -> f64 {
    if coeff == 0.0 {
        return 0.0;
    }
    coeff.signum() * (coeff.abs().ln() + ln_rest).exp()
}

/// `s_l ln L + s_w ln W`.
fn ln_size(veh: &VehicleState, params: &DrsParams) -> f64 {
    params.s_l * veh.length.ln() + params.s_w * veh.width.ln()
}

/// Cosine between the heading of `veh` and the direction from `veh` to `point`.
///
/// Returns 0 when `point` coincides with the centroid.
pub fn cos_to_point(veh: &VehicleState, point: Vec2) -> f64 {
    match (point - veh.position()).unit() {
        Some(u) => veh.heading().dot(u),
        None => 0.0,
    }
}

/// Virtual energy `L^{s_l} W^{s_w} e^{alpha v cos_phi}` evaluated directly.
pub fn virtual_energy(veh: &VehicleState, cos_phi: f64, params: &DrsParams) -> f64 {
    veh.length.powf(params.s_l) * veh.width.powf(params.s_w) * (params.alpha * veh.v * cos_phi).exp()
}

/// Natural log of [`virtual_energy`].
pub fn ln_virtual_energy(veh: &VehicleState, cos_phi: f64, params: &DrsParams) -> f64 {
    ln_size(veh, params) + params.alpha * veh.v * cos_phi
}

/// Signed log-decomposition of the interactive field of `other` at `subject`.
struct InteractiveTerms {
    ln_rest: f64,
    direction: Vec2,
}

fn interactive_terms(
    subject: Vec2,
    other: &VehicleState,
    cos_phi: f64,
    params: &DrsParams,
) -> Result<InteractiveTerms, ModelError> {
    let offset = virtual_offset(subject, other, params)?;
    let k = offset.norm();
    if !(k > params.eps_dist) {
        return Err(ModelError::DegenerateDistance { vehicle: other.id, distance: k });
    }
    let direction = rotate_to_global(offset * (1.0 / k), other);
    let ln_rest = ln_virtual_energy(other, cos_phi, params) + params.beta * other.a * cos_phi - params.beta2 * k.ln();
    Ok(InteractiveTerms { ln_rest, direction })
}

/// Field of `other` at the point `subject`, pointing from `other` toward it.
///
/// `cos_phi` is the cosine between `other`'s velocity and the direction to
/// `subject` (see [`cos_to_point`]).
pub fn interactive_field(
    subject: Vec2,
    other: &VehicleState,
    cos_phi: f64,
    params: &DrsParams,
) -> Result<FieldVector, ModelError> {
    let terms = interactive_terms(subject, other, cos_phi, params)?;
    Ok(FieldVector::signed(scaled_exp(params.lambda, terms.ln_rest), terms.direction))
}

/// Acceleration vector induced on `subject` by `other` in the general planar case.
pub fn interactive_acceleration(
    subject: &VehicleState,
    other: &VehicleState,
    params: &DrsParams,
) -> Result<Vec2, ModelError> {
    let cos_other = cos_to_point(other, subject.position());
    let cos_subject = cos_to_point(subject, other.position());
    let terms = interactive_terms(subject.position(), other, cos_other, params)?;
    let value = scaled_exp(params.lambda, terms.ln_rest + params.alpha * subject.v * cos_subject);
    Ok(terms.direction * value)
}

/// Longitudinal acceleration of `follower` caused by the `leader` ahead in
/// the same lane (lane frame, both headed along +x).
///
/// Non-positive whenever `lambda > 0`.
pub fn interactive_acceleration_1d(
    leader: &VehicleState,
    follower: &VehicleState,
    params: &DrsParams,
) -> Result<f64, ModelError> {
    let gap = leader.x - follower.x;
    if !(gap > params.eps_dist) {
        return Err(ModelError::DegenerateDistance { vehicle: leader.id, distance: gap });
    }
    let ln_k = gap.ln() + ln_speed_stretch(leader.v, params)?;
    let ln_rest = ln_size(leader, params) + params.alpha * (follower.v - leader.v)
        - params.beta * leader.a
        - params.beta2 * ln_k;
    Ok(-scaled_exp(params.lambda, ln_rest))
}

/// Geometry of a restriction relative to the subject body.
struct RestrictionGap {
    /// Unit vector from the subject centroid toward the restriction.
    toward: Vec2,
    clearance: f64,
}

fn restriction_gap(subject: &VehicleState, restr: &Restriction, params: &DrsParams) -> Result<RestrictionGap, ModelError> {
    let centroid = subject.position();
    let k = restr.shape.closest_point(centroid) - centroid;
    let distance = k.norm();
    let Some(toward) = k.unit() else {
        return Err(ModelError::BodyContact { restriction: restr.id, clearance: -0.0 });
    };
    // support distance of the L x W body along `toward`
    let local = to_vehicle_frame(centroid + toward, subject);
    let extent = 0.5 * subject.length * local.x.abs() + 0.5 * subject.width * local.y.abs();
    let clearance = distance - extent;
    if !(clearance > params.eps_dist) {
        return Err(ModelError::BodyContact { restriction: restr.id, clearance });
    }
    Ok(RestrictionGap { toward, clearance })
}

/// Inverse-square repulsive field of a restriction, measured from the body edge.
pub fn restriction_field(
    subject: &VehicleState,
    restr: &Restriction,
    params: &DrsParams,
) -> Result<FieldVector, ModelError> {
    let gap = restriction_gap(subject, restr, params)?;
    let magnitude = restr.t_omega / (gap.clearance * gap.clearance);
    Ok(FieldVector { magnitude, direction: -gap.toward })
}

/// Acceleration pushing `subject` away from the restriction.
pub fn restriction_acceleration(
    subject: &VehicleState,
    restr: &Restriction,
    params: &DrsParams,
) -> Result<Vec2, ModelError> {
    let gap = restriction_gap(subject, restr, params)?;
    let away = -gap.toward;
    let cos_phi = subject.heading().dot(away);
    let value = scaled_exp(restr.t_omega, -2.0 * gap.clearance.ln() - params.alpha * subject.v * cos_phi);
    Ok(away * value)
}

/// Desired speed blended from the flow speed and the leader speed.
///
/// Large `gamma` extrapolates far outside `[v0, v_leader]`; the result is
/// clamped to `[min(v0, v_leader), cap]` with `cap = 2 v0` unless configured.
pub fn desired_velocity(v_leader: f64, params: &DrsParams) -> f64 {
    let raw = params.gamma * params.v0 + (1.0 - params.gamma) * v_leader;
    let cap = params.desired_speed_cap();
    let floor = params.v0.min(v_leader).clamp(0.0, cap);
    raw.clamp(floor, cap)
}

/// `E_max` that makes the speed field consistent with `a_max`.
pub fn default_e_max(v_d: f64, params: &DrsParams) -> f64 {
    let sf = params.sigma_field();
    params.a_max * v_d.powf(sf) / sf
}

/// Speed-risk field of `veh` relative to its desired speed `v_d`, along the heading.
///
/// `e_max` defaults to [`default_e_max`].
pub fn speed_field(veh: &VehicleState, v_d: f64, params: &DrsParams, e_max: Option<f64>) -> FieldVector {
    let dv = (v_d - veh.v).abs();
    let direction = veh.heading();
    if dv == 0.0 {
        return FieldVector::zero(direction);
    }
    let e_max = e_max.unwrap_or_else(|| default_e_max(v_d, params));
    let ln_rest = ln_size(veh, params) + params.sigma_field() * (dv.ln() - v_d.ln());
    FieldVector { magnitude: scaled_exp(e_max, ln_rest).abs(), direction }
}

/// Free-driving acceleration toward the desired speed: `± a_max |v_d - v|^sigma`.
pub fn speed_acceleration(v: f64, v_d: f64, params: &DrsParams) -> f64 {
    let dv = v_d - v;
    if dv == 0.0 {
        return 0.0;
    }
    let magnitude = params.a_max * dv.abs().powf(params.sigma);
    if dv > 0.0 {
        magnitude
    } else {
        -magnitude
    }
}

/// The closest vehicle ahead of `subject` whose body overlaps it laterally.
pub fn leader_of<'a>(subject: &VehicleState, others: &'a [VehicleState]) -> Option<&'a VehicleState> {
    others
        .iter()
        .filter(|o| o.id != subject.id)
        .filter_map(|o| {
            let local = to_vehicle_frame(o.position(), subject);
            let overlap = 0.5 * (subject.width + o.width);
            (local.x > 0.0 && local.y.abs() < overlap).then_some((local.x, o))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, o)| o)
}

/// Per-source acceleration contributions, m/s² vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelComponents {
    pub interactive: Vec<(VehicleId, Vec2)>,
    pub restriction: Vec<(u32, Vec2)>,
    pub speed: Vec2,
}

/// Field strengths and accelerations acting on one vehicle at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskBreakdown {
    pub e_interactive: Vec<(VehicleId, FieldVector)>,
    pub e_restriction: Vec<(u32, FieldVector)>,
    pub e_speed: FieldVector,
    /// Sum of component magnitudes. Directions are deliberately not
    /// superposed, so opposing sources never cancel.
    pub total_strength: f64,
    pub desired_velocity: f64,
    pub a_components: AccelComponents,
    /// Sum of longitudinal components, clamped to the physical bounds.
    pub a_total: f64,
}

/// Evaluates every surrogate acting on `subject`.
///
/// The desired speed uses the leader chosen by [`leader_of`], or the flow
/// speed when no vehicle is ahead.
pub fn total_risk(
    subject: &VehicleState,
    others: &[VehicleState],
    restrictions: &[Restriction],
    params: &DrsParams,
) -> Result<RiskBreakdown, ModelError> {
    let pos = subject.position();
    let heading = subject.heading();

    let mut e_interactive = Vec::with_capacity(others.len());
    let mut a_interactive = Vec::with_capacity(others.len());
    for other in others.iter().filter(|o| o.id != subject.id) {
        let field = interactive_field(pos, other, cos_to_point(other, pos), params)?;
        e_interactive.push((other.id, field));
        a_interactive.push((other.id, interactive_acceleration(subject, other, params)?));
    }

    let mut e_restriction = Vec::with_capacity(restrictions.len());
    let mut a_restriction = Vec::with_capacity(restrictions.len());
    for restr in restrictions {
        e_restriction.push((restr.id, restriction_field(subject, restr, params)?));
        a_restriction.push((restr.id, restriction_acceleration(subject, restr, params)?));
    }

    let v_leader = leader_of(subject, others).map_or(params.v0, |l| l.v);
    let v_d = desired_velocity(v_leader, params);
    let e_speed = speed_field(subject, v_d, params, None);
    let a_speed = heading * speed_acceleration(subject.v, v_d, params);

    let total_strength = e_interactive.iter().map(|(_, f)| f.magnitude).sum::<f64>()
        + e_restriction.iter().map(|(_, f)| f.magnitude).sum::<f64>()
        + e_speed.magnitude;

    let longitudinal = a_interactive.iter().map(|(_, a)| a.dot(heading)).sum::<f64>()
        + a_restriction.iter().map(|(_, a)| a.dot(heading)).sum::<f64>()
        + a_speed.dot(heading);

    Ok(RiskBreakdown {
        e_interactive,
        e_restriction,
        e_speed,
        total_strength,
        desired_velocity: v_d,
        a_components: AccelComponents { interactive: a_interactive, restriction: a_restriction, speed: a_speed },
        a_total: params.accel_bounds().clamp(longitudinal),
    })
}
