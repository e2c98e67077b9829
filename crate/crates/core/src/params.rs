//! Calibratable model parameters, physical clamps and static restrictions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

/// Reference DRS parameter set, as shipped in `data/drs.json`.
pub const DRS_DEFAULT_JSON: &str = include_str!("../data/drs.json");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("parameter `{0}` is not finite")]
    NonFinite(&'static str),
    #[error("lambda * beta2 must be positive (got {0})")]
    LambdaBeta2(f64),
    #[error("lambda * alpha must be positive (got {0})")]
    LambdaAlpha(f64),
    #[error("sigma must be > 0 or < -1 (got {0})")]
    SigmaForbidden(f64),
    #[error("acceleration clamp must satisfy min < 0 < max (got [{0}, {1}])")]
    AccelClamp(f64, f64),
    #[error("eps_dist must be positive (got {0})")]
    EpsDist(f64),
    #[error("desired-speed cap must be positive (got {0})")]
    SpeedCap(f64),
    #[error("restriction severity must be >= 0 (got {0})")]
    NegativeSeverity(f64),
    #[error("restriction segment endpoints coincide")]
    DegenerateSegment,
    #[error("IDM parameter `{0}` must be positive (got {1})")]
    NonPositive(&'static str, f64),
    #[error("expected {expected} calibrated values, got {got}")]
    VectorLength { expected: usize, got: usize },
}

/// Lower/upper clamp on longitudinal acceleration, m/s².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for AccelBounds {
    fn default() -> Self {
        Self { min: -10.0, max: 10.0 }
    }
}

impl AccelBounds {
    pub fn clamp(&self, a: f64) -> f64 {
        a.clamp(self.min, self.max)
    }
}

fn default_a_phys_min() -> f64 {
    -10.0
}
fn default_a_phys_max() -> f64 {
    10.0
}
fn default_eps_dist() -> f64 {
    1e-3
}

/// The twelve calibrated DRS parameters plus non-calibrated clamps.
///
/// `sigma` is the stored speed exponent; the field exponent used by the
/// speed-risk strength is `sigma + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrsParams {
    /// Flow speed, m/s.
    pub v0: f64,
    /// Speed sensitivity of virtual energy, s/m.
    pub alpha: f64,
    /// Acceleration sensitivity of the interactive field, s²/m.
    pub beta: f64,
    /// Interactive field-strength scale.
    pub lambda: f64,
    /// Weight of the flow speed in the desired speed.
    pub gamma: f64,
    pub sigma: f64,
    /// Free-driving acceleration scale, m/s².
    pub a_max: f64,
    /// Distance decay exponent of the interactive field.
    pub beta2: f64,
    pub s_l: f64,
    pub s_w: f64,
    pub w1: f64,
    pub w2: f64,
    #[serde(default = "default_a_phys_min")]
    pub a_phys_min: f64,
    #[serde(default = "default_a_phys_max")]
    pub a_phys_max: f64,
    /// Singular radius around a field source, m.
    #[serde(default = "default_eps_dist")]
    pub eps_dist: f64,
    /// Upper clamp on the desired speed; `None` means `2 * v0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_d_cap: Option<f64>,
}

impl Default for DrsParams {
    /// Reference calibrated values.
    fn default() -> Self {
        Self {
            v0: 18.220,
            alpha: 5.425,
            beta: 0.185,
            lambda: 0.374,
            gamma: 14.000,
            sigma: 0.576,
            a_max: 1.554,
            beta2: 0.984,
            s_l: 0.068,
            s_w: 0.007,
            w1: 0.239,
            w2: 0.881,
            a_phys_min: default_a_phys_min(),
            a_phys_max: default_a_phys_max(),
            eps_dist: default_eps_dist(),
            v_d_cap: None,
        }
    }
}

impl DrsParams {
    /// Names of the calibrated parameters, in vector order.
    pub const CALIBRATED: [&'static str; 12] = [
        "v0", "alpha", "beta", "lambda", "gamma", "sigma", "a_max", "beta2", "s_l", "s_w", "w1", "w2",
    ];

    pub fn reference() -> Self {
        Self::default()
    }

    pub fn accel_bounds(&self) -> AccelBounds {
        AccelBounds { min: self.a_phys_min, max: self.a_phys_max }
    }

    pub fn desired_speed_cap(&self) -> f64 {
        self.v_d_cap.unwrap_or(2.0 * self.v0)
    }

    /// Exponent of the speed-risk field strength.
    pub fn sigma_field(&self) -> f64 {
        self.sigma + 1.0
    }

    pub fn to_vector(&self) -> [f64; 12] {
        [
            self.v0, self.alpha, self.beta, self.lambda, self.gamma, self.sigma, self.a_max, self.beta2,
            self.s_l, self.s_w, self.w1, self.w2,
        ]
    }

    /// Copy of `self` with the calibrated parameters replaced by `values`.
    pub fn with_vector(&self, values: &[f64]) -> Result<Self, ParamError> {
        let [v0, alpha, beta, lambda, gamma, sigma, a_max, beta2, s_l, s_w, w1, w2]: [f64; 12] =
            values.try_into().map_err(|_| ParamError::VectorLength { expected: 12, got: values.len() })?;
        Ok(Self { v0, alpha, beta, lambda, gamma, sigma, a_max, beta2, s_l, s_w, w1, w2, ..*self })
    }

    /// Sign constraints that keep the car-following response monotone:
    /// `lambda * beta2 > 0`, `lambda * alpha > 0`, `sigma ∉ [-1, 0]`.
    pub fn check_constraints(&self) -> Result<(), ParamError> {
        let lb = self.lambda * self.beta2;
        if !(lb > 0.0) {
            return Err(ParamError::LambdaBeta2(lb));
        }
        let la = self.lambda * self.alpha;
        if !(la > 0.0) {
            return Err(ParamError::LambdaAlpha(la));
        }
        if !(self.sigma > 0.0 || self.sigma < -1.0) {
            return Err(ParamError::SigmaForbidden(self.sigma));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let clamps = [("a_phys_min", self.a_phys_min), ("a_phys_max", self.a_phys_max), ("eps_dist", self.eps_dist)];
        for (name, value) in Self::CALIBRATED.into_iter().zip(self.to_vector()).chain(clamps) {
            if !value.is_finite() {
                return Err(ParamError::NonFinite(name));
            }
        }
        self.check_constraints()?;
        if !(self.a_phys_min < 0.0 && 0.0 < self.a_phys_max) {
            return Err(ParamError::AccelClamp(self.a_phys_min, self.a_phys_max));
        }
        if !(self.eps_dist > 0.0) {
            return Err(ParamError::EpsDist(self.eps_dist));
        }
        if let Some(cap) = self.v_d_cap {
            if !(cap > 0.0 && cap.is_finite()) {
                return Err(ParamError::SpeedCap(cap));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RestrictionShape {
    Point { at: Vec2 },
    Segment { start: Vec2, end: Vec2 },
}

impl RestrictionShape {
    /// Closest point of the shape to `p`.
    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        match *self {
            RestrictionShape::Point { at } => at,
            RestrictionShape::Segment { start, end } => {
                let d = end - start;
                let t = ((p - start).dot(d) / d.dot(d)).clamp(0.0, 1.0);
                start + d * t
            }
        }
    }
}

/// A static risk source: an obstacle or a rule boundary such as a lane line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Restriction {
    pub id: u32,
    pub shape: RestrictionShape,
    /// Severity coefficient; 0 disables the restriction (e.g. a dashed line
    /// during a lane change).
    pub t_omega: f64,
}

impl Restriction {
    pub fn point(id: u32, at: Vec2, t_omega: f64) -> Result<Self, ParamError> {
        Self { id, shape: RestrictionShape::Point { at }, t_omega }.validated()
    }

    pub fn segment(id: u32, start: Vec2, end: Vec2, t_omega: f64) -> Result<Self, ParamError> {
        Self { id, shape: RestrictionShape::Segment { start, end }, t_omega }.validated()
    }

    pub fn validated(self) -> Result<Self, ParamError> {
        if !self.t_omega.is_finite() {
            return Err(ParamError::NonFinite("t_omega"));
        }
        if self.t_omega < 0.0 {
            return Err(ParamError::NegativeSeverity(self.t_omega));
        }
        if let RestrictionShape::Segment { start, end } = self.shape {
            if start == end {
                return Err(ParamError::DegenerateSegment);
            }
        }
        Ok(self)
    }
}
