//! Boxplot statistics, acceleration/strength heatmaps, speed-risk curves and
//! CSV/JSON export of every artifact.
//!
//! CSV numbers are written with 6 significant digits (`%g` style); JSON keeps
//! full precision.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::CalibrationReport;
use crate::dynamics::{CarFollowingModel, SimulationResult};
use crate::params::{AccelBounds, DrsParams};
use crate::risk::{desired_velocity, speed_acceleration, speed_field, total_risk};
use crate::vehicle::{VehicleId, VehicleState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("no values to summarise")]
    Empty,
    #[error("value {0} is not finite")]
    NonFinite(f64),
    #[error("invalid axis: {0}")]
    InvalidAxis(String),
    #[error("unsupported export format `{0}` (expected csv or json)")]
    UnsupportedFormat(String),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    /// Smallest value not below `q1 - 1.5 iqr`.
    pub lower_adjacent: f64,
    /// Largest value not above `q3 + 1.5 iqr`.
    pub upper_adjacent: f64,
}

/// Quantile of sorted data by linear interpolation between order statistics
/// (the inclusive method: position `p (n - 1)`).
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn boxplot_stats(values: &[f64]) -> Result<BoxplotStats, ReportError> {
    if values.is_empty() {
        return Err(ReportError::Empty);
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(ReportError::NonFinite(bad));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.5), quantile(&sorted, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let lower_adjacent = *sorted.iter().find(|&&v| v >= lo_fence).expect("q1 lies above the lower fence");
    let upper_adjacent = *sorted.iter().rev().find(|&&v| v <= hi_fence).expect("q3 lies below the upper fence");
    Ok(BoxplotStats { n: sorted.len(), median, q1, q3, iqr, lower_adjacent, upper_adjacent })
}

/// Evenly spaced axis from `min` to `max` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl AxisSpec {
    pub fn new(name: impl Into<String>, min: f64, max: f64, steps: usize) -> Result<Self, ReportError> {
        let axis = Self { name: name.into(), min, max, steps };
        axis.check()?;
        Ok(axis)
    }

    /// Parses `name:min:max:steps`.
    pub fn parse(spec: &str) -> Result<Self, ReportError> {
        let bad = || ReportError::InvalidAxis(format!("`{spec}` is not name:min:max:steps"));
        let parts: Vec<&str> = spec.split(':').collect();
        let [name, min, max, steps] = parts.as_slice() else {
            return Err(bad());
        };
        Self::new(
            name.trim(),
            min.trim().parse().map_err(|_| bad())?,
            max.trim().parse().map_err(|_| bad())?,
            steps.trim().parse().map_err(|_| bad())?,
        )
    }

    pub fn check(&self) -> Result<(), ReportError> {
        let bad = |msg: &str| Err(ReportError::InvalidAxis(format!("{}: {msg}", self.name)));
        if self.steps == 0 {
            return bad("steps must be >= 1");
        }
        if !(self.min.is_finite() && self.max.is_finite()) {
            return bad("bounds must be finite");
        }
        if self.steps == 1 && self.min != self.max {
            return bad("a single step needs min == max");
        }
        if self.steps > 1 && !(self.min < self.max) {
            return bad("min must be below max");
        }
        Ok(())
    }

    /// Sample points. Points shared by two axes over the same range are
    /// bit-identical regardless of resolution.
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                let f = i as f64 / last;
                self.min * (1.0 - f) + self.max * f
            })
            .collect()
    }
}

/// Lead/follow setup of a heatmap: the leader cruises at `leader_speed` and
/// the follower is placed `gap` behind it (centroid distance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapScenario {
    pub leader_speed: f64,
    pub leader_length: f64,
    pub leader_width: f64,
    pub follower_length: f64,
    pub follower_width: f64,
}

impl Default for HeatmapScenario {
    fn default() -> Self {
        Self { leader_speed: 20.0, leader_length: 4.5, leader_width: 1.8, follower_length: 4.5, follower_width: 1.8 }
    }
}

impl HeatmapScenario {
    pub fn default_speed_axis() -> AxisSpec {
        AxisSpec { name: "follower_speed".into(), min: 0.0, max: 40.0, steps: 81 }
    }

    pub fn default_gap_axis() -> AxisSpec {
        AxisSpec { name: "gap".into(), min: 1.0, max: 100.0, steps: 100 }
    }

    pub fn states(&self, follower_speed: f64, gap: f64) -> (VehicleState, VehicleState) {
        let leader = VehicleState::on_lane(VehicleId(1), 0.0, gap, self.leader_speed, 0.0, self.leader_length, self.leader_width);
        let follower =
            VehicleState::on_lane(VehicleId(2), 0.0, 0.0, follower_speed, 0.0, self.follower_length, self.follower_width);
        (leader, follower)
    }
}

/// Cell values over follower speed (rows) x gap (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    /// `acceleration` (m/s²) or `total_strength`.
    pub quantity: String,
    pub model: String,
    pub scenario: HeatmapScenario,
    pub rows: AxisSpec,
    pub cols: AxisSpec,
    /// Row-major, `rows.steps x cols.steps`.
    pub values: Vec<Vec<f64>>,
    /// `(row, col)` of cells where the model could not be evaluated; those
    /// hold a saturated value.
    pub singular: Vec<(usize, usize)>,
    /// Parameters the grid was computed with.
    pub params: serde_json::Value,
}

fn grid_cells<F>(rows: &AxisSpec, cols: &AxisSpec, cell: F) -> (Vec<Vec<f64>>, Vec<(usize, usize)>)
where
    F: Fn(f64, f64) -> Option<f64> + Sync,
{
    let (row_values, col_values) = (rows.values(), cols.values());
    let raw: Vec<Vec<Option<f64>>> = row_values
        .par_iter()
        .map(|&r| col_values.iter().map(|&c| cell(r, c).filter(|v| v.is_finite())).collect())
        .collect();
    let mut singular = Vec::new();
    for (i, row) in raw.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if v.is_none() {
                singular.push((i, j));
            }
        }
    }
    (raw.into_iter().map(|row| row.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect()).collect(), singular)
}

/// Follower acceleration over a speed x gap grid, clamped to `bounds`.
///
/// Cells where the model errors (e.g. overlapping bodies) are set to
/// `bounds.min` and listed in `singular`.
pub fn accel_heatmap(
    model: &dyn CarFollowingModel,
    scenario: &HeatmapScenario,
    speed_axis: &AxisSpec,
    gap_axis: &AxisSpec,
    bounds: AccelBounds,
    params: serde_json::Value,
) -> Result<HeatmapGrid, ReportError> {
    speed_axis.check()?;
    gap_axis.check()?;
    let (mut values, singular) = grid_cells(speed_axis, gap_axis, |v, g| {
        let (leader, follower) = scenario.states(v, g);
        model.accel(&leader, &follower).ok().map(|a| bounds.clamp(a))
    });
    for &(i, j) in &singular {
        values[i][j] = bounds.min;
    }
    Ok(HeatmapGrid {
        quantity: "acceleration".into(),
        model: model.name().to_string(),
        scenario: *scenario,
        rows: speed_axis.clone(),
        cols: gap_axis.clone(),
        values,
        singular,
        params,
    })
}

/// Total DRS field strength acting on the follower over a speed x gap grid.
///
/// Singular cells take the largest finite strength of the grid.
pub fn strength_heatmap(
    params: &DrsParams,
    scenario: &HeatmapScenario,
    speed_axis: &AxisSpec,
    gap_axis: &AxisSpec,
) -> Result<HeatmapGrid, ReportError> {
    speed_axis.check()?;
    gap_axis.check()?;
    let (mut values, singular) = grid_cells(speed_axis, gap_axis, |v, g| {
        let (leader, follower) = scenario.states(v, g);
        total_risk(&follower, &[leader], &[], params).ok().map(|r| r.total_strength)
    });
    let saturated = values.iter().flatten().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    for &(i, j) in &singular {
        values[i][j] = saturated;
    }
    Ok(HeatmapGrid {
        quantity: "total_strength".into(),
        model: "drs".into(),
        scenario: *scenario,
        rows: speed_axis.clone(),
        cols: gap_axis.clone(),
        values,
        singular,
        params: serde_json::to_value(params).map_err(|e| ReportError::Serialize(e.to_string()))?,
    })
}

/// Speed-risk strength and acceleration of a 4.5 m x 1.8 m car over a speed
/// axis, behind a leader at `v_leader`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedRiskCurves {
    pub v_leader: f64,
    pub desired_velocity: f64,
    pub speed: Vec<f64>,
    pub strength: Vec<f64>,
    pub acceleration: Vec<f64>,
}

pub fn speed_risk_curves(v_leader: f64, axis: &AxisSpec, params: &DrsParams) -> Result<SpeedRiskCurves, ReportError> {
    axis.check()?;
    let v_d = desired_velocity(v_leader, params);
    let speed = axis.values();
    let strength = speed
        .iter()
        .map(|&v| {
            let car = VehicleState::on_lane(VehicleId(0), 0.0, 0.0, v, 0.0, 4.5, 1.8);
            speed_field(&car, v_d, params, None).magnitude
        })
        .collect();
    let acceleration = speed.iter().map(|&v| speed_acceleration(v, v_d, params)).collect();
    Ok(SpeedRiskCurves { v_leader, desired_velocity: v_d, speed, strength, acceleration })
}

/// Aggregate of a batch of per-pair simulations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub model: String,
    pub n_pairs: usize,
    pub mean_rmse: f64,
    pub rmse: BoxplotStats,
    pub collisions: usize,
    /// Labels of the pairs whose simulation collided.
    pub collided: Vec<String>,
    pub model_errors: usize,
}

pub fn summarize(model: &str, results: &[(String, SimulationResult)]) -> Result<SimulationSummary, ReportError> {
    let rmse: Vec<f64> = results.iter().map(|(_, r)| r.rmse_position).collect();
    let stats = boxplot_stats(&rmse)?;
    let collided: Vec<String> = results.iter().filter(|(_, r)| r.collision_flag).map(|(l, _)| l.clone()).collect();
    Ok(SimulationSummary {
        model: model.to_string(),
        n_pairs: results.len(),
        mean_rmse: rmse.iter().sum::<f64>() / rmse.len() as f64,
        rmse: stats,
        collisions: collided.len(),
        collided,
        model_errors: results.iter().map(|(_, r)| r.model_errors).sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(ReportError::UnsupportedFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Artifact<'a> {
    Simulation(&'a SimulationResult),
    Heatmap(&'a HeatmapGrid),
    Boxplot(&'a BoxplotStats),
    Calibration(&'a CalibrationReport),
    SpeedCurves(&'a SpeedRiskCurves),
    Summary(&'a SimulationSummary),
}

/// `%g`-style formatting with 6 significant digits.
pub fn format_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        trim(&format!("{x:.*}", (5 - exp) as usize))
    }
}

fn csv_table(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

fn g_row(values: &[f64]) -> Vec<String> {
    values.iter().map(|&v| format_g(v)).collect()
}

/// Serializes an artifact.
///
/// CSV schemas:
/// * simulation: `t,x,v,a,gap`
/// * heatmap: `<row axis>,<col axis>,value,singular` in row-major order
/// * boxplot: `n,median,q1,q3,iqr,lower_adjacent,upper_adjacent`
/// * calibration: `iteration,best_loss`
/// * speed curves: `speed,strength,acceleration`
/// * summary: `model,n_pairs,mean_rmse,median,q1,q3,iqr,lower_adjacent,upper_adjacent,collisions,model_errors`
pub fn export(artifact: Artifact<'_>, format: Format) -> Result<Vec<u8>, ReportError> {
    if format == Format::Json {
        let json = match artifact {
            Artifact::Simulation(a) => serde_json::to_vec_pretty(a),
            Artifact::Heatmap(a) => serde_json::to_vec_pretty(a),
            Artifact::Boxplot(a) => serde_json::to_vec_pretty(a),
            Artifact::Calibration(a) => serde_json::to_vec_pretty(a),
            Artifact::SpeedCurves(a) => serde_json::to_vec_pretty(a),
            Artifact::Summary(a) => serde_json::to_vec_pretty(a),
        };
        return json.map_err(|e| ReportError::Serialize(e.to_string()));
    }
    Ok(match artifact {
        Artifact::Simulation(r) => csv_table(
            &["t", "x", "v", "a", "gap"],
            r.follower.iter().zip(&r.gap).map(|(s, g)| g_row(&[s.t, s.x, s.v, s.a, *g])),
        ),
        Artifact::Heatmap(h) => {
            let header = [h.rows.name.as_str(), h.cols.name.as_str(), "value", "singular"];
            let (rv, cv) = (h.rows.values(), h.cols.values());
            let mut rows = Vec::with_capacity(rv.len() * cv.len());
            for (i, r) in rv.iter().enumerate() {
                for (j, c) in cv.iter().enumerate() {
                    let mut row = g_row(&[*r, *c, h.values[i][j]]);
                    row.push(u8::from(h.singular.contains(&(i, j))).to_string());
                    rows.push(row);
                }
            }
            csv_table(&header, rows.into_iter())
        }
        Artifact::Boxplot(b) => csv_table(
            &["n", "median", "q1", "q3", "iqr", "lower_adjacent", "upper_adjacent"],
            std::iter::once({
                let mut row = vec![b.n.to_string()];
                row.extend(g_row(&[b.median, b.q1, b.q3, b.iqr, b.lower_adjacent, b.upper_adjacent]));
                row
            }),
        ),
        Artifact::Calibration(c) => csv_table(
            &["iteration", "best_loss"],
            c.history.iter().enumerate().map(|(i, l)| vec![i.to_string(), format_g(*l)]),
        ),
        Artifact::SpeedCurves(s) => csv_table(
            &["speed", "strength", "acceleration"],
            (0..s.speed.len()).map(|i| g_row(&[s.speed[i], s.strength[i], s.acceleration[i]])),
        ),
        Artifact::Summary(s) => {
            let b = &s.rmse;
            let mut row = vec![s.model.clone(), s.n_pairs.to_string()];
            row.extend(g_row(&[s.mean_rmse, b.median, b.q1, b.q3, b.iqr, b.lower_adjacent, b.upper_adjacent]));
            row.push(s.collisions.to_string());
            row.push(s.model_errors.to_string());
            let header = [
                "model", "n_pairs", "mean_rmse", "median", "q1", "q3", "iqr", "lower_adjacent", "upper_adjacent",
                "collisions", "model_errors",
            ];
            csv_table(&header, std::iter::once(row))
        }
    })
}
