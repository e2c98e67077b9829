//! Trajectory CSV ingestion and car-following pair extraction.
//!
//! Records are grouped per timestamp and lane, ordered by `x`, and each
//! vehicle's immediate successor in `x` is taken as its leader. Links with the
//! same (leader, follower) identity are stitched over consecutive timestamps
//! into pairs; lane changes, overtakes and sampling gaps cut a pair.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vehicle::{VehicleId, VehicleState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("required column `{0}` not found in header")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },
    #[error("series has {0} samples; finite differencing needs at least 3")]
    TooShort(usize),
    #[error("invalid column mapping `{0}`")]
    BadColumnSpec(String),
    #[error("csv error: {0}")]
    Csv(String),
}

impl From<csv::Error> for DatasetError {
    fn from(e: csv::Error) -> Self {
        DatasetError::Csv(e.to_string())
    }
}

/// One row of a trajectory dataset, in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub vehicle_id: VehicleId,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub lane_id: i64,
    pub v: f64,
    /// Absent when the dataset has no acceleration column.
    pub a: Option<f64>,
    pub length: f64,
    pub width: f64,
}

impl TrajectoryRecord {
    /// Lane-frame state: heading along +x, missing acceleration read as 0.
    pub fn to_state(&self) -> VehicleState {
        VehicleState {
            id: self.vehicle_id,
            t: self.t,
            x: self.x,
            y: self.y,
            v: self.v,
            a: self.a.unwrap_or(0.0),
            theta: 0.0,
            length: self.length,
            width: self.width,
        }
    }
}

/// Header names for each record field.
///
/// Defaults use common trajectory-export names. `y` and
/// `acceleration` are optional columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub vehicle_id: String,
    pub time: String,
    pub x: String,
    pub y: String,
    pub lane_id: String,
    pub speed: String,
    pub acceleration: String,
    pub length: String,
    pub width: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            vehicle_id: "vehicle_id".into(),
            time: "time".into(),
            x: "x".into(),
            y: "y".into(),
            lane_id: "lane_id".into(),
            speed: "speed".into(),
            acceleration: "acceleration".into(),
            length: "length".into(),
            width: "width".into(),
        }
    }
}

impl ColumnMap {
    /// Applies `field=header` overrides separated by commas, e.g.
    /// `time=Frame,x=LocalX`.
    pub fn with_overrides(mut self, spec: &str) -> Result<Self, DatasetError> {
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (field, header) = item.split_once('=').ok_or_else(|| DatasetError::BadColumnSpec(item.to_string()))?;
            let slot = match field.trim() {
                "vehicle_id" => &mut self.vehicle_id,
                "time" => &mut self.time,
                "x" => &mut self.x,
                "y" => &mut self.y,
                "lane_id" => &mut self.lane_id,
                "speed" => &mut self.speed,
                "acceleration" => &mut self.acceleration,
                "length" => &mut self.length,
                "width" => &mut self.width,
                _ => return Err(DatasetError::BadColumnSpec(item.to_string())),
            };
            *slot = header.trim().to_string();
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedRecords {
    pub records: Vec<TrajectoryRecord>,
    /// Rows dropped for non-finite or physically invalid values.
    pub rejected: Vec<RejectedRow>,
}

struct Columns {
    vehicle_id: usize,
    time: usize,
    x: usize,
    y: Option<usize>,
    lane_id: usize,
    speed: usize,
    acceleration: Option<usize>,
    length: usize,
    width: usize,
}

impl Columns {
    fn locate(header: &csv::StringRecord, map: &ColumnMap) -> Result<Self, DatasetError> {
        let find = |name: &str| header.iter().position(|h| h.trim() == name);
        let need = |name: &str| find(name).ok_or_else(|| DatasetError::MissingColumn(name.to_string()));
        Ok(Self {
            vehicle_id: need(&map.vehicle_id)?,
            time: need(&map.time)?,
            x: need(&map.x)?,
            y: find(&map.y),
            lane_id: need(&map.lane_id)?,
            speed: need(&map.speed)?,
            acceleration: find(&map.acceleration),
            length: need(&map.length)?,
            width: need(&map.width)?,
        })
    }
}

fn parse_integer(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    raw.parse::<i64>().ok().or_else(|| {
        let f = raw.parse::<f64>().ok()?;
        (f.is_finite() && f.fract() == 0.0 && f.abs() < 9.0e15).then_some(f as i64)
    })
}

/// Parses a trajectory CSV with a header row.
///
/// Text that is not a number is an error; values that parse but are non-finite
/// or physically invalid (negative speed, non-positive size) reject only that
/// row.
pub fn parse_csv<R: Read>(reader: R, map: &ColumnMap) -> Result<ParsedRecords, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(DatasetError::EmptyFile);
    }
    let cols = Columns::locate(&header, map)?;

    let mut out = ParsedRecords::default();
    for row in rdr.records() {
        let row = row.map_err(|e| DatasetError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let malformed = |column: &str, raw: &str| DatasetError::MalformedRow {
            line,
            message: format!("column `{column}`: cannot parse `{raw}`"),
        };
        let field = |idx: usize| row.get(idx).unwrap_or("");
        let number = |idx: usize, column: &str| -> Result<f64, DatasetError> {
            field(idx).parse::<f64>().map_err(|_| malformed(column, field(idx)))
        };

        let id = parse_integer(field(cols.vehicle_id))
            .filter(|&id| id >= 0)
            .ok_or_else(|| malformed(&map.vehicle_id, field(cols.vehicle_id)))?;
        let lane_id = parse_integer(field(cols.lane_id)).ok_or_else(|| malformed(&map.lane_id, field(cols.lane_id)))?;
        let a = match cols.acceleration {
            Some(idx) if !field(idx).is_empty() => Some(number(idx, &map.acceleration)?),
            _ => None,
        };
        let record = TrajectoryRecord {
            vehicle_id: VehicleId(id as u64),
            t: number(cols.time, &map.time)?,
            x: number(cols.x, &map.x)?,
            y: cols.y.map(|idx| number(idx, &map.y)).transpose()?.unwrap_or(0.0),
            lane_id,
            v: number(cols.speed, &map.speed)?,
            a,
            length: number(cols.length, &map.length)?,
            width: number(cols.width, &map.width)?,
        };

        let values = [record.t, record.x, record.y, record.v, record.a.unwrap_or(0.0), record.length, record.width];
        let reason = if values.iter().any(|v| !v.is_finite()) {
            Some("non-finite value".to_string())
        } else if record.v < 0.0 {
            Some(format!("negative speed {}", record.v))
        } else if record.length <= 0.0 || record.width <= 0.0 {
            Some(format!("non-positive size {} x {}", record.length, record.width))
        } else {
            None
        };
        match reason {
            Some(reason) => out.rejected.push(RejectedRow { line, reason }),
            None => out.records.push(record),
        }
    }
    if out.records.is_empty() && out.rejected.is_empty() {
        return Err(DatasetError::EmptyFile);
    }
    Ok(out)
}

/// Writes records with the headers of `map`; the inverse of [`parse_csv`].
pub fn write_csv(records: &[TrajectoryRecord], map: &ColumnMap) -> Result<Vec<u8>, DatasetError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        &map.vehicle_id, &map.time, &map.x, &map.y, &map.lane_id, &map.speed, &map.acceleration, &map.length,
        &map.width,
    ])?;
    for r in records {
        w.write_record([
            r.vehicle_id.0.to_string(),
            r.t.to_string(),
            r.x.to_string(),
            r.y.to_string(),
            r.lane_id.to_string(),
            r.v.to_string(),
            r.a.map(|a| a.to_string()).unwrap_or_default(),
            r.length.to_string(),
            r.width.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| DatasetError::Csv(e.to_string()))
}

/// Time derivative of `values` sampled at uniform `times`.
///
/// Central differences inside, three-point one-sided differences at both
/// ends, so quadratics are differentiated exactly.
pub fn finite_difference(times: &[f64], values: &[f64]) -> Result<Vec<f64>, DatasetError> {
    let n = values.len();
    if n < 3 || times.len() != n {
        return Err(DatasetError::TooShort(n.min(times.len())));
    }
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    let mut out = Vec::with_capacity(n);
    out.push((-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dt));
    out.extend(values.windows(3).map(|w| (w[2] - w[0]) / (2.0 * dt)));
    out.push((3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * dt));
    Ok(out)
}

/// Fills every acceleration of `series` from its speeds.
pub fn fill_acceleration(series: &mut [TrajectoryRecord]) -> Result<(), DatasetError> {
    let times: Vec<f64> = series.iter().map(|r| r.t).collect();
    let speeds: Vec<f64> = series.iter().map(|r| r.v).collect();
    let accel = finite_difference(&times, &speeds)?;
    for (r, a) in series.iter_mut().zip(accel) {
        r.a = Some(a);
    }
    Ok(())
}

/// Aligned leader/follower series within one lane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPair {
    pub lane_id: i64,
    pub leader_id: VehicleId,
    pub follower_id: VehicleId,
    pub leader: Vec<TrajectoryRecord>,
    pub follower: Vec<TrajectoryRecord>,
}

impl TrajectoryPair {
    pub fn len(&self) -> usize {
        self.follower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.follower.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.follower.first(), self.follower.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Checks the pair invariants; returns a description of the first violation.
    pub fn check(&self) -> Result<(), String> {
        if self.leader.len() != self.follower.len() {
            return Err("series lengths differ".into());
        }
        if self.len() < 2 {
            return Err("fewer than 2 samples".into());
        }
        for (k, (l, f)) in self.leader.iter().zip(&self.follower).enumerate() {
            if l.t != f.t {
                return Err(format!("sample {k}: timestamps differ"));
            }
            if !(l.x > f.x) {
                return Err(format!("sample {k}: leader not ahead"));
            }
            if l.lane_id != self.lane_id || f.lane_id != self.lane_id {
                return Err(format!("sample {k}: lane changed"));
            }
            if l.vehicle_id != self.leader_id || f.vehicle_id != self.follower_id {
                return Err(format!("sample {k}: identity changed"));
            }
        }
        if self.follower.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err("timestamps not increasing".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    /// Pairs shorter than this are dropped, s.
    pub min_duration: f64,
    /// Samples within this time of a lane change are discarded, s.
    pub lane_change_margin: f64,
    /// Allowed relative deviation of a sample spacing from the modal spacing.
    pub jitter_tolerance: f64,
    /// Sample spacing to use instead of the detected modal spacing, s.
    #[serde(default)]
    pub dt: Option<f64>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self { min_duration: 5.0, lane_change_margin: 0.5, jitter_tolerance: 0.1, dt: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extraction {
    pub pairs: Vec<TrajectoryPair>,
    /// Modal sample spacing, s.
    pub modal_dt: Option<f64>,
    pub dropped_short: usize,
    pub dropped_jitter: usize,
}

const TICKS_PER_SECOND: f64 = 1000.0;

fn tick(t: f64) -> i64 {
    (t * TICKS_PER_SECOND).round() as i64
}

/// Extracts car-following pairs from raw records.
///
/// The result does not depend on the order of `records`.
pub fn extract_pairs(records: &[TrajectoryRecord], cfg: &ExtractConfig) -> Extraction {
    // one record per (vehicle, tick), deterministic choice among duplicates
    let mut by_vehicle: BTreeMap<VehicleId, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_vehicle.entry(r.vehicle_id).or_default().push(i);
    }
    let order = |i: &usize, j: &usize| {
        let (a, b) = (&records[*i], &records[*j]);
        tick(a.t)
            .cmp(&tick(b.t))
            .then(a.lane_id.cmp(&b.lane_id))
            .then(a.x.total_cmp(&b.x))
            .then(a.t.total_cmp(&b.t))
    };
    for idx in by_vehicle.values_mut() {
        idx.sort_by(order);
        idx.dedup_by_key(|i| tick(records[*i].t));
    }

    let mut spacing: BTreeMap<i64, usize> = BTreeMap::new();
    for idx in by_vehicle.values() {
        for w in idx.windows(2) {
            *spacing.entry(tick(records[w[1]].t) - tick(records[w[0]].t)).or_default() += 1;
        }
    }
    let detected = spacing.iter().rev().max_by_key(|(_, &count)| count).map(|(&dt, _)| dt);
    let Some(modal) = cfg.dt.map(tick).filter(|&dt| dt > 0).or(detected) else {
        return Extraction::default();
    };
    let modal_dt = modal as f64 / TICKS_PER_SECOND;

    let margin = tick(cfg.lane_change_margin);
    let mut lane_changes: HashMap<VehicleId, Vec<i64>> = HashMap::new();
    for (id, idx) in &by_vehicle {
        let changes: Vec<i64> = idx
            .windows(2)
            .filter(|w| records[w[0]].lane_id != records[w[1]].lane_id)
            .map(|w| tick(records[w[1]].t))
            .collect();
        if !changes.is_empty() {
            lane_changes.insert(*id, changes);
        }
    }
    let near_lane_change = |id: VehicleId, t: i64| {
        lane_changes.get(&id).is_some_and(|cs| cs.iter().any(|&c| (t - c).abs() <= margin))
    };

    let mut by_tick: BTreeMap<i64, BTreeMap<i64, Vec<usize>>> = BTreeMap::new();
    for &i in by_vehicle.values().flatten() {
        let r = &records[i];
        by_tick.entry(tick(r.t)).or_default().entry(r.lane_id).or_default().push(i);
    }

    type Link = (i64, i64, usize, usize);
    let mut links: BTreeMap<(VehicleId, VehicleId), Vec<Link>> = BTreeMap::new();
    for (&t, lanes) in &by_tick {
        for (&lane, idx) in lanes {
            let mut idx = idx.clone();
            idx.sort_by(|&i, &j| records[i].x.total_cmp(&records[j].x).then(records[i].vehicle_id.cmp(&records[j].vehicle_id)));
            for w in idx.windows(2) {
                let (f, l) = (&records[w[0]], &records[w[1]]);
                if l.x > f.x && !near_lane_change(l.vehicle_id, t) && !near_lane_change(f.vehicle_id, t) {
                    links.entry((l.vehicle_id, f.vehicle_id)).or_default().push((t, lane, w[1], w[0]));
                }
            }
        }
    }

    let mut out = Extraction { modal_dt: Some(modal_dt), ..Extraction::default() };
    let max_step = modal + modal / 2;
    for ((leader_id, follower_id), entries) in links {
        let mut start = 0;
        for end in 1..=entries.len() {
            let cut = end == entries.len()
                || entries[end].1 != entries[end - 1].1
                || entries[end].0 - entries[end - 1].0 > max_step;
            if !cut {
                continue;
            }
            let run = &entries[start..end];
            start = end;
            if run.len() < 2 {
                out.dropped_short += 1;
                continue;
            }
            let leader: Vec<TrajectoryRecord> = run.iter().map(|e| records[e.2]).collect();
            let follower: Vec<TrajectoryRecord> = run.iter().map(|e| records[e.3]).collect();
            let pair = TrajectoryPair { lane_id: run[0].1, leader_id, follower_id, leader, follower };
            match finish_pair(pair, modal_dt, cfg) {
                Ok(pair) => out.pairs.push(pair),
                Err(Drop::Jitter) => out.dropped_jitter += 1,
                Err(Drop::Short) => out.dropped_short += 1,
            }
        }
    }
    out.pairs.sort_by(|a, b| {
        (a.lane_id, a.leader_id, a.follower_id)
            .cmp(&(b.lane_id, b.leader_id, b.follower_id))
            .then(a.follower[0].t.total_cmp(&b.follower[0].t))
    });
    out
}

enum Drop {
    Jitter,
    Short,
}

fn finish_pair(mut pair: TrajectoryPair, dt: f64, cfg: &ExtractConfig) -> Result<TrajectoryPair, Drop> {
    let times: Vec<f64> = pair.follower.iter().map(|r| r.t).collect();
    let steps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    if steps.iter().any(|s| (s - dt).abs() > cfg.jitter_tolerance * dt) {
        return Err(Drop::Jitter);
    }
    if steps.iter().any(|s| (s - dt).abs() > 1e-6) {
        pair.leader = resample(&pair.leader, dt);
        pair.follower = resample(&pair.follower, dt);
    }
    if pair.duration() + 1e-9 < cfg.min_duration || pair.len() < 2 {
        return Err(Drop::Short);
    }
    for series in [&mut pair.leader, &mut pair.follower] {
        if series.iter().any(|r| r.a.is_none()) {
            fill_acceleration(series).map_err(|_| Drop::Short)?;
        }
    }
    Ok(pair)
}

/// Linear interpolation of `series` onto `t0 + k dt`.
fn resample(series: &[TrajectoryRecord], dt: f64) -> Vec<TrajectoryRecord> {
    let t0 = series[0].t;
    let span = series[series.len() - 1].t - t0;
    let n = (span / dt + 1e-6).floor() as usize + 1;
    let mut j = 0;
    (0..n)
        .map(|k| {
            let t = t0 + k as f64 * dt;
            while j + 2 < series.len() && series[j + 1].t < t {
                j += 1;
            }
            let (p, q) = (&series[j], &series[(j + 1).min(series.len() - 1)]);
            let w = if q.t > p.t { ((t - p.t) / (q.t - p.t)).clamp(0.0, 1.0) } else { 0.0 };
            let lerp = |a: f64, b: f64| a + (b - a) * w;
            TrajectoryRecord {
                t,
                x: lerp(p.x, q.x),
                y: lerp(p.y, q.y),
                v: lerp(p.v, q.v),
                a: p.a.zip(q.a).map(|(a, b)| lerp(a, b)),
                ..*p
            }
        })
        .collect()
}

/// Column order of the normalized pair export.
pub const PAIR_COLUMNS: [&str; 11] = ["t", "x_L", "v_L", "a_L", "L_L", "W_L", "x_F", "v_F", "a_F", "L_F", "W_F"];

/// `pair_<lane>_<leader>_<follower>_<start ms>.csv`
pub fn pair_file_name(pair: &TrajectoryPair) -> String {
    let start = pair.follower.first().map_or(0, |r| tick(r.t));
    format!("pair_{}_{}_{}_{}.csv", pair.lane_id, pair.leader_id, pair.follower_id, start)
}

/// Recovers (lane, leader, follower) from a [`pair_file_name`].
pub fn parse_pair_file_name(name: &str) -> Option<(i64, VehicleId, VehicleId)> {
    let stem = name.strip_prefix("pair_")?.strip_suffix(".csv")?;
    let mut parts = stem.split('_');
    let lane = parts.next()?.parse().ok()?;
    let leader = parts.next()?.parse().ok()?;
    let follower = parts.next()?.parse().ok()?;
    Some((lane, VehicleId(leader), VehicleId(follower)))
}

pub fn write_pair_csv(pair: &TrajectoryPair) -> Result<Vec<u8>, DatasetError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(PAIR_COLUMNS)?;
    for (l, f) in pair.leader.iter().zip(&pair.follower) {
        let row = [
            l.t,
            l.x,
            l.v,
            l.a.unwrap_or(0.0),
            l.length,
            l.width,
            f.x,
            f.v,
            f.a.unwrap_or(0.0),
            f.length,
            f.width,
        ];
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.into_inner().map_err(|e| DatasetError::Csv(e.to_string()))
}

pub fn read_pair_csv<R: Read>(
    reader: R,
    lane_id: i64,
    leader_id: VehicleId,
    follower_id: VehicleId,
) -> Result<TrajectoryPair, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(DatasetError::EmptyFile);
    }
    for (i, name) in PAIR_COLUMNS.iter().enumerate() {
        if header.get(i) != Some(*name) {
            return Err(DatasetError::MissingColumn(name.to_string()));
        }
    }
    let mut pair = TrajectoryPair { lane_id, leader_id, follower_id, leader: Vec::new(), follower: Vec::new() };
    for row in rdr.records() {
        let row = row.map_err(|e| DatasetError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let mut v = [0.0; 11];
        for (slot, raw) in v.iter_mut().zip(row.iter()) {
            *slot = raw.parse().map_err(|_| DatasetError::MalformedRow {
                line,
                message: format!("cannot parse `{raw}`"),
            })?;
        }
        let rec = |id, x, speed, a, length, width| TrajectoryRecord {
            vehicle_id: id,
            t: v[0],
            x,
            y: 0.0,
            lane_id,
            v: speed,
            a: Some(a),
            length,
            width,
        };
        pair.leader.push(rec(leader_id, v[1], v[2], v[3], v[4], v[5]));
        pair.follower.push(rec(follower_id, v[6], v[7], v[8], v[9], v[10]));
    }
    if pair.is_empty() {
        return Err(DatasetError::EmptyFile);
    }
    Ok(pair)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    fn rec(id: u64, t: f64, x: f64, lane: i64, v: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            vehicle_id: VehicleId(id),
            t,
            x,
            y: 0.0,
            lane_id: lane,
            v,
            a: Some(0.0),
            length: 4.5,
            width: 1.8,
        }
    }

    /// Vehicles driving at constant speed, sampled every 0.1 s for `secs`.
    fn platoon(specs: &[(u64, f64, i64)], secs: f64) -> Vec<TrajectoryRecord> {
        let n = (secs * 10.0).round() as usize;
        let mut out = Vec::new();
        for k in 0..=n {
            let t = k as f64 / 10.0;
            for &(id, x0, lane) in specs {
                out.push(rec(id, t, x0 + 15.0 * t, lane, 15.0));
            }
        }
        out
    }

    const VALID: &str = "vehicle_id,time,x,y,lane_id,speed,acceleration,length,width\n\
                         1,0.0,10.0,0.0,2,15.0,0.1,4.5,1.8\n\
                         1,0.1,11.5,0.0,2,15.01,0.1,4.5,1.8\n\
                         2,0.0,40.0,0.0,2,14.0,-0.2,5.0,1.9\n";

    #[test]
    fn parses_valid_file() {
        let parsed = parse_csv(VALID.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(parsed.records.len(), 3);
        assert!(parsed.rejected.is_empty());
        assert_eq!(parsed.records[2].vehicle_id, VehicleId(2));
        assert_eq!(parsed.records[2].a, Some(-0.2));
    }

    #[test]
    fn missing_width_column() {
        let text = "vehicle_id,time,x,lane_id,speed,length\n1,0,0,1,1,4\n";
        assert_eq!(parse_csv(text.as_bytes(), &ColumnMap::default()), Err(DatasetError::MissingColumn("width".into())));
    }

    #[test]
    fn column_overrides() {
        let text = "ID,Frame,LocalX,Lane,Speed,Len,Wid\n7,1.0,3.0,1,2.0,4.0,2.0\n";
        let map = ColumnMap::default()
            .with_overrides("vehicle_id=ID,time=Frame,x=LocalX,lane_id=Lane,speed=Speed,length=Len,width=Wid")
            .unwrap();
        let parsed = parse_csv(text.as_bytes(), &map).unwrap();
        assert_eq!(parsed.records[0].a, None);
        assert_eq!(parsed.records[0].y, 0.0);
        assert!(ColumnMap::default().with_overrides("colour=red").is_err());
    }

    #[test]
    fn nan_row_is_rejected_with_line_number() {
        let text = format!("{VALID}3,0.0,80.0,0.0,2,NaN,0.0,4.5,1.8\n4,0.0,90.0,0.0,2,12.0,0.0,4.5,1.8\n");
        let parsed = parse_csv(text.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(parsed.records.len(), 4);
        assert_eq!(parsed.rejected.len(), 1);
        assert_eq!(parsed.rejected[0].line, 5);
    }

    #[test]
    fn malformed_and_empty() {
        let text = format!("{VALID}3,0.0,eighty,0.0,2,1.0,0.0,4.5,1.8\n");
        assert!(matches!(
            parse_csv(text.as_bytes(), &ColumnMap::default()),
            Err(DatasetError::MalformedRow { line: 5, .. })
        ));
        assert_eq!(parse_csv("".as_bytes(), &ColumnMap::default()), Err(DatasetError::EmptyFile));
        let header_only = "vehicle_id,time,x,y,lane_id,speed,acceleration,length,width\n";
        assert_eq!(parse_csv(header_only.as_bytes(), &ColumnMap::default()), Err(DatasetError::EmptyFile));
    }

    #[test]
    fn finite_difference_examples() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let flat = vec![12.0; 50];
        assert!(finite_difference(&t, &flat).unwrap().iter().all(|&a| a == 0.0));
        let ramp: Vec<f64> = t.iter().map(|t| 3.0 + t).collect();
        for a in finite_difference(&t, &ramp).unwrap() {
            assert_relative_eq!(a, 1.0, epsilon = 1e-9);
        }
        let quad: Vec<f64> = t.iter().map(|t| 0.3 * t * t - t + 2.0).collect();
        for (a, t) in finite_difference(&t, &quad).unwrap().iter().zip(&t) {
            assert_relative_eq!(*a, 0.6 * t - 1.0, epsilon = 1e-9);
        }
        assert_eq!(finite_difference(&t[..2], &flat[..2]), Err(DatasetError::TooShort(2)));
    }

    #[test]
    fn two_vehicles_one_pair() {
        let ex = extract_pairs(&platoon(&[(1, 0.0, 1), (2, 30.0, 1)], 10.0), &ExtractConfig::default());
        assert_eq!(ex.pairs.len(), 1);
        let p = &ex.pairs[0];
        assert_eq!((p.leader_id, p.follower_id), (VehicleId(2), VehicleId(1)));
        assert_relative_eq!(p.duration(), 10.0, epsilon = 1e-9);
        assert_eq!(p.len(), 101);
        assert_relative_eq!(ex.modal_dt.unwrap(), 0.1);
    }

    #[test]
    fn different_lanes_no_pair() {
        let ex = extract_pairs(&platoon(&[(1, 0.0, 1), (2, 30.0, 2)], 10.0), &ExtractConfig::default());
        assert!(ex.pairs.is_empty());
    }

    #[test]
    fn three_vehicle_platoon_two_pairs() {
        // A at 0, B at 25, C at 55 in the same lane: A follows B, B follows C
        let ex = extract_pairs(&platoon(&[(10, 0.0, 1), (11, 25.0, 1), (12, 55.0, 1)], 10.0), &ExtractConfig::default());
        let ids: Vec<(u64, u64)> = ex.pairs.iter().map(|p| (p.leader_id.0, p.follower_id.0)).collect();
        assert_eq!(ids, vec![(11, 10), (12, 11)]);
    }

    #[test]
    fn lane_change_cuts_pair_with_margin() {
        let mut records = platoon(&[(1, 0.0, 1), (2, 30.0, 1)], 20.0);
        // follower leaves for lane 2 during [8, 9) and comes back
        for r in records.iter_mut().filter(|r| r.vehicle_id == VehicleId(1) && r.t >= 8.0 - 1e-9 && r.t < 9.0 - 1e-9) {
            r.lane_id = 2;
        }
        let cfg = ExtractConfig { min_duration: 1.0, ..ExtractConfig::default() };
        let ex = extract_pairs(&records, &cfg);
        assert_eq!(ex.pairs.len(), 2);
        assert_relative_eq!(ex.pairs[0].follower.last().unwrap().t, 7.4, epsilon = 1e-9);
        assert_relative_eq!(ex.pairs[1].follower[0].t, 9.6, epsilon = 1e-9);
        for p in &ex.pairs {
            p.check().unwrap();
        }
    }

    #[test]
    fn overtake_cuts_pair() {
        let mut records = Vec::new();
        for k in 0..=200 {
            let t = k as f64 / 10.0;
            records.push(rec(1, t, 20.0 * t, 1, 20.0)); // fast, starts behind
            records.push(rec(2, t, 50.0 + 15.0 * t, 1, 15.0));
        }
        let cfg = ExtractConfig { min_duration: 1.0, ..ExtractConfig::default() };
        let ex = extract_pairs(&records, &cfg);
        let ids: Vec<(u64, u64)> = ex.pairs.iter().map(|p| (p.leader_id.0, p.follower_id.0)).collect();
        assert_eq!(ids, vec![(1, 2), (2, 1)]);
        for p in &ex.pairs {
            p.check().unwrap();
        }
    }

    #[test]
    fn short_pairs_dropped_and_jitter_resampled() {
        let ex = extract_pairs(&platoon(&[(1, 0.0, 1), (2, 30.0, 1)], 3.0), &ExtractConfig::default());
        assert!(ex.pairs.is_empty());
        assert_eq!(ex.dropped_short, 1);

        let mut records = platoon(&[(1, 0.0, 1), (2, 30.0, 1)], 10.0);
        for r in records.iter_mut().filter(|r| (r.t * 10.0).round() as i64 == 42) {
            r.t += 0.005;
        }
        let ex = extract_pairs(&records, &ExtractConfig::default());
        assert_eq!(ex.pairs.len(), 1);
        assert_eq!(ex.pairs[0].len(), 101);
        assert_relative_eq!(ex.pairs[0].follower[42].t, 4.2, epsilon = 1e-9);

        for r in records.iter_mut().filter(|r| (r.t * 10.0).round() as i64 == 42) {
            r.t += 0.03;
        }
        let ex = extract_pairs(&records, &ExtractConfig::default());
        assert!(ex.pairs.is_empty());
        assert_eq!(ex.dropped_jitter, 1);
    }

    #[test]
    fn missing_acceleration_is_differenced() {
        let mut records = Vec::new();
        for k in 0..=100 {
            let t = k as f64 / 10.0;
            let mut l = rec(2, t, 40.0 + 10.0 * t + 0.25 * t * t, 1, 10.0 + 0.5 * t);
            let mut f = rec(1, t, 10.0 * t, 1, 10.0);
            l.a = None;
            f.a = None;
            records.extend([l, f]);
        }
        let ex = extract_pairs(&records, &ExtractConfig::default());
        let p = &ex.pairs[0];
        for r in &p.leader {
            assert_relative_eq!(r.a.unwrap(), 0.5, epsilon = 1e-9);
        }
        for r in &p.follower {
            assert!(r.a.unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn pair_csv_round_trip() {
        let ex = extract_pairs(&platoon(&[(1, 0.0, 3), (2, 30.0, 3)], 6.0), &ExtractConfig::default());
        let pair = &ex.pairs[0];
        let name = pair_file_name(pair);
        assert_eq!(name, "pair_3_2_1_0.csv");
        let (lane, l, f) = parse_pair_file_name(&name).unwrap();
        let bytes = write_pair_csv(pair).unwrap();
        assert!(String::from_utf8_lossy(&bytes).starts_with("t,x_L,v_L,a_L,L_L,W_L,x_F,v_F,a_F,L_F,W_F\n"));
        let back = read_pair_csv(bytes.as_slice(), lane, l, f).unwrap();
        assert_eq!(&back, pair);
    }

    fn arb_record() -> impl Strategy<Value = TrajectoryRecord> {
        (
            0u64..1000,
            -1e3..1e4f64,
            -1e3..1e3f64,
            -10.0..10.0f64,
            -3i64..8,
            0.0..60.0f64,
            proptest::option::of(-10.0..10.0f64),
            0.5..20.0f64,
            0.5..4.0f64,
        )
            .prop_map(|(id, t, x, y, lane_id, v, a, length, width)| TrajectoryRecord {
                vehicle_id: VehicleId(id),
                t,
                x,
                y,
                lane_id,
                v,
                a,
                length,
                width,
            })
    }

    proptest! {
        #[test]
        fn csv_round_trip(records in proptest::collection::vec(arb_record(), 1..40)) {
            let map = ColumnMap::default();
            let bytes = write_csv(&records, &map).unwrap();
            let parsed = parse_csv(bytes.as_slice(), &map).unwrap();
            prop_assert_eq!(parsed.records, records);
        }

        #[test]
        fn extraction_ignores_row_order(seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut records = platoon(&[(1, 0.0, 1), (2, 30.0, 1), (3, 70.0, 1), (4, 10.0, 2)], 8.0);
            let base = extract_pairs(&records, &ExtractConfig::default());
            records.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(extract_pairs(&records, &ExtractConfig::default()), base);
        }
    }
}
