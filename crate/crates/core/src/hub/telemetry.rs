use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::HubError;
use crate::rfnet::TelemetryPayload;
use crate::vehicle::VehicleState;

pub const CSV_HEADER: &str =
    "tick,vehicle_id,x_m,y_m,heading_deg,speed_m_s,dist_from_origin_m,angle_from_origin_deg,state";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetryRecord {
    pub tick: u64,
    pub vehicle_id: u32,
    pub x_m: f64,
    pub y_m: f64,
    pub heading_deg: f64,
    pub speed_m_s: f64,
    pub dist_from_origin_m: f64,
    pub angle_from_origin_deg: f64,
    pub state: VehicleState,
}

/// Range and bearing of `(x, y)` from the terrain origin. The bearing of the
/// origin itself is 0.
pub fn polar_from_origin(x: f64, y: f64) -> (f64, f64) {
    let dist = x.hypot(y);
    if dist == 0.0 {
        return (0.0, 0.0);
    }
    let angle = y.atan2(x).to_degrees().rem_euclid(360.0);
    (dist, if angle >= 360.0 { 0.0 } else { angle })
}

impl TelemetryRecord {
    pub fn from_payload(tick: u64, vehicle_id: u32, data: &TelemetryPayload) -> Self {
        let x_m = data.x_mm as f64 / 1000.0;
        let y_m = data.y_mm as f64 / 1000.0;
        let (dist, angle) = polar_from_origin(x_m, y_m);
        Self {
            tick,
            vehicle_id,
            x_m,
            y_m,
            heading_deg: data.heading_cdeg as f64 / 100.0,
            speed_m_s: data.speed_mm_s as f64 / 1000.0,
            dist_from_origin_m: dist,
            angle_from_origin_deg: angle,
            state: VehicleState::from_code(data.state).unwrap_or(VehicleState::Idle),
        }
    }

    fn csv_row(&self) -> String {
        format!(
            "{},{},{:.5},{:.5},{:.5},{:.5},{:.5},{:.5},{}",
            self.tick,
            self.vehicle_id,
            self.x_m,
            self.y_m,
            self.heading_deg,
            self.speed_m_s,
            self.dist_from_origin_m,
            self.angle_from_origin_deg,
            self.state.label()
        )
    }
}

fn sorted(log: &[TelemetryRecord]) -> Vec<&TelemetryRecord> {
    let mut rows: Vec<&TelemetryRecord> = log.iter().collect();
    rows.sort_by_key(|r| (r.tick, r.vehicle_id));
    rows
}

/// Header plus one row per record, ordered by `(tick, vehicle_id)`.
pub fn write_csv_to<W: Write>(log: &[TelemetryRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in sorted(log) {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()
}

pub fn write_csv(log: &[TelemetryRecord], out_path: &Path) -> Result<(), HubError> {
    write_csv_to(log, BufWriter::new(File::create(out_path)?))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleMetrics {
    pub vehicle_id: u32,
    pub total_distance_m: f64,
    /// Distance over the time spent between records that show displacement.
    pub mean_speed_m_s: f64,
    /// Ticks of the first IDLE record after each RETRACING run.
    pub completion_ticks: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub vehicles: Vec<VehicleMetrics>,
    pub makespan_ticks: u64,
}

impl SummaryReport {
    pub fn render_text(&self) -> String {
        let mut out = format!("makespan_ticks {}\n", self.makespan_ticks);
        for v in &self.vehicles {
            out.push_str(&format!(
                "vehicle {} distance_m {:.5} mean_speed_m_s {:.5} completions {:?}\n",
                v.vehicle_id, v.total_distance_m, v.mean_speed_m_s, v.completion_ticks
            ));
        }
        out
    }
}

/// Per-vehicle distance, speed and completions recovered from the log
/// alone; `dt_s` is the tick length.
pub fn metrics(log: &[TelemetryRecord], dt_s: f64) -> Result<SummaryReport, HubError> {
    if log.is_empty() {
        return Err(HubError::EmptyLog);
    }
    let mut per: BTreeMap<u32, Vec<&TelemetryRecord>> = BTreeMap::new();
    for r in sorted(log) {
        per.entry(r.vehicle_id).or_default().push(r);
    }
    let mut vehicles = Vec::with_capacity(per.len());
    let mut makespan = 0;
    for (vehicle_id, recs) in per {
        let mut distance = 0.0;
        let mut moving_ticks = 0u64;
        let mut completion_ticks = Vec::new();
        for w in recs.windows(2) {
            let d = (w[1].x_m - w[0].x_m).hypot(w[1].y_m - w[0].y_m);
            if d > 0.0 {
                distance += d;
                moving_ticks += w[1].tick - w[0].tick;
            }
            if w[0].state == VehicleState::Retracing && w[1].state == VehicleState::Idle {
                completion_ticks.push(w[1].tick);
            }
        }
        makespan = completion_ticks.iter().copied().fold(makespan, u64::max);
        let secs = moving_ticks as f64 * dt_s;
        let mean_speed_m_s = if secs > 0.0 { distance / secs } else { 0.0 };
        vehicles.push(VehicleMetrics { vehicle_id, total_distance_m: distance, mean_speed_m_s, completion_ticks });
    }
    Ok(SummaryReport { vehicles, makespan_ticks: makespan })
}
