//! Servo-swept ultrasonic ranger.
//!
//! The sensor sits at a fixed origin and reports, per bearing, the distance of
//! the closest disc inside its beam cone. Bearings are in degrees, east = 0,
//! counter-clockwise positive.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Position;

/// Range runs split where adjacent samples jump by this much or more.
pub const RUN_BREAK_M: f64 = 0.1;

const SVG_PX_PER_M: f64 = 200.0;
const SVG_MARGIN_PX: f64 = 20.0;

#[derive(Debug, Error)]
pub enum RadarError {
    #[error("invalid sweep configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("angle {0} is outside [0, 360)")]
    AngleOutOfRange(f64),
    #[error("speed of sound must be positive, got {0}")]
    NonPositiveSpeed(f64),
    #[error("negative distance {0}")]
    NegativeDistance(f64),
    #[error("malformed frame line {0:?}")]
    BadFrame(String),
    #[error("writing radar frame: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub origin: Position,
    pub step_deg: f64,
    pub beam_halfwidth_deg: f64,
    pub max_range_m: f64,
    pub speed_of_sound_m_s: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            origin: Position::new(1.0, 1.0),
            step_deg: 1.0,
            beam_halfwidth_deg: 5.0,
            max_range_m: 4.0,
            speed_of_sound_m_s: 343.0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), RadarError> {
        if !(self.step_deg > 0.0 && self.step_deg <= 15.0) {
            return Err(RadarError::InvalidConfig("step_deg must be in (0, 15]"));
        }
        if !(0.0..=15.0).contains(&self.beam_halfwidth_deg) {
            return Err(RadarError::InvalidConfig("beam_halfwidth_deg must be in [0, 15]"));
        }
        if !(self.max_range_m > 0.0) {
            return Err(RadarError::InvalidConfig("max_range_m must be positive"));
        }
        if !(self.speed_of_sound_m_s > 0.0) {
            return Err(RadarError::InvalidConfig("speed_of_sound_m_s must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disc {
    pub center: Position,
    pub radius_m: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub obstacles: Vec<Disc>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub angle_deg: f64,
    pub distance_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub samples: Vec<Sample>,
    /// +1 for counter-clockwise sweeps, -1 otherwise.
    pub direction: i8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetEstimate {
    pub centroid: Position,
    pub angle_deg: f64,
    pub distance_m: f64,
    pub sample_count: usize,
}

fn normalize_deg(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Signed smallest difference `a - b` in degrees, in (-180, 180].
fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Distance along a ray from `origin` at `angle_deg` to the first point of
/// `disc`. Zero when the origin is inside the disc.
fn ray_disc(origin: Position, angle_deg: f64, disc: &Disc) -> Option<f64> {
    let (uy, ux) = angle_deg.to_radians().sin_cos();
    let (cx, cy) = (disc.center.x - origin.x, disc.center.y - origin.y);
    let c = cx * cx + cy * cy - disc.radius_m * disc.radius_m;
    if c <= 0.0 {
        return Some(0.0);
    }
    let b = ux * cx + uy * cy;
    let disc2 = b * b - c;
    if b <= 0.0 || disc2 < 0.0 {
        return None;
    }
    Some(b - disc2.sqrt())
}

/// Nearest disc point inside the angular window `angle ± halfwidth`.
///
/// The unconstrained nearest point of a disc lies along its centre bearing;
/// when that bearing falls outside the window the constrained minimum sits on
/// one of the two cone edges.
fn disc_in_cone(origin: Position, angle_deg: f64, halfwidth_deg: f64, disc: &Disc) -> Option<f64> {
    let (cx, cy) = (disc.center.x - origin.x, disc.center.y - origin.y);
    let centre_range = cx.hypot(cy);
    if centre_range <= disc.radius_m {
        return Some(0.0);
    }
    let bearing = cy.atan2(cx).to_degrees();
    if angle_diff(bearing, angle_deg).abs() <= halfwidth_deg {
        return Some(centre_range - disc.radius_m);
    }
    if halfwidth_deg == 0.0 {
        return ray_disc(origin, angle_deg, disc);
    }
    [angle_deg - halfwidth_deg, angle_deg + halfwidth_deg]
        .iter()
        .filter_map(|&a| ray_disc(origin, a, disc))
        .min_by(f64::total_cmp)
}

pub fn echo_distance(world: &WorldModel, cfg: &SweepConfig, angle_deg: f64) -> Option<f64> {
    world
        .obstacles
        .iter()
        .filter_map(|d| disc_in_cone(cfg.origin, angle_deg, cfg.beam_halfwidth_deg, d))
        .min_by(f64::total_cmp)
        .filter(|d| *d <= cfg.max_range_m)
}

/// Round-trip echo time in seconds.
pub fn time_of_flight(distance_m: f64, speed_of_sound_m_s: f64) -> Result<f64, RadarError> {
    if !(speed_of_sound_m_s > 0.0) {
        return Err(RadarError::NonPositiveSpeed(speed_of_sound_m_s));
    }
    if distance_m < 0.0 {
        return Err(RadarError::NegativeDistance(distance_m));
    }
    Ok(2.0 * distance_m / speed_of_sound_m_s)
}

/// Inverse of [`time_of_flight`].
pub fn distance_from_echo(time_s: f64, speed_of_sound_m_s: f64) -> f64 {
    speed_of_sound_m_s * time_s / 2.0
}

pub fn polar_to_cartesian(origin: Position, angle_deg: f64, distance_m: f64) -> Position {
    let (s, c) = angle_deg.to_radians().sin_cos();
    Position::new(origin.x + distance_m * c, origin.y + distance_m * s)
}

/// Bearings visited by a sweep from `start_deg` to `end_deg` inclusive.
pub fn sweep_angles(start_deg: f64, end_deg: f64, step_deg: f64) -> Vec<f64> {
    let span = (end_deg - start_deg).abs();
    let sign = if end_deg >= start_deg { 1.0 } else { -1.0 };
    let count = (span / step_deg + 1e-9).floor() as usize + 1;
    (0..count).map(|k| start_deg + sign * k as f64 * step_deg).collect()
}

pub fn sweep(world: &WorldModel, cfg: &SweepConfig, start_deg: f64, end_deg: f64) -> Scan {
    let samples = sweep_angles(start_deg, end_deg, cfg.step_deg)
        .into_iter()
        .map(|a| Sample { angle_deg: a, distance_m: echo_distance(world, cfg, a) })
        .collect();
    Scan { samples, direction: if end_deg >= start_deg { 1 } else { -1 } }
}

fn covers_full_circle(scan: &Scan, step_deg: f64) -> bool {
    match (scan.samples.first(), scan.samples.last()) {
        (Some(a), Some(b)) => (b.angle_deg - a.angle_deg).abs() + step_deg >= 360.0 - 1e-9,
        _ => false,
    }
}

/// Groups contiguous echoes into targets and reports each one's centroid.
pub fn detect_targets(scan: &Scan, cfg: &SweepConfig) -> Vec<TargetEstimate> {
    let mut runs: Vec<Vec<Sample>> = Vec::new();
    let mut current: Vec<Sample> = Vec::new();
    for s in &scan.samples {
        match s.distance_m {
            Some(d) => {
                let continues = current
                    .last()
                    .and_then(|p| p.distance_m)
                    .is_some_and(|prev| (prev - d).abs() < RUN_BREAK_M);
                if !continues && !current.is_empty() {
                    runs.push(std::mem::take(&mut current));
                }
                current.push(*s);
            }
            None => {
                if !current.is_empty() {
                    runs.push(std::mem::take(&mut current));
                }
            }
        }
    }
    if !current.is_empty() {
        runs.push(current);
    }

    // A full-circle sweep wraps: a target straddling the seam is one run.
    if runs.len() > 1 && covers_full_circle(scan, cfg.step_deg) {
        let first = scan.samples.first().and_then(|s| s.distance_m);
        let last = scan.samples.last().and_then(|s| s.distance_m);
        if let (Some(a), Some(b)) = (first, last) {
            if (a - b).abs() < RUN_BREAK_M {
                let tail = runs.pop().unwrap_or_default();
                runs[0].splice(0..0, tail);
            }
        }
    }

    let mut targets: Vec<TargetEstimate> = runs
        .into_iter()
        .map(|run| {
            let n = run.len() as f64;
            let (sx, sy) = run.iter().fold((0.0, 0.0), |(sx, sy), s| {
                let p = polar_to_cartesian(cfg.origin, s.angle_deg, s.distance_m.unwrap_or(0.0));
                (sx + p.x, sy + p.y)
            });
            let centroid = Position::new(sx / n, sy / n);
            let (dx, dy) = (centroid.x - cfg.origin.x, centroid.y - cfg.origin.y);
            TargetEstimate {
                centroid,
                angle_deg: normalize_deg(dy.atan2(dx).to_degrees()),
                distance_m: dx.hypot(dy),
                sample_count: run.len(),
            }
        })
        .collect();
    targets.sort_by(|a, b| a.angle_deg.total_cmp(&b.angle_deg));
    targets
}

/// One serial line `<angle>,<distance_mm>.` terminated by a newline. Missing
/// echoes are sent as distance 0.
pub fn encode_frame(angle_deg: f64, distance_m: Option<f64>) -> Result<String, RadarError> {
    if !(0.0..360.0).contains(&angle_deg) {
        return Err(RadarError::AngleOutOfRange(angle_deg));
    }
    let mm = distance_m.map_or(0, |d| (d * 1000.0).round().max(0.0) as u64);
    Ok(format!("{},{}.\n", angle_deg.floor() as u32, mm))
}

/// Parses one frame line back into `(angle_deg, distance_mm)`.
pub fn parse_frame(line: &str) -> Result<(u32, u64), RadarError> {
    let bad = || RadarError::BadFrame(line.to_string());
    let body = line.trim_end_matches('\n').strip_suffix('.').ok_or_else(bad)?;
    let (a, d) = body.split_once(',').ok_or_else(bad)?;
    let angle: u32 = a.parse().map_err(|_| bad())?;
    if angle >= 360 {
        return Err(bad());
    }
    Ok((angle, d.parse().map_err(|_| bad())?))
}

/// Alternating back-and-forth sweep over the full circle, one bearing per call.
#[derive(Debug, Clone)]
pub struct Sweeper {
    angles: Vec<f64>,
    index: usize,
    direction: i8,
    current: Vec<Sample>,
}

impl Sweeper {
    pub fn new(cfg: &SweepConfig) -> Self {
        let angles = sweep_angles(0.0, 360.0 - cfg.step_deg, cfg.step_deg);
        Self { angles, index: 0, direction: 1, current: Vec::new() }
    }

    /// Samples the next bearing. Returns the sample and, when it closes a
    /// sweep, the completed scan.
    pub fn advance(&mut self, world: &WorldModel, cfg: &SweepConfig) -> (Sample, Option<Scan>) {
        let angle = self.angles[self.index];
        let sample = Sample { angle_deg: angle, distance_m: echo_distance(world, cfg, angle) };
        self.current.push(sample);
        let last = self.angles.len() - 1;
        let at_end = if self.direction > 0 { self.index == last } else { self.index == 0 };
        if at_end {
            let scan = Scan { samples: std::mem::take(&mut self.current), direction: self.direction };
            self.direction = -self.direction;
            return (sample, Some(scan));
        }
        if self.direction > 0 {
            self.index += 1;
        } else {
            self.index -= 1;
        }
        (sample, None)
    }
}

/// Axis-aligned terrain rectangle used when rendering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldBounds {
    pub width_m: f64,
    pub height_m: f64,
}

/// SVG of the terrain outline, the sweep ray at the last sample and one
/// `echo` circle per returned sample.
pub fn render_svg(scan: &Scan, cfg: &SweepConfig, bounds: WorldBounds) -> String {
    let w = bounds.width_m * SVG_PX_PER_M + 2.0 * SVG_MARGIN_PX;
    let h = bounds.height_m * SVG_PX_PER_M + 2.0 * SVG_MARGIN_PX;
    // SVG y grows downward; terrain y grows north.
    let px = |p: Position| (SVG_MARGIN_PX + p.x * SVG_PX_PER_M, h - SVG_MARGIN_PX - p.y * SVG_PX_PER_M);

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#);
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#001a00"/>"##);
    let _ = writeln!(
        out,
        r##"<rect class="terrain" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="#33ff33"/>"##,
        SVG_MARGIN_PX,
        SVG_MARGIN_PX,
        bounds.width_m * SVG_PX_PER_M,
        bounds.height_m * SVG_PX_PER_M
    );
    if let Some(last) = scan.samples.last() {
        let (x0, y0) = px(cfg.origin);
        let (x1, y1) = px(polar_to_cartesian(cfg.origin, last.angle_deg, cfg.max_range_m.min(bounds.width_m.max(bounds.height_m))));
        let _ = writeln!(out, r##"<line class="ray" x1="{x0:.3}" y1="{y0:.3}" x2="{x1:.3}" y2="{y1:.3}" stroke="#66ff66"/>"##);
    }
    for s in &scan.samples {
        if let Some(d) = s.distance_m {
            let (x, y) = px(polar_to_cartesian(cfg.origin, s.angle_deg, d));
            let _ = writeln!(out, r##"<circle class="echo" cx="{x:.3}" cy="{y:.3}" r="2" fill="#ff3333"/>"##);
        }
    }
    out.push_str("</svg>\n");
    out
}

pub fn render_frame(scan: &Scan, cfg: &SweepConfig, bounds: WorldBounds, out_path: &Path) -> Result<(), RadarError> {
    fs::write(out_path, render_svg(scan, cfg, bounds))?;
    Ok(())
}
