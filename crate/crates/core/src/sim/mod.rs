//! Fixed-timestep simulation tying the grid, planner, vehicles, radio, radar
//! and hub together, plus the scenario format and run artifacts.

mod engine;
mod scenario;

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::hub::{metrics, write_csv_to, HubError, JobStatus, SummaryReport};
use crate::planner::PlanError;
use crate::radar::{detect_targets, encode_frame, render_svg, sweep, Disc, RadarError, WorldBounds, WorldModel};
use crate::rfnet::{write_capture, RfError};
use crate::vehicle::VehicleError;

pub use engine::{RadarSummary, SafetyAudit, Simulation, ACTIVATION_RETRY_TICKS};
pub use scenario::{Scenario, SimConfig, TerrainConfig, VehicleSpec};

pub const CSV_FILE: &str = "telemetry.csv";
pub const FRAMES_FILE: &str = "radar_frames.txt";
pub const SUMMARY_JSON_FILE: &str = "summary.json";
pub const SUMMARY_TEXT_FILE: &str = "summary.txt";
pub const CAPTURE_FILE: &str = "rf_capture.bin";
pub const RENDER_DIR: &str = "frames";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    ScenarioInvalid(Vec<String>),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error(transparent)]
    Hub(#[from] HubError),
    #[error(transparent)]
    Radio(#[from] RfError),
    #[error(transparent)]
    Radar(#[from] RadarError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobOutcome {
    pub job_id: u32,
    pub vehicle: Option<u32>,
    pub completed_tick: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub completed_jobs: usize,
    pub total_jobs: usize,
    /// Ticks from start until the last job's vehicle is idle again.
    pub makespan_ticks: u64,
    pub ticks_run: u64,
    pub jobs: Vec<JobOutcome>,
    pub metrics: Option<SummaryReport>,
    pub audit: SafetyAudit,
    pub frames_sent: u64,
    pub frames_dropped: u64,
    pub radar_scans: u64,
    /// Artifact file names relative to the output directory.
    pub artifacts: Vec<String>,
}

impl SimReport {
    pub fn all_completed(&self) -> bool {
        self.completed_jobs == self.total_jobs
    }

    pub fn render_text(&self) -> String {
        let mut out = format!(
            "completed_jobs {}/{}\nmakespan_ticks {}\nticks_run {}\nframes_sent {} dropped {}\nradar_scans {}\n",
            self.completed_jobs,
            self.total_jobs,
            self.makespan_ticks,
            self.ticks_run,
            self.frames_sent,
            self.frames_dropped,
            self.radar_scans
        );
        let a = &self.audit;
        out.push_str(&format!(
            "audit node_conflicts {} near_collisions {} reservation_overlaps {} containment_violations {}\n",
            a.node_conflicts, a.near_collisions, a.reservation_overlaps, a.containment_violations
        ));
        for j in &self.jobs {
            out.push_str(&format!("job {} vehicle {:?} completed_tick {:?}\n", j.job_id, j.vehicle, j.completed_tick));
        }
        if let Some(m) = &self.metrics {
            out.push_str(&m.render_text());
        }
        out
    }
}

impl Simulation {
    /// Whether another tick is due. After the last job completes the run
    /// continues for one telemetry interval plus the radio latency so the
    /// final vehicle states reach the log.
    pub fn wants_tick(&mut self) -> bool {
        if self.tick_count() >= self.scenario.sim.max_ticks {
            return false;
        }
        if !self.is_finished() {
            return true;
        }
        if self.scenario.jobs.is_empty() {
            return false;
        }
        let drain = self.scenario.sim.telemetry_interval + self.scenario.medium.latency_ticks + 1;
        let t = self.tick_count();
        let until = *self.drain_until.get_or_insert(t + drain);
        t < until
    }

    /// Steps until finished (plus the drain) or the tick limit.
    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        while self.wants_tick() {
            self.step()?;
        }
        Ok(())
    }

    pub fn report(&self, artifacts: Vec<String>) -> SimReport {
        let jobs: Vec<JobOutcome> = self
            .hub()
            .jobs()
            .iter()
            .map(|(job, status)| match *status {
                JobStatus::Queued => JobOutcome { job_id: job.id, vehicle: None, completed_tick: None },
                JobStatus::Assigned(v) => JobOutcome { job_id: job.id, vehicle: Some(v), completed_tick: None },
                JobStatus::Completed { vehicle, tick } => {
                    JobOutcome { job_id: job.id, vehicle: Some(vehicle), completed_tick: Some(tick) }
                }
            })
            .collect();
        let makespan = jobs.iter().filter_map(|j| j.completed_tick).map(|t| t + 1).max().unwrap_or(0);
        let (sent, dropped) = self.medium().stats();
        SimReport {
            completed_jobs: self.hub().completed_jobs(),
            total_jobs: jobs.len(),
            makespan_ticks: makespan,
            ticks_run: self.tick_count(),
            jobs,
            metrics: metrics(self.hub().log(), self.scenario.sim.dt_s).ok(),
            audit: *self.audit(),
            frames_sent: sent,
            frames_dropped: dropped,
            radar_scans: self.radar().scans,
            artifacts,
        }
    }

    fn bounds(&self) -> WorldBounds {
        WorldBounds { width_m: self.scenario.terrain.width_m, height_m: self.scenario.terrain.height_m }
    }
}

/// Runs a scenario to completion and writes the telemetry CSV, radar frame
/// stream, rendered frames, summaries and (optionally) the radio capture.
pub fn run(scenario: Scenario, out_dir: &Path) -> Result<SimReport, SimError> {
    fs::create_dir_all(out_dir)?;
    let frame_interval = scenario.sim.frame_interval;
    let mut sim = Simulation::new(scenario)?;
    let mut artifacts = vec![CSV_FILE.to_string(), FRAMES_FILE.to_string()];
    if frame_interval > 0 {
        fs::create_dir_all(out_dir.join(RENDER_DIR))?;
    }
    while sim.wants_tick() {
        sim.step()?;
        let t = sim.tick_count();
        if frame_interval > 0 && t % frame_interval == 0 {
            if let Some(scan) = sim.last_scan() {
                let name = format!("{RENDER_DIR}/frame_{t:08}.svg");
                fs::write(out_dir.join(&name), render_svg(scan, &sim.scenario.sensor, sim.bounds()))?;
                artifacts.push(name);
            }
        }
    }

    let mut csv = Vec::new();
    write_csv_to(sim.hub().log(), &mut csv)?;
    fs::write(out_dir.join(CSV_FILE), csv)?;
    fs::write(out_dir.join(FRAMES_FILE), sim.frames())?;
    if sim.scenario.sim.capture {
        let mut bytes = Vec::new();
        write_capture(sim.medium().capture(), &mut bytes)?;
        fs::write(out_dir.join(CAPTURE_FILE), bytes)?;
        artifacts.push(CAPTURE_FILE.to_string());
    }
    artifacts.push(SUMMARY_JSON_FILE.to_string());
    artifacts.push(SUMMARY_TEXT_FILE.to_string());
    let report = sim.report(artifacts);
    let json = serde_json::to_string_pretty(&report).map_err(io::Error::other)?;
    fs::write(out_dir.join(SUMMARY_JSON_FILE), json + "\n")?;
    fs::write(out_dir.join(SUMMARY_TEXT_FILE), report.render_text())?;
    Ok(report)
}

/// Result of a single static sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutcome {
    pub frame_lines: usize,
    pub targets: usize,
}

/// One full counter-clockwise sweep over the vehicles at their homes plus
/// the static obstacles; writes the frame stream and one SVG.
pub fn scan(scenario: &Scenario, out_dir: &Path) -> Result<ScanOutcome, SimError> {
    let grid = scenario.validate()?;
    let cfg = scenario.sensor;
    let mut obstacles = scenario.obstacles.clone();
    for v in &scenario.vehicles {
        let center = grid.node_to_position(v.home).map_err(|e| SimError::ScenarioInvalid(vec![e.to_string()]))?;
        obstacles.push(Disc { center, radius_m: scenario.sim.vehicle_radius_m });
    }
    let world = WorldModel { obstacles };
    let s = sweep(&world, &cfg, 0.0, 360.0 - cfg.step_deg);
    let mut text = String::new();
    for sample in &s.samples {
        text.push_str(&encode_frame(sample.angle_deg, sample.distance_m)?);
    }
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(FRAMES_FILE), &text)?;
    let bounds = WorldBounds { width_m: scenario.terrain.width_m, height_m: scenario.terrain.height_m };
    fs::write(out_dir.join("scan.svg"), render_svg(&s, &cfg, bounds))?;
    Ok(ScanOutcome { frame_lines: s.samples.len(), targets: detect_targets(&s, &cfg).len() })
}
