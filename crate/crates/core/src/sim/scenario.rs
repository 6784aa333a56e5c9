use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::grid::{GridMap, NodeId, Position};
use crate::hub::Job;
use crate::planner::FLOYD_WARSHALL_MAX_NODES;
use crate::radar::SweepConfig;
use crate::rfnet::{MediumConfig, CHANNEL_COUNT};
use crate::vehicle::VehicleParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainConfig {
    pub width_m: f64,
    pub height_m: f64,
    pub spacing_m: f64,
    #[serde(default)]
    pub blocked: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub id: u32,
    pub home: NodeId,
    #[serde(default = "default_heading")]
    pub heading_deg: f64,
    #[serde(default)]
    pub params: VehicleParams,
}

fn default_heading() -> f64 {
    90.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt_s: f64,
    pub max_ticks: u64,
    /// Ticks between telemetry reports of each vehicle.
    pub telemetry_interval: u64,
    /// Ticks between rendered radar frames; 0 disables rendering.
    pub frame_interval: u64,
    pub radar_steps_per_tick: u32,
    /// Radius of the disc each vehicle presents to the radar.
    pub vehicle_radius_m: f64,
    /// Write every radio transmission to a binary capture file.
    pub capture: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_s: 0.01,
            max_ticks: 1_000_000,
            telemetry_interval: 10,
            frame_interval: 500,
            radar_steps_per_tick: 1,
            vehicle_radius_m: 0.2,
            capture: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub terrain: TerrainConfig,
    #[serde(default)]
    pub sensor: SweepConfig,
    #[serde(default)]
    pub vehicles: Vec<VehicleSpec>,
    #[serde(default)]
    pub jobs: Vec<Job>,
    #[serde(default)]
    pub medium: MediumConfig,
    #[serde(default)]
    pub sim: SimConfig,
    /// Static discs seen by the radar in addition to the vehicles.
    #[serde(default)]
    pub obstacles: Vec<crate::radar::Disc>,
}

impl Scenario {
    /// The desk-scale prototype: 2 x 2 m terrain, radar in the centre, two
    /// vehicles on the south edge each carrying one load to the north edge.
    pub fn prototype() -> Self {
        let n = NodeId::new;
        Self {
            terrain: TerrainConfig { width_m: 2.0, height_m: 2.0, spacing_m: 0.25, blocked: vec![n(4, 4)] },
            sensor: SweepConfig { origin: Position::new(1.0, 1.0), ..SweepConfig::default() },
            vehicles: vec![
                VehicleSpec { id: 0, home: n(0, 0), heading_deg: 90.0, params: VehicleParams::default() },
                VehicleSpec { id: 1, home: n(8, 0), heading_deg: 90.0, params: VehicleParams::default() },
            ],
            jobs: vec![
                Job { id: 0, pickup: n(0, 0), destination: n(3, 8), release_tick: 0 },
                Job { id: 1, pickup: n(8, 0), destination: n(5, 8), release_tick: 0 },
            ],
            medium: MediumConfig { loss_probability: 0.0, latency_ticks: 1, seed: 7 },
            sim: SimConfig::default(),
            obstacles: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::ScenarioInvalid(vec![format!("json: {e}")]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Builds the node grid with the blocked nodes applied.
    pub fn grid(&self) -> Result<GridMap, SimError> {
        let t = &self.terrain;
        let mut grid = GridMap::new(t.width_m, t.height_m, t.spacing_m)
            .map_err(|e| SimError::ScenarioInvalid(vec![format!("terrain: {e}")]))?;
        for (i, &b) in t.blocked.iter().enumerate() {
            grid.block(b).map_err(|e| SimError::ScenarioInvalid(vec![format!("terrain.blocked[{i}]: {e}")]))?;
        }
        Ok(grid)
    }

    /// Checks every field; all problems are reported together.
    pub fn validate(&self) -> Result<GridMap, SimError> {
        let grid = self.grid()?;
        let mut errs = Vec::new();
        let usable = |node: NodeId| grid.contains(node) && !grid.is_blocked(node);

        if grid.node_count() > FLOYD_WARSHALL_MAX_NODES {
            errs.push(format!("terrain: {} nodes exceeds the {FLOYD_WARSHALL_MAX_NODES}-node limit", grid.node_count()));
        }
        if let Err(e) = self.sensor.validate() {
            errs.push(format!("sensor: {e}"));
        }
        let s = &self.sim;
        if !(s.dt_s > 0.0 && s.dt_s.is_finite()) {
            errs.push("sim.dt_s: must be positive".into());
        }
        if s.max_ticks == 0 {
            errs.push("sim.max_ticks: must be positive".into());
        }
        if s.telemetry_interval == 0 {
            errs.push("sim.telemetry_interval: must be positive".into());
        }
        if s.radar_steps_per_tick == 0 {
            errs.push("sim.radar_steps_per_tick: must be positive".into());
        }
        if !(s.vehicle_radius_m > 0.0) {
            errs.push("sim.vehicle_radius_m: must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.medium.loss_probability) {
            errs.push("medium.loss_probability: must be in [0, 1]".into());
        }

        if self.vehicles.len() > CHANNEL_COUNT as usize {
            errs.push(format!("vehicles: {} vehicles exceeds the {CHANNEL_COUNT}-channel limit", self.vehicles.len()));
        }
        let mut ids = BTreeSet::new();
        let mut homes = BTreeSet::new();
        for (i, v) in self.vehicles.iter().enumerate() {
            if v.id >= CHANNEL_COUNT {
                errs.push(format!("vehicles[{i}].id: {} is not below {CHANNEL_COUNT}", v.id));
            }
            if !ids.insert(v.id) {
                errs.push(format!("vehicles[{i}].id: duplicate id {}", v.id));
            }
            if !usable(v.home) {
                errs.push(format!("vehicles[{i}].home: node {} is outside the grid or blocked", v.home));
            } else if !homes.insert(v.home) {
                errs.push(format!("vehicles[{i}].home: node {} is shared", v.home));
            }
            if let Err(e) = v.params.validate() {
                errs.push(format!("vehicles[{i}].params: {e}"));
            } else if s.dt_s > v.params.motor_time_constant_s / 2.0 {
                errs.push(format!("sim.dt_s: exceeds half the motor time constant of vehicle {}", v.id));
            }
        }

        let mut job_ids = BTreeSet::new();
        for (i, j) in self.jobs.iter().enumerate() {
            if !job_ids.insert(j.id) {
                errs.push(format!("jobs[{i}].id: duplicate id {}", j.id));
            }
            if j.pickup == j.destination {
                errs.push(format!("jobs[{i}]: pickup equals destination"));
            }
            for (field, node) in [("pickup", j.pickup), ("destination", j.destination)] {
                if !usable(node) {
                    errs.push(format!("jobs[{i}].{field}: node {node} is outside the grid or blocked"));
                }
            }
        }
        if !self.jobs.is_empty() && self.vehicles.is_empty() {
            errs.push("jobs: no vehicles to carry them".into());
        }

        if errs.is_empty() {
            Ok(grid)
        } else {
            Err(SimError::ScenarioInvalid(errs))
        }
    }
}
