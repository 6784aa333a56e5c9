use std::collections::BTreeMap;

use crate::grid::GridMap;
use crate::hub::{Hub, HubConfig, Leg};
use crate::planner::{MoveTiming, PathMemory, TimedPath};
use crate::radar::{detect_targets, encode_frame, Disc, Scan, SweepConfig, Sweeper, WorldModel};
use crate::rfnet::{assign_channel, decode, encode, Medium, Message, Radio, RadioId};
use crate::vehicle::{calibrate_timing, Vehicle, VehicleParams, VehicleState};

use super::{Scenario, SimError};

/// Ticks between repeated activation requests while waiting for a route.
pub const ACTIVATION_RETRY_TICKS: u64 = 20;
const HUB_RADIO: RadioId = RadioId(u32::MAX);
const WAIT_QUANTUM_TICKS: u64 = 20;

/// Safety counters accumulated over a run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SafetyAudit {
    /// Ticks x vehicle pairs where two vehicles touched the same node.
    pub node_conflicts: u64,
    /// Ticks x vehicle pairs closer than half the node pitch.
    pub near_collisions: u64,
    /// Smallest centre distance seen between any two vehicles.
    pub min_pair_distance_m: Option<f64>,
    /// Ticks where the reservation table held overlapping claims.
    pub reservation_overlaps: u64,
    /// Vehicle-ticks with a pose outside the terrain.
    pub containment_violations: u64,
}

/// Radar bookkeeping for the last completed sweep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RadarSummary {
    pub scans: u64,
    pub last_targets: usize,
    pub last_matched: usize,
}

#[derive(Debug)]
pub struct Simulation {
    pub scenario: Scenario,
    grid: GridMap,
    timing: MoveTiming,
    hub: Hub,
    vehicles: Vec<Vehicle>,
    memory: PathMemory,
    medium: Medium,
    hub_radio: Radio,
    radios: BTreeMap<u32, Radio>,
    last_activation: BTreeMap<u32, u64>,
    sensor: SweepConfig,
    sweeper: Sweeper,
    last_scan: Option<Scan>,
    frames: String,
    radar: RadarSummary,
    audit: SafetyAudit,
    tick: u64,
    pub(super) drain_until: Option<u64>,
}

/// Slowest calibrated timing over the fleet, so every vehicle fits its slots.
fn fleet_timing(scenario: &Scenario) -> Result<MoveTiming, SimError> {
    let mut params: Vec<VehicleParams> = scenario.vehicles.iter().map(|v| v.params).collect();
    if params.is_empty() {
        params.push(VehicleParams::default());
    }
    let mut best: Option<MoveTiming> = None;
    for p in params {
        let t = calibrate_timing(&p, scenario.terrain.spacing_m, scenario.sim.dt_s, WAIT_QUANTUM_TICKS)?;
        best = Some(match best {
            None => t,
            Some(b) => MoveTiming {
                hop_ticks: b.hop_ticks.max(t.hop_ticks),
                quarter_turn_ticks: b.quarter_turn_ticks.max(t.quarter_turn_ticks),
                half_turn_ticks: b.half_turn_ticks.max(t.half_turn_ticks),
                wait_ticks: b.wait_ticks,
            },
        });
    }
    Ok(best.expect("at least one parameter set"))
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        let grid = scenario.validate()?;
        let timing = fleet_timing(&scenario)?;
        let mut hub = Hub::new(grid.clone(), timing, HubConfig::default())?;
        let mut specs = scenario.vehicles.clone();
        specs.sort_by_key(|v| v.id);
        let mut vehicles = Vec::with_capacity(specs.len());
        let mut radios = BTreeMap::new();
        for v in &specs {
            hub.register_vehicle(v.id, v.home, v.heading_deg)?;
            vehicles.push(Vehicle::new(v.id, v.home, v.heading_deg, v.params, &grid)?);
            radios.insert(v.id, Radio { id: RadioId(v.id), channel: assign_channel(v.id)? });
        }
        for job in &scenario.jobs {
            hub.add_job(*job)?;
        }
        let mut medium = Medium::new(scenario.medium);
        if scenario.sim.capture {
            medium.enable_capture();
        }
        let sensor = scenario.sensor;
        Ok(Self {
            grid,
            timing,
            hub,
            vehicles,
            memory: PathMemory::new(),
            medium,
            hub_radio: Radio { id: HUB_RADIO, channel: assign_channel(0)? },
            radios,
            last_activation: BTreeMap::new(),
            sweeper: Sweeper::new(&sensor),
            sensor,
            last_scan: None,
            frames: String::new(),
            radar: RadarSummary::default(),
            audit: SafetyAudit {
                node_conflicts: 0,
                near_collisions: 0,
                min_pair_distance_m: None,
                reservation_overlaps: 0,
                containment_violations: 0,
            },
            tick: 0,
            drain_until: None,
            scenario,
        })
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn grid(&self) -> &GridMap {
        &self.grid
    }

    pub fn timing(&self) -> &MoveTiming {
        &self.timing
    }

    pub fn hub(&self) -> &Hub {
        &self.hub
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    pub fn audit(&self) -> &SafetyAudit {
        &self.audit
    }

    pub fn radar(&self) -> &RadarSummary {
        &self.radar
    }

    /// Radar frame lines emitted so far.
    pub fn frames(&self) -> &str {
        &self.frames
    }

    pub fn last_scan(&self) -> Option<&Scan> {
        self.last_scan.as_ref()
    }

    /// All jobs done and every vehicle idle at rest.
    pub fn is_finished(&self) -> bool {
        self.hub.all_jobs_completed()
            && self.vehicles.iter().all(|v| v.state() == VehicleState::Idle && !v.is_approaching())
    }

    /// Advances the world by one tick in the fixed order: radio delivery,
    /// hub, vehicles by id, radar, telemetry, reservation cleanup.
    pub fn step(&mut self) -> Result<(), SimError> {
        let tick = self.tick;
        let to_hub = self.deliver(tick);
        for m in to_hub {
            // frames from unregistered ids are ignored
            let _ = self.hub.receive(&m, tick);
        }
        self.hub.update(tick);
        for (vid, m) in self.hub.take_outbox() {
            let frame = encode(&m)?;
            self.medium.send(HUB_RADIO, assign_channel(vid)?, frame, tick);
        }
        for i in 0..self.vehicles.len() {
            self.step_vehicle(i, tick)?;
        }
        self.step_radar();
        if tick.is_multiple_of(self.scenario.sim.telemetry_interval) {
            for v in &self.vehicles {
                let frame = encode(&v.telemetry())?;
                self.medium.send(RadioId(v.id), self.radios[&v.id].channel, frame, tick);
            }
        }
        self.hub.collect_garbage(tick);
        self.run_audit();
        self.tick += 1;
        Ok(())
    }

    /// Polls every channel; hands vehicle-bound frames to their vehicles and
    /// returns the hub-bound ones.
    fn deliver(&mut self, tick: u64) -> Vec<Message> {
        let mut to_hub = Vec::new();
        for i in 0..self.vehicles.len() {
            let vid = self.vehicles[i].id;
            let radio = self.radios[&vid];
            self.hub_radio.tune(radio.channel);
            to_hub.extend(self.medium.poll(&self.hub_radio, tick).iter().filter_map(|f| decode(f.as_bytes()).ok()));
            for f in self.medium.poll(&radio, tick) {
                if let Ok(Message::AssignDestination { dest, .. }) = decode(f.as_bytes()) {
                    self.on_assign(i, dest, tick);
                }
            }
        }
        to_hub
    }

    fn on_assign(&mut self, i: usize, dest: crate::grid::NodeId, tick: u64) {
        let v = &mut self.vehicles[i];
        let leg = match v.state() {
            VehicleState::Idle => Leg::Approach,
            VehicleState::Loaded | VehicleState::AwaitingRoute => Leg::Transit,
            VehicleState::Transit => {
                // repeat of the current destination: acknowledge again
                let _ = v.on_destination(dest, &TimedPath::default());
                return;
            }
            _ => return,
        };
        if leg == Leg::Approach && v.is_approaching() {
            let _ = v.on_pickup_order(dest, &TimedPath::default(), &mut self.memory);
            return;
        }
        let Some(path) = self.hub.route_for_delivery(v.id, dest, leg, tick) else { return };
        let _ = match leg {
            Leg::Approach => v.on_pickup_order(dest, &path, &mut self.memory),
            _ => v.on_destination(dest, &path),
        };
    }

    fn step_vehicle(&mut self, i: usize, tick: u64) -> Result<(), SimError> {
        let dt = self.scenario.sim.dt_s;
        let v = &mut self.vehicles[i];
        let vid = v.id;
        match v.state() {
            VehicleState::Unloading => {
                let back = v.unload(&mut self.memory)?;
                v.hold_route();
                if let Some(path) = self.hub.request_retrace(vid, back.nodes, tick) {
                    v.apply_schedule(&path)?;
                }
            }
            VehicleState::Retracing => {
                if let Some(path) = self.hub.take_retrace_schedule(vid) {
                    v.apply_schedule(&path)?;
                }
            }
            _ => {}
        }
        let cycles = v.completed_cycles().len();
        v.step(&self.grid, dt, tick, &mut self.memory)?;
        if v.completed_cycles().len() > cycles {
            self.hub.on_cycle_complete(vid, tick);
        }
        if v.take_pickup_arrival() {
            v.press_load_switch()?;
        }
        if v.state() == VehicleState::AwaitingRoute
            && tick >= self.last_activation.get(&vid).copied().unwrap_or(0) + ACTIVATION_RETRY_TICKS
        {
            v.resend_activation();
        }
        let channel = self.radios[&vid].channel;
        for m in v.take_outbox() {
            self.medium.send(RadioId(vid), channel, encode(&m)?, tick);
            if matches!(m, Message::Activate { .. }) {
                v.mark_activation_sent();
                self.last_activation.insert(vid, tick);
            }
        }
        Ok(())
    }

    fn step_radar(&mut self) {
        let radius = self.scenario.sim.vehicle_radius_m;
        let mut obstacles = self.scenario.obstacles.clone();
        obstacles.extend(self.vehicles.iter().map(|v| Disc { center: v.pose().position(), radius_m: radius }));
        let world = WorldModel { obstacles };
        for _ in 0..self.scenario.sim.radar_steps_per_tick {
            let (sample, scan) = self.sweeper.advance(&world, &self.sensor);
            if let Ok(line) = encode_frame(sample.angle_deg, sample.distance_m) {
                self.frames.push_str(&line);
            }
            if let Some(scan) = scan {
                let targets = detect_targets(&scan, &self.sensor);
                let matched = self.hub.associate_radar(&targets);
                self.radar.scans += 1;
                self.radar.last_targets = targets.len();
                self.radar.last_matched = matched.iter().flatten().count();
                self.last_scan = Some(scan);
            }
        }
    }

    fn run_audit(&mut self) {
        let half_pitch = self.grid.spacing_m() / 2.0;
        for (i, a) in self.vehicles.iter().enumerate() {
            if !self.grid.in_terrain(a.pose().position()) {
                self.audit.containment_violations += 1;
            }
            let occ_a = a.occupied_nodes();
            for b in &self.vehicles[i + 1..] {
                if b.occupied_nodes().iter().any(|n| occ_a.contains(n)) {
                    self.audit.node_conflicts += 1;
                }
                let d = a.pose().position().distance(b.pose().position());
                if d < half_pitch {
                    self.audit.near_collisions += 1;
                }
                let m = self.audit.min_pair_distance_m.get_or_insert(d);
                *m = m.min(d);
            }
        }
        if self.hub.table().find_overlap().is_some() {
            self.audit.reservation_overlaps += 1;
        }
    }
}
