//! Central coordinator. Owns the reservation table, assigns released jobs to
//! idle vehicles, books each leg of a job cycle, answers the vehicles over
//! the radio and keeps the telemetry log.
//!
//! A job cycle has three legs: approach (home to pickup), transit (pickup to
//! destination) and retrace (the recorded route backwards). Between legs the
//! vehicle is parked on an open-ended reservation at its current node. A
//! booked leg keeps that node held until the vehicle confirms the route, so a
//! late delivery can always be rescheduled from where the vehicle stands.

mod association;
mod telemetry;

use std::collections::{BTreeMap, BTreeSet};
use std::io;

use thiserror::Error;

use crate::grid::{Direction, GridMap, NodeId, Position};
use crate::planner::{
    floyd_warshall, plan_along, plan_space_time_with, DistanceMatrix, MoveTiming, PlanError, ReservationTable,
    SpaceTimeRequest, TimedPath, OPEN_END,
};
use crate::radar::TargetEstimate;
use crate::rfnet::Message;

pub use association::{associate, ASSOCIATION_GATE_M};
pub use telemetry::{
    metrics, polar_from_origin, write_csv, write_csv_to, SummaryReport, TelemetryRecord, VehicleMetrics, CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum HubError {
    #[error("vehicle {0} is not registered")]
    UnknownVehicle(u32),
    #[error("vehicle {0} is already registered")]
    DuplicateVehicle(u32),
    #[error("job {job}: {reason}")]
    InvalidJob { job: u32, reason: String },
    #[error("expected a telemetry message")]
    NotTelemetry,
    #[error("telemetry log is empty")]
    EmptyLog,
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Job {
    pub id: u32,
    pub pickup: NodeId,
    pub destination: NodeId,
    #[serde(default)]
    pub release_tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobStatus {
    Queued,
    Assigned(u32),
    Completed { vehicle: u32, tick: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leg {
    Approach,
    Transit,
    Retrace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HubConfig {
    /// Delay before a failed booking is tried again.
    pub retry_ticks: u64,
    /// Interval between repeats of an unacknowledged ASSIGN_DESTINATION.
    pub retransmit_ticks: u64,
    /// Ticks between booking a leg and its earliest departure.
    pub departure_margin_ticks: u64,
}

impl Default for HubConfig {
    fn default() -> Self {
        Self { retry_ticks: 50, retransmit_ticks: 20, departure_margin_ticks: 2 }
    }
}

#[derive(Debug, Clone)]
struct Booking {
    path: TimedPath,
    /// Open-ended hold on the start node, dropped once the route is delivered.
    hold: Option<(NodeId, u64)>,
    start_heading: Option<Direction>,
    /// The vehicle has been handed this route.
    delivered: bool,
}

#[derive(Debug, Clone)]
struct Assignment {
    job: usize,
    leg: Leg,
    booking: Option<Booking>,
    retry_at: u64,
    awaiting_ack: bool,
    last_sent: u64,
    retrace_nodes: Vec<NodeId>,
}

#[derive(Debug, Clone)]
struct FleetEntry {
    home: NodeId,
    /// Where the vehicle is parked, or will park at the end of its booking.
    node: NodeId,
    heading: Option<Direction>,
    latest: Option<TelemetryRecord>,
}

#[derive(Debug, Clone)]
pub struct Hub {
    grid: GridMap,
    distances: DistanceMatrix,
    timing: MoveTiming,
    config: HubConfig,
    table: ReservationTable,
    fleet: BTreeMap<u32, FleetEntry>,
    jobs: Vec<(Job, JobStatus)>,
    assignments: BTreeMap<u32, Assignment>,
    outbox: Vec<(u32, Message)>,
    log: Vec<TelemetryRecord>,
}

impl Hub {
    pub fn new(grid: GridMap, timing: MoveTiming, config: HubConfig) -> Result<Self, HubError> {
        let distances = floyd_warshall(&grid)?;
        Ok(Self {
            grid,
            distances,
            timing,
            config,
            table: ReservationTable::new(),
            fleet: BTreeMap::new(),
            jobs: Vec::new(),
            assignments: BTreeMap::new(),
            outbox: Vec::new(),
            log: Vec::new(),
        })
    }

    pub fn grid(&self) -> &GridMap {
        &self.grid
    }

    pub fn table(&self) -> &ReservationTable {
        &self.table
    }

    pub fn log(&self) -> &[TelemetryRecord] {
        &self.log
    }

    pub fn jobs(&self) -> &[(Job, JobStatus)] {
        &self.jobs
    }

    pub fn completed_jobs(&self) -> usize {
        self.jobs.iter().filter(|(_, s)| matches!(s, JobStatus::Completed { .. })).count()
    }

    pub fn all_jobs_completed(&self) -> bool {
        self.completed_jobs() == self.jobs.len()
    }

    /// Leg and job of the vehicle's current assignment.
    pub fn assignment(&self, vehicle: u32) -> Option<(Leg, Job)> {
        self.assignments.get(&vehicle).map(|a| (a.leg, self.jobs[a.job].0))
    }

    pub fn latest(&self, vehicle: u32) -> Option<&TelemetryRecord> {
        self.fleet.get(&vehicle)?.latest.as_ref()
    }

    /// Adds a vehicle parked at `home` from tick 0.
    pub fn register_vehicle(&mut self, id: u32, home: NodeId, heading_deg: f64) -> Result<(), HubError> {
        if self.fleet.contains_key(&id) {
            return Err(HubError::DuplicateVehicle(id));
        }
        if !self.grid.contains(home) || self.grid.is_blocked(home) {
            return Err(PlanError::InvalidNode(home).into());
        }
        self.table.reserve(id, home, 0, OPEN_END)?;
        let heading = Some(Direction::from_heading(heading_deg));
        self.fleet.insert(id, FleetEntry { home, node: home, heading, latest: None });
        Ok(())
    }

    pub fn add_job(&mut self, job: Job) -> Result<(), HubError> {
        let invalid = |reason: &str| HubError::InvalidJob { job: job.id, reason: reason.to_string() };
        if job.pickup == job.destination {
            return Err(invalid("pickup equals destination"));
        }
        for node in [job.pickup, job.destination] {
            if !self.grid.contains(node) || self.grid.is_blocked(node) {
                return Err(invalid(&format!("node {node} is outside the grid or blocked")));
            }
        }
        self.jobs.push((job, JobStatus::Queued));
        Ok(())
    }

    /// Messages to transmit, each tagged with the addressed vehicle.
    pub fn take_outbox(&mut self) -> Vec<(u32, Message)> {
        std::mem::take(&mut self.outbox)
    }

    /// Assigns each released, queued job to the idle vehicle nearest its
    /// pickup (all-pairs hop distance, ties to the lower id).
    pub fn dispatch(&mut self, tick: u64) -> Vec<(u32, Job)> {
        let mut out = Vec::new();
        for ji in 0..self.jobs.len() {
            let (job, status) = self.jobs[ji];
            if status != JobStatus::Queued || job.release_tick > tick {
                continue;
            }
            let best = self
                .fleet
                .iter()
                .filter(|(id, _)| !self.assignments.contains_key(id))
                .filter_map(|(&id, f)| self.distances.get(f.node, job.pickup).map(|d| (d, id)))
                .min();
            let Some((_, vid)) = best else { continue };
            self.jobs[ji].1 = JobStatus::Assigned(vid);
            self.assignments.insert(
                vid,
                Assignment {
                    job: ji,
                    leg: Leg::Approach,
                    booking: None,
                    retry_at: tick,
                    awaiting_ack: false,
                    last_sent: tick,
                    retrace_nodes: Vec::new(),
                },
            );
            out.push((vid, job));
        }
        out
    }

    /// One coordinator tick: dispatch, pending bookings and retransmissions.
    pub fn update(&mut self, tick: u64) {
        self.dispatch(tick);
        let ids: Vec<u32> = self.assignments.keys().copied().collect();
        for vid in ids {
            let a = &self.assignments[&vid];
            if a.booking.is_none() && tick >= a.retry_at && (a.leg != Leg::Retrace || !a.retrace_nodes.is_empty()) {
                self.try_book(vid, tick);
                continue;
            }
            let a = &self.assignments[&vid];
            if a.awaiting_ack && a.leg != Leg::Retrace && tick >= a.last_sent + self.config.retransmit_ticks {
                self.send_assign(vid, tick);
            }
        }
    }

    fn leg_target(&self, vid: u32) -> Option<NodeId> {
        let a = self.assignments.get(&vid)?;
        let job = self.jobs[a.job].0;
        match a.leg {
            Leg::Approach => Some(job.pickup),
            Leg::Transit => Some(job.destination),
            Leg::Retrace => a.retrace_nodes.last().copied(),
        }
    }

    fn send_assign(&mut self, vid: u32, tick: u64) {
        let Some(dest) = self.leg_target(vid) else { return };
        let a = self.assignments.get_mut(&vid).expect("assignment exists");
        a.awaiting_ack = true;
        a.last_sent = tick;
        self.outbox.push((vid, Message::AssignDestination { vehicle: vid as u8, dest }));
    }

    /// Nodes other vehicles should route around: their homes and the end
    /// points of every unfinished job not carried by `vid`.
    fn avoid_set(&self, vid: u32) -> BTreeSet<NodeId> {
        let mut avoid: BTreeSet<NodeId> = self.fleet.iter().filter(|(id, _)| **id != vid).map(|(_, f)| f.home).collect();
        let own = self.assignments.get(&vid).map(|a| a.job);
        for (ji, (job, status)) in self.jobs.iter().enumerate() {
            if Some(ji) != own && !matches!(status, JobStatus::Completed { .. }) {
                avoid.insert(job.pickup);
                avoid.insert(job.destination);
            }
        }
        avoid
    }

    fn plan_leg(&self, vid: u32, tick: u64, departure: u64) -> Result<TimedPath, PlanError> {
        let f = &self.fleet[&vid];
        let a = &self.assignments[&vid];
        if a.leg == Leg::Retrace {
            return plan_along(&self.grid, &self.table, vid, &a.retrace_nodes, tick, f.heading, &self.timing);
        }
        let dst = self.leg_target(vid).expect("leg has a target");
        let mut req = SpaceTimeRequest::new(vid, f.node, dst, tick);
        req.heading = f.heading;
        req.earliest_departure = departure;
        req.avoid = self.avoid_set(vid);
        plan_space_time_with(&self.grid, &self.table, &req, &self.timing).or_else(|_| {
            req.avoid.clear();
            plan_space_time_with(&self.grid, &self.table, &req, &self.timing)
        })
    }

    /// Replaces the vehicle's parking with `path` and records where it ends.
    fn commit_leg(&mut self, vid: u32, tick: u64, path: &TimedPath) -> Result<(), PlanError> {
        self.table.release_from(vid, tick);
        self.table.commit(vid, path)?;
        let f = self.fleet.get_mut(&vid).expect("registered");
        f.node = path.last_node().unwrap_or(f.node);
        f.heading = path.final_heading().or(f.heading);
        Ok(())
    }

    fn try_book(&mut self, vid: u32, tick: u64) {
        let leg = self.assignments[&vid].leg;
        let departure = if leg == Leg::Retrace { tick } else { tick + self.config.departure_margin_ticks };
        let start = self.fleet[&vid].node;
        let start_heading = self.fleet[&vid].heading;
        let booked = self.plan_leg(vid, tick, departure).and_then(|path| {
            self.commit_leg(vid, tick, &path)?;
            let hold = if leg != Leg::Retrace && path.steps.len() > 1 {
                let from = path.steps[0].exit_tick;
                self.table.reserve(vid, start, from, OPEN_END)?;
                Some((start, from))
            } else {
                None
            };
            Ok(Booking { path, hold, start_heading, delivered: false })
        });
        match booked {
            Ok(b) => {
                self.assignments.get_mut(&vid).expect("assignment exists").booking = Some(b);
                if leg != Leg::Retrace {
                    self.send_assign(vid, tick);
                }
            }
            Err(_) => {
                let retry = tick + self.config.retry_ticks;
                self.assignments.get_mut(&vid).expect("assignment exists").retry_at = retry;
            }
        }
    }

    /// The route for an ASSIGN_DESTINATION that reached `vid` at `tick` while
    /// it expects `leg`. Stale or mismatched deliveries yield `None`. A
    /// delivery after the booked departure is rescheduled from `tick`.
    pub fn route_for_delivery(&mut self, vid: u32, dest: NodeId, leg: Leg, tick: u64) -> Option<TimedPath> {
        if leg == Leg::Retrace || self.leg_target(vid) != Some(dest) || self.assignments.get(&vid)?.leg != leg {
            return None;
        }
        let booking = self.assignments.get_mut(&vid)?.booking.as_mut()?;
        if booking.delivered {
            return Some(booking.path.clone());
        }
        let departure = booking.path.steps.first()?.exit_tick;
        if tick <= departure || booking.path.steps.len() == 1 {
            if let Some((node, from)) = booking.hold.take() {
                self.table.cancel(vid, node, from, OPEN_END);
            }
            booking.delivered = true;
            return Some(booking.path.clone());
        }
        let (start, start_heading) = (booking.path.steps[0].node, booking.start_heading);
        let f = self.fleet.get_mut(&vid).expect("registered");
        f.node = start;
        f.heading = start_heading;
        self.table.release_from(vid, tick);
        let replanned = self
            .plan_leg(vid, tick, tick)
            .and_then(|path| self.commit_leg(vid, tick, &path).map(|_| path));
        let a = self.assignments.get_mut(&vid).expect("assignment exists");
        match replanned {
            Ok(path) => {
                a.booking = Some(Booking { path: path.clone(), hold: None, start_heading, delivered: true });
                Some(path)
            }
            Err(_) => {
                // The start node was held, so parking there again cannot conflict.
                let _ = self.table.reserve(vid, start, tick, OPEN_END);
                a.booking = None;
                a.awaiting_ack = false;
                a.retry_at = tick + self.config.retry_ticks;
                None
            }
        }
    }

    /// Handles a frame received from a vehicle.
    pub fn receive(&mut self, message: &Message, tick: u64) -> Result<(), HubError> {
        let vid = message.vehicle() as u32;
        if !self.fleet.contains_key(&vid) {
            return Err(HubError::UnknownVehicle(vid));
        }
        match *message {
            Message::Activate { .. } => {
                let Some(a) = self.assignments.get_mut(&vid) else { return Ok(()) };
                match a.leg {
                    Leg::Approach => {
                        a.leg = Leg::Transit;
                        a.booking = None;
                        a.awaiting_ack = false;
                        a.retry_at = tick;
                        self.try_book(vid, tick);
                    }
                    Leg::Transit if a.booking.is_some() => self.send_assign(vid, tick),
                    _ => {}
                }
            }
            Message::Ack { .. } => {
                if let Some(a) = self.assignments.get_mut(&vid) {
                    a.awaiting_ack = false;
                }
            }
            Message::Telemetry { .. } => {
                self.ingest_telemetry(message, tick)?;
            }
            Message::AssignDestination { .. } => {}
        }
        Ok(())
    }

    /// Decodes a telemetry message into a log record.
    pub fn ingest_telemetry(&mut self, message: &Message, tick: u64) -> Result<TelemetryRecord, HubError> {
        let Message::Telemetry { vehicle, data } = message else {
            return Err(HubError::NotTelemetry);
        };
        let vid = *vehicle as u32;
        let entry = self.fleet.get_mut(&vid).ok_or(HubError::UnknownVehicle(vid))?;
        let rec = TelemetryRecord::from_payload(tick, vid, data);
        entry.latest = Some(rec);
        self.log.push(rec);
        Ok(rec)
    }

    /// Starts the retrace leg over `nodes` (current node first). Returns the
    /// schedule when it could be booked right away.
    pub fn request_retrace(&mut self, vid: u32, nodes: Vec<NodeId>, tick: u64) -> Option<TimedPath> {
        let a = self.assignments.get_mut(&vid)?;
        a.leg = Leg::Retrace;
        a.booking = None;
        a.awaiting_ack = false;
        a.retrace_nodes = nodes;
        a.retry_at = tick;
        self.try_book(vid, tick);
        self.take_retrace_schedule(vid)
    }

    /// A retrace schedule booked since the last call, if any.
    pub fn take_retrace_schedule(&mut self, vid: u32) -> Option<TimedPath> {
        let a = self.assignments.get_mut(&vid)?;
        if a.leg != Leg::Retrace {
            return None;
        }
        let b = a.booking.as_mut().filter(|b| !b.delivered)?;
        b.delivered = true;
        Some(b.path.clone())
    }

    /// The vehicle finished its retrace; its job is done.
    pub fn on_cycle_complete(&mut self, vid: u32, tick: u64) {
        if let Some(a) = self.assignments.remove(&vid) {
            self.jobs[a.job].1 = JobStatus::Completed { vehicle: vid, tick };
        }
    }

    /// Matches radar targets to the latest reported vehicle positions.
    pub fn associate_radar(&self, targets: &[TargetEstimate]) -> Vec<Option<u32>> {
        let poses: Vec<(u32, Position)> = self
            .fleet
            .iter()
            .filter_map(|(&id, f)| f.latest.map(|r| (id, Position::new(r.x_m, r.y_m))))
            .collect();
        associate(targets, &poses)
    }

    pub fn collect_garbage(&mut self, tick: u64) {
        self.table.collect_garbage(tick);
    }
}
