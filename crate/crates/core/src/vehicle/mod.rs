//! One cargo vehicle: job state machine, differential-drive motion between
//! virtual nodes and the radio-facing message outbox.
//!
//! Motion is turn-in-place followed by a straight drive, each wheel speed
//! held by its own PID loop over a first-order motor. On arrival within a
//! tenth of the node pitch the pose snaps onto the node and the wheels stop.

mod control;

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::grid::{Direction, GridMap, NodeId, Position};
use crate::planner::{MoveTiming, Path, PathMemory, PlanError, TimedPath};
use crate::rfnet::{Message, TelemetryPayload};

pub use control::{motor_step, pid_update, Drive, PidState, VehicleParams, WheelDynamics};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VehicleError {
    #[error("vehicle {vehicle}: {event} is not allowed in state {state}")]
    IllegalTransition { vehicle: u32, state: VehicleState, event: &'static str },
    #[error("timestep {dt_s} s exceeds the motor stability limit {limit_s} s")]
    TimestepTooLarge { dt_s: f64, limit_s: f64 },
    #[error("schedule does not match the vehicle's route")]
    ScheduleMismatch,
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VehicleState {
    Idle,
    Loaded,
    AwaitingRoute,
    Transit,
    Unloading,
    Retracing,
}

impl VehicleState {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        use VehicleState::*;
        [Idle, Loaded, AwaitingRoute, Transit, Unloading, Retracing].get(code as usize).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            VehicleState::Idle => "IDLE",
            VehicleState::Loaded => "LOADED",
            VehicleState::AwaitingRoute => "AWAITING_ROUTE",
            VehicleState::Transit => "TRANSIT",
            VehicleState::Unloading => "UNLOADING",
            VehicleState::Retracing => "RETRACING",
        }
    }
}

impl fmt::Display for VehicleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Degrees in `[0, 360)`, east = 0, counter-clockwise.
    pub heading_deg: f64,
}

impl Pose {
    pub fn position(&self) -> Position {
        Position::new(self.x, self.y)
    }
}

/// A node to drive to, and the earliest tick the move towards it may begin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Waypoint {
    pub node: NodeId,
    pub not_before: u64,
}

impl Waypoint {
    /// Holds the vehicle until a schedule is applied.
    pub const HOLD: u64 = u64::MAX;
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Motion {
    Holding,
    Turning { target_deg: f64, sign: f64 },
    Driving { target: NodeId },
}

/// Outbound route and the nodes actually entered on the way back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleRecord {
    pub outbound: Vec<NodeId>,
    pub retraced: Vec<NodeId>,
    /// Pose at completion in micrometres.
    pub final_pose: (u64, u64),
    pub completed_tick: u64,
}

#[derive(Debug, Clone)]
pub struct Vehicle {
    pub id: u32,
    pub params: VehicleParams,
    state: VehicleState,
    home: NodeId,
    dest: Option<NodeId>,
    approach_target: Option<NodeId>,
    pose: Pose,
    node: NodeId,
    drive: Drive,
    motion: Motion,
    queue: VecDeque<Waypoint>,
    outbox: Vec<Message>,
    outbound: Vec<NodeId>,
    retraced: Vec<NodeId>,
    cycles: Vec<CycleRecord>,
    arrived_at_pickup: bool,
}

fn wrap_deg(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

impl Vehicle {
    pub fn new(id: u32, home: NodeId, heading_deg: f64, params: VehicleParams, grid: &GridMap) -> Result<Self, VehicleError> {
        let p = grid.node_to_position(home).map_err(|_| PlanError::InvalidNode(home))?;
        Ok(Self {
            id,
            params,
            state: VehicleState::Idle,
            home,
            dest: None,
            approach_target: None,
            pose: Pose { x: p.x, y: p.y, heading_deg: wrap_deg(heading_deg) },
            node: home,
            drive: Drive::new(&params),
            motion: Motion::Holding,
            queue: VecDeque::new(),
            outbox: Vec::new(),
            outbound: Vec::new(),
            retraced: Vec::new(),
            cycles: Vec::new(),
            arrived_at_pickup: false,
        })
    }

    pub fn state(&self) -> VehicleState {
        self.state
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn home(&self) -> NodeId {
        self.home
    }

    pub fn destination(&self) -> Option<NodeId> {
        self.dest
    }

    /// Last node the vehicle snapped onto.
    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn wheels(&self) -> WheelDynamics {
        self.drive.wheels
    }

    pub fn heading(&self) -> Direction {
        Direction::from_heading(self.pose.heading_deg)
    }

    pub fn speed(&self) -> f64 {
        self.drive.wheels.linear_speed(&self.params)
    }

    pub fn waypoints(&self) -> impl Iterator<Item = &Waypoint> {
        self.queue.iter()
    }

    pub fn is_approaching(&self) -> bool {
        self.approach_target.is_some()
    }

    pub fn is_moving(&self) -> bool {
        !matches!(self.motion, Motion::Holding)
    }

    pub fn completed_cycles(&self) -> &[CycleRecord] {
        &self.cycles
    }

    /// Nodes the vehicle body may touch right now.
    pub fn occupied_nodes(&self) -> Vec<NodeId> {
        match self.motion {
            Motion::Driving { target } => vec![self.node, target],
            _ => vec![self.node],
        }
    }

    /// Messages waiting to be transmitted, oldest first.
    pub fn take_outbox(&mut self) -> Vec<Message> {
        std::mem::take(&mut self.outbox)
    }

    /// True once, after an approach leg ends at the pickup node.
    pub fn take_pickup_arrival(&mut self) -> bool {
        std::mem::take(&mut self.arrived_at_pickup)
    }

    fn illegal(&self, event: &'static str) -> VehicleError {
        VehicleError::IllegalTransition { vehicle: self.id, state: self.state, event }
    }

    fn vid(&self) -> u8 {
        self.id as u8
    }

    fn load_queue(&mut self, path: &TimedPath) {
        self.queue = waypoints_from(path).into();
    }

    /// Pickup order while idle: drive to `pickup` along `path`. A fresh
    /// outbound record starts at the current node.
    pub fn on_pickup_order(&mut self, pickup: NodeId, path: &TimedPath, memory: &mut PathMemory) -> Result<(), VehicleError> {
        if self.state != VehicleState::Idle {
            return Err(self.illegal("pickup order"));
        }
        if self.approach_target == Some(pickup) {
            self.outbox.push(Message::Ack { vehicle: self.vid() });
            return Ok(());
        }
        if self.approach_target.is_some() || path.first_node() != Some(self.node) || path.last_node() != Some(pickup) {
            return Err(self.illegal("pickup order"));
        }
        memory.clear(self.id);
        memory.record_node(self.id, self.node);
        self.approach_target = Some(pickup);
        self.load_queue(path);
        self.outbox.push(Message::Ack { vehicle: self.vid() });
        Ok(())
    }

    /// The load switch: an idle vehicle at rest becomes loaded and asks the
    /// hub for its destination.
    pub fn press_load_switch(&mut self) -> Result<(), VehicleError> {
        if self.state != VehicleState::Idle || self.approach_target.is_some() {
            return Err(self.illegal("load switch"));
        }
        self.state = VehicleState::Loaded;
        self.outbox.push(Message::Activate { vehicle: self.vid() });
        Ok(())
    }

    /// Called once the activation request has gone out on the radio.
    pub fn mark_activation_sent(&mut self) {
        if self.state == VehicleState::Loaded {
            self.state = VehicleState::AwaitingRoute;
        }
    }

    /// Queues another activation request (retry while waiting for a route).
    pub fn resend_activation(&mut self) {
        if self.state == VehicleState::AwaitingRoute {
            self.outbox.push(Message::Activate { vehicle: self.vid() });
        }
    }

    /// Destination received. A repeat of the current destination during
    /// transit is acknowledged again and otherwise ignored.
    pub fn on_destination(&mut self, dest: NodeId, path: &TimedPath) -> Result<(), VehicleError> {
        match self.state {
            VehicleState::Loaded | VehicleState::AwaitingRoute => {
                if path.first_node() != Some(self.node) || path.last_node() != Some(dest) {
                    return Err(VehicleError::ScheduleMismatch);
                }
                self.state = VehicleState::Transit;
                self.dest = Some(dest);
                self.load_queue(path);
                self.outbox.push(Message::Ack { vehicle: self.vid() });
                Ok(())
            }
            VehicleState::Transit if self.dest == Some(dest) => {
                self.outbox.push(Message::Ack { vehicle: self.vid() });
                Ok(())
            }
            _ => Err(self.illegal("destination")),
        }
    }

    /// Cargo removed: start driving the recorded route backwards. The
    /// waypoints are free-running until [`Vehicle::apply_schedule`] or
    /// [`Vehicle::hold_route`] is called.
    pub fn unload(&mut self, memory: &mut PathMemory) -> Result<Path, VehicleError> {
        if self.state != VehicleState::Unloading {
            return Err(self.illegal("unload"));
        }
        let path = memory.retrace(self.id)?;
        self.outbound = path.nodes.iter().rev().copied().collect();
        self.retraced = vec![self.node];
        self.queue = path.nodes.iter().map(|&node| Waypoint { node, not_before: 0 }).collect();
        self.state = VehicleState::Retracing;
        Ok(path)
    }

    /// Replaces the departure times of the pending route with `path`'s.
    pub fn apply_schedule(&mut self, path: &TimedPath) -> Result<(), VehicleError> {
        let mut pending: Vec<NodeId> = self.queue.iter().map(|w| w.node).collect();
        if pending.first() != Some(&self.node) {
            pending.insert(0, self.node);
        }
        if path.nodes() != pending {
            return Err(VehicleError::ScheduleMismatch);
        }
        self.load_queue(path);
        Ok(())
    }

    pub fn hold_route(&mut self) {
        for w in &mut self.queue {
            w.not_before = Waypoint::HOLD;
        }
    }

    pub fn telemetry(&self) -> Message {
        let mm = |v: f64| (v * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16;
        let cdeg = ((self.pose.heading_deg * 100.0).round() as u32 % 36_000) as u16;
        Message::Telemetry {
            vehicle: self.vid(),
            data: TelemetryPayload {
                x_mm: mm(self.pose.x),
                y_mm: mm(self.pose.y),
                speed_mm_s: mm(self.speed().abs()),
                heading_cdeg: cdeg,
                state: self.state.code(),
            },
        }
    }

    fn finish_route(&mut self, tick: u64) {
        self.drive.brake();
        self.motion = Motion::Holding;
        match self.state {
            VehicleState::Transit => self.state = VehicleState::Unloading,
            VehicleState::Retracing => {
                self.state = VehicleState::Idle;
                self.dest = None;
                let snap = |v: f64| (v * 1e6).round() as u64;
                self.cycles.push(CycleRecord {
                    outbound: std::mem::take(&mut self.outbound),
                    retraced: std::mem::take(&mut self.retraced),
                    final_pose: (snap(self.pose.x), snap(self.pose.y)),
                    completed_tick: tick,
                });
            }
            VehicleState::Idle if self.approach_target.take().is_some() => self.arrived_at_pickup = true,
            _ => {}
        }
    }

    /// Advances motion by one timestep starting at `tick`.
    pub fn step(&mut self, grid: &GridMap, dt_s: f64, tick: u64, memory: &mut PathMemory) -> Result<Pose, VehicleError> {
        let active = matches!(self.state, VehicleState::Transit | VehicleState::Retracing) || self.approach_target.is_some();
        if !active {
            return Ok(self.pose);
        }
        while self.queue.front().is_some_and(|w| w.node == self.node) && matches!(self.motion, Motion::Holding) {
            self.queue.pop_front();
        }
        let Some(next) = self.queue.front().copied() else {
            self.finish_route(tick);
            return Ok(self.pose);
        };

        if let Motion::Holding = self.motion {
            if tick < next.not_before {
                return Ok(self.pose);
            }
            let dir = Direction::between(self.node, next.node).ok_or(PlanError::InvalidNode(next.node))?;
            let diff = (dir.heading_deg() - self.pose.heading_deg + 540.0).rem_euclid(360.0) - 180.0;
            self.motion = if diff.abs() < 1e-9 {
                self.pose.heading_deg = dir.heading_deg();
                Motion::Driving { target: next.node }
            } else {
                // a half turn goes counter-clockwise
                let sign = if diff > 0.0 || (diff + 180.0).abs() < 1e-9 { 1.0 } else { -1.0 };
                Motion::Turning { target_deg: dir.heading_deg(), sign }
            };
        }

        let p = self.params;
        let rate = p.cruise_wheel_rate();
        match self.motion {
            Motion::Turning { target_deg, sign } => {
                self.drive.regulate(-sign * rate, sign * rate, &p, dt_s)?;
                let yaw_deg = self.drive.wheels.yaw_rate(&p).to_degrees() * dt_s;
                let remaining = sign * ((target_deg - self.pose.heading_deg + 540.0).rem_euclid(360.0) - 180.0);
                let remaining = if remaining < -1e-9 { remaining + 360.0 } else { remaining };
                if sign * yaw_deg >= remaining {
                    self.pose.heading_deg = wrap_deg(target_deg);
                    self.drive.brake();
                    self.motion = Motion::Driving { target: next.node };
                } else {
                    self.pose.heading_deg = wrap_deg(self.pose.heading_deg + yaw_deg);
                }
            }
            Motion::Driving { target } => {
                self.drive.regulate(rate, rate, &p, dt_s)?;
                let v = self.drive.wheels.linear_speed(&p);
                let goal = grid.node_to_position(target).map_err(|_| PlanError::InvalidNode(target))?;
                let remaining = self.pose.position().distance(goal);
                let advance = (v * dt_s).max(0.0);
                if remaining - advance <= grid.spacing_m() / 10.0 {
                    self.pose.x = goal.x;
                    self.pose.y = goal.y;
                    self.node = target;
                    memory.record_node(self.id, target);
                    if self.state == VehicleState::Retracing {
                        self.retraced.push(target);
                    }
                    self.queue.pop_front();
                    self.drive.brake();
                    self.motion = Motion::Holding;
                    if self.queue.is_empty() {
                        self.finish_route(tick);
                    }
                } else {
                    // along the goal vector: axis-aligned moves keep the other coordinate exact
                    self.pose.x += advance * (goal.x - self.pose.x) / remaining;
                    self.pose.y += advance * (goal.y - self.pose.y) / remaining;
                }
            }
            Motion::Holding => {}
        }
        Ok(self.pose)
    }
}

/// Converts a timed route into waypoints: each node after the first may be
/// approached once the previous step's exit tick is reached.
pub fn waypoints_from(path: &TimedPath) -> Vec<Waypoint> {
    path.steps
        .windows(2)
        .filter(|w| w[0].node != w[1].node)
        .map(|w| Waypoint { node: w[1].node, not_before: w[0].exit_tick })
        .collect()
}

/// Measures move durations by driving a throwaway vehicle, then adds a
/// margin and rounds up to whole wait quanta.
pub fn calibrate_timing(params: &VehicleParams, spacing_m: f64, dt_s: f64, wait_ticks: u64) -> Result<MoveTiming, VehicleError> {
    let grid = GridMap::new(2.0 * spacing_m, 2.0 * spacing_m, spacing_m).map_err(|_| PlanError::InvalidNode(NodeId::new(0, 0)))?;
    let centre = NodeId::new(1, 1);
    let measure = |heading_deg: f64| -> Result<u64, VehicleError> {
        let mut v = Vehicle::new(0, centre, heading_deg, *params, &grid)?;
        let mut memory = PathMemory::new();
        v.approach_target = Some(NodeId::new(2, 1));
        v.queue.push_back(Waypoint { node: NodeId::new(2, 1), not_before: 0 });
        for tick in 0..1_000_000u64 {
            v.step(&grid, dt_s, tick, &mut memory)?;
            if v.node == NodeId::new(2, 1) {
                return Ok(tick + 1);
            }
        }
        Err(PlanError::NoPath { from: centre, to: NodeId::new(2, 1) }.into())
    };
    let q = wait_ticks.max(1);
    let padded = |ticks: u64| {
        let t = ticks + ticks / 20 + 2;
        t.div_ceil(q) * q
    };
    let hop = padded(measure(0.0)?);
    let quarter = padded(measure(90.0)?).saturating_sub(hop).max(q);
    let half = padded(measure(180.0)?).saturating_sub(hop).max(quarter);
    Ok(MoveTiming { hop_ticks: hop, quarter_turn_ticks: quarter, half_turn_ticks: half, wait_ticks: q })
}
