//! Cooperative A* over `(node, heading, tick)` states.
//!
//! A vehicle moving from `a` to `b` claims both nodes for the whole move, and
//! a vehicle standing at a node claims it until it has fully arrived at the
//! next one. Plans are searched against the existing [`ReservationTable`]
//! and can be committed to it without conflicts.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet, VecDeque};

use super::{check_endpoint, PlanError, ReservationTable, VehicleId, OPEN_END};
use crate::grid::{Direction, GridMap, NodeId};

/// Tick cost of the primitive actions a vehicle can take between nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoveTiming {
    /// Straight move between neighbouring nodes, starting from rest.
    pub hop_ticks: u64,
    /// Extra time for a 90 degree turn in place before the hop.
    pub quarter_turn_ticks: u64,
    /// Extra time for a 180 degree turn in place before the hop.
    pub half_turn_ticks: u64,
    /// Granularity of a wait action.
    pub wait_ticks: u64,
}

impl MoveTiming {
    /// Hops only, no turning cost; waits last one hop.
    pub fn uniform(ticks_per_hop: u64) -> Self {
        let t = ticks_per_hop.max(1);
        Self { hop_ticks: t, quarter_turn_ticks: 0, half_turn_ticks: 0, wait_ticks: t }
    }

    fn turn_ticks(&self, quarter_turns: u32) -> u64 {
        match quarter_turns {
            0 => 0,
            1 => self.quarter_turn_ticks,
            _ => self.half_turn_ticks,
        }
    }

    fn tracks_heading(&self) -> bool {
        self.quarter_turn_ticks > 0 || self.half_turn_ticks > 0
    }

    /// Ticks to leave a node facing `heading` and arrive at the neighbour in `dir`.
    pub fn move_ticks(&self, heading: Option<Direction>, dir: Direction) -> u64 {
        let turns = heading.map_or(0, |h| h.quarter_turns_to(dir));
        self.hop_ticks + self.turn_ticks(turns)
    }

    fn horizon(&self, grid: &GridMap, hops: u32) -> u64 {
        10 * hops.max(grid.diameter()).max(1) as u64 * (self.hop_ticks + self.quarter_turn_ticks)
    }
}

/// One node of a timed route: the vehicle reaches the node centre at
/// `enter_tick` and starts moving on at `exit_tick`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimedStep {
    pub node: NodeId,
    pub enter_tick: u64,
    pub exit_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TimedPath {
    pub steps: Vec<TimedStep>,
}

impl TimedPath {
    /// A vehicle standing still at `node` from `tick`.
    pub fn stationary(node: NodeId, tick: u64) -> Self {
        Self { steps: vec![TimedStep { node, enter_tick: tick, exit_tick: tick }] }
    }

    pub fn start_tick(&self) -> u64 {
        self.steps.first().map_or(0, |s| s.enter_tick)
    }

    pub fn arrival_tick(&self) -> u64 {
        self.steps.last().map_or(0, |s| s.enter_tick)
    }

    pub fn first_node(&self) -> Option<NodeId> {
        self.steps.first().map(|s| s.node)
    }

    pub fn last_node(&self) -> Option<NodeId> {
        self.steps.last().map(|s| s.node)
    }

    /// Spatial projection with wait steps collapsed.
    pub fn nodes(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = Vec::with_capacity(self.steps.len());
        for s in &self.steps {
            if out.last() != Some(&s.node) {
                out.push(s.node);
            }
        }
        out
    }

    /// Heading after the final move, if the path moves at all.
    pub fn final_heading(&self) -> Option<Direction> {
        let n = self.nodes();
        n.windows(2).last().and_then(|w| Direction::between(w[0], w[1]))
    }

    /// Node claims implied by the path: each node from the moment the vehicle
    /// starts moving towards it until it has reached the next node; the final
    /// node is held open-ended.
    pub fn reservations(&self) -> Vec<(NodeId, u64, u64)> {
        let n = self.steps.len();
        (0..n)
            .map(|i| {
                let s = &self.steps[i];
                let start = if i == 0 { s.enter_tick } else { self.steps[i - 1].exit_tick };
                let end = if i + 1 == n { OPEN_END } else { self.steps[i + 1].enter_tick };
                (s.node, start, end)
            })
            .collect()
    }

    /// Appends `next`, which must start where this path ends, no earlier than
    /// its arrival.
    pub fn then(mut self, next: &TimedPath) -> Self {
        let Some(first) = next.steps.first() else {
            return self;
        };
        match self.steps.last_mut() {
            Some(last) => {
                assert_eq!(last.node, first.node, "legs must share the junction node");
                assert!(first.enter_tick >= last.enter_tick, "legs must not overlap in time");
                last.exit_tick = first.exit_tick;
                self.steps.extend_from_slice(&next.steps[1..]);
            }
            None => self.steps = next.steps.clone(),
        }
        self
    }

    /// Checks step ordering: `enter <= exit < next enter`, unit moves.
    pub fn is_well_formed(&self) -> bool {
        let steps_ok = self.steps.iter().all(|s| s.enter_tick <= s.exit_tick);
        let order_ok = self.steps.windows(2).all(|w| {
            w[0].exit_tick < w[1].enter_tick && (w[0].node == w[1].node || w[0].node.manhattan(w[1].node) == 1)
        });
        !self.steps.is_empty() && steps_ok && order_ok
    }
}

/// Parameters of one cooperative search.
#[derive(Debug, Clone)]
pub struct SpaceTimeRequest {
    pub vehicle: VehicleId,
    pub src: NodeId,
    pub dst: NodeId,
    pub start_tick: u64,
    /// Facing direction at `src`; `None` when unknown (turns priced at zero).
    pub heading: Option<Direction>,
    /// The vehicle may not leave `src` before this tick.
    pub earliest_departure: u64,
    /// How long `dst` must stay free after arrival; `None` means forever.
    pub goal_hold: Option<u64>,
    /// Nodes treated as blocked for this search, unless they are `src` or `dst`.
    pub avoid: BTreeSet<NodeId>,
}

impl SpaceTimeRequest {
    pub fn new(vehicle: VehicleId, src: NodeId, dst: NodeId, start_tick: u64) -> Self {
        Self {
            vehicle,
            src,
            dst,
            start_tick,
            heading: None,
            earliest_departure: start_tick,
            goal_hold: None,
            avoid: BTreeSet::new(),
        }
    }
}

/// Cooperative A* with unit hops of `ticks_per_hop` and a one-hop wait,
/// parking at `dst` on arrival.
pub fn plan_space_time(
    grid: &GridMap,
    table: &ReservationTable,
    vehicle: VehicleId,
    src: NodeId,
    dst: NodeId,
    start_tick: u64,
    ticks_per_hop: u64,
) -> Result<TimedPath, PlanError> {
    let req = SpaceTimeRequest::new(vehicle, src, dst, start_tick);
    plan_space_time_with(grid, table, &req, &MoveTiming::uniform(ticks_per_hop))
}

type StateKey = (NodeId, u8, u64);

const NO_HEADING: u8 = 4;

fn heading_code(d: Option<Direction>) -> u8 {
    d.map_or(NO_HEADING, |d| d as u8)
}

fn heading_of(code: u8) -> Option<Direction> {
    Direction::ALL.get(code as usize).copied()
}

fn spatially_reachable(grid: &GridMap, src: NodeId, dst: NodeId, passable: impl Fn(NodeId) -> bool) -> bool {
    let mut seen = HashSet::from([src]);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        if u == dst {
            return true;
        }
        for (_, m) in grid.neighbors_iter(u) {
            if passable(m) && seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    false
}

/// Builds steps from the state chain, merging consecutive waits.
fn steps_from_chain(chain: &[StateKey]) -> TimedPath {
    let mut steps: Vec<TimedStep> = Vec::new();
    for (i, &(node, _, tick)) in chain.iter().enumerate() {
        match steps.last_mut() {
            Some(last) if last.node == node => last.exit_tick = tick,
            _ => {
                if let Some(last) = steps.last_mut() {
                    last.exit_tick = chain[i - 1].2;
                }
                steps.push(TimedStep { node, enter_tick: tick, exit_tick: tick });
            }
        }
    }
    TimedPath { steps }
}

fn goal_end(tick: u64, hold: Option<u64>) -> u64 {
    hold.map_or(OPEN_END, |h| tick.saturating_add(h.max(1)))
}

pub fn plan_space_time_with(
    grid: &GridMap,
    table: &ReservationTable,
    req: &SpaceTimeRequest,
    timing: &MoveTiming,
) -> Result<TimedPath, PlanError> {
    let (src, dst, vehicle) = (req.src, req.dst, req.vehicle);
    check_endpoint(grid, src)?;
    check_endpoint(grid, dst)?;
    let no_path = PlanError::NoPath { from: src, to: dst };

    if !table.is_free(src, req.start_tick, req.start_tick + 1, vehicle) {
        let holder = table.conflict(src, req.start_tick, req.start_tick + 1, vehicle).unwrap_or(vehicle);
        return Err(PlanError::Conflict { node: src, holder });
    }
    if req.goal_hold.is_none() && table.is_parked_by_other(dst, vehicle) {
        return Err(no_path);
    }
    let passable = |n: NodeId| n == src || n == dst || !req.avoid.contains(&n);
    if !spatially_reachable(grid, src, dst, passable) {
        return Err(no_path);
    }

    let tracks = timing.tracks_heading();
    let start_code = if tracks { heading_code(req.heading) } else { NO_HEADING };
    let origin = req.start_tick.max(req.earliest_departure);
    let horizon_end = origin + timing.horizon(grid, src.manhattan(dst));
    let h = |n: NodeId| n.manhattan(dst) as u64 * timing.hop_ticks;

    let start: StateKey = (src, start_code, req.start_tick);
    let mut parent: HashMap<StateKey, StateKey> = HashMap::new();
    let mut seen: HashSet<StateKey> = HashSet::from([start]);
    let mut closed: HashSet<StateKey> = HashSet::new();
    let mut open = BinaryHeap::new();
    open.push(Reverse((h(src), src, start_code, req.start_tick)));

    while let Some(Reverse((_, node, code, tick))) = open.pop() {
        let key = (node, code, tick);
        if !closed.insert(key) {
            continue;
        }
        if node == dst && table.is_free(dst, tick, goal_end(tick, req.goal_hold), vehicle) {
            let mut chain = vec![key];
            let mut cur = key;
            while let Some(&p) = parent.get(&cur) {
                chain.push(p);
                cur = p;
            }
            chain.reverse();
            return Ok(steps_from_chain(&chain));
        }

        let mut push = |next: StateKey, open: &mut BinaryHeap<_>| {
            if next.2 <= horizon_end && !closed.contains(&next) && seen.insert(next) {
                parent.insert(next, key);
                let f = (next.2 - req.start_tick) + h(next.0);
                open.push(Reverse((f, next.0, next.1, next.2)));
            }
        };

        if tick < req.earliest_departure {
            let t2 = req.earliest_departure;
            if table.is_free(node, tick, t2, vehicle) {
                push((node, code, t2), &mut open);
            }
            continue;
        }

        for (dir, next) in grid.neighbors_iter(node) {
            if !passable(next) {
                continue;
            }
            let t2 = tick + timing.move_ticks(heading_of(code), dir);
            if table.is_free(node, tick, t2, vehicle) && table.is_free(next, tick, t2, vehicle) {
                let c = if tracks { dir as u8 } else { NO_HEADING };
                push((next, c, t2), &mut open);
            }
        }
        let t2 = tick + timing.wait_ticks.max(1);
        if table.is_free(node, tick, t2, vehicle) {
            push((node, code, t2), &mut open);
        }
    }
    Err(no_path)
}

/// Schedules a fixed node sequence (waits allowed, no detours) against the
/// table, parking at the last node on arrival.
pub fn plan_along(
    grid: &GridMap,
    table: &ReservationTable,
    vehicle: VehicleId,
    nodes: &[NodeId],
    start_tick: u64,
    heading: Option<Direction>,
    timing: &MoveTiming,
) -> Result<TimedPath, PlanError> {
    let mut seq: Vec<NodeId> = Vec::with_capacity(nodes.len());
    for &n in nodes {
        if seq.last() != Some(&n) {
            seq.push(n);
        }
    }
    let (Some(&src), Some(&dst)) = (seq.first(), seq.last()) else {
        return Err(PlanError::EmptyMemory(vehicle));
    };
    let no_path = PlanError::NoPath { from: src, to: dst };
    let mut dirs = Vec::with_capacity(seq.len());
    for w in seq.windows(2) {
        dirs.push(Direction::between(w[0], w[1]).ok_or(PlanError::InvalidNode(w[1]))?);
    }
    if !table.is_free(src, start_tick, start_tick + 1, vehicle) || table.is_parked_by_other(dst, vehicle) {
        return Err(no_path);
    }
    let last = seq.len() - 1;
    let horizon_end = start_tick + timing.horizon(grid, last as u32);
    let h = |i: usize| (last - i) as u64 * timing.hop_ticks;

    let mut parent: HashMap<(usize, u64), (usize, u64)> = HashMap::new();
    let mut seen = HashSet::from([(0usize, start_tick)]);
    let mut open = BinaryHeap::new();
    open.push(Reverse((h(0), 0usize, start_tick)));

    while let Some(Reverse((_, idx, tick))) = open.pop() {
        if idx == last && table.is_free(dst, tick, OPEN_END, vehicle) {
            let mut chain = vec![(seq[idx], 0u8, tick)];
            let mut cur = (idx, tick);
            while let Some(&p) = parent.get(&cur) {
                chain.push((seq[p.0], 0, p.1));
                cur = p;
            }
            chain.reverse();
            return Ok(steps_from_chain(&chain));
        }
        let node = seq[idx];
        let mut push = |next: (usize, u64), open: &mut BinaryHeap<_>| {
            if next.1 <= horizon_end && seen.insert(next) {
                parent.insert(next, (idx, tick));
                open.push(Reverse(((next.1 - start_tick) + h(next.0), next.0, next.1)));
            }
        };
        if idx < last {
            let facing = if idx == 0 { heading } else { Some(dirs[idx - 1]) };
            let t2 = tick + timing.move_ticks(facing, dirs[idx]);
            if table.is_free(node, tick, t2, vehicle) && table.is_free(seq[idx + 1], tick, t2, vehicle) {
                push((idx + 1, t2), &mut open);
            }
        }
        let t2 = tick + timing.wait_ticks.max(1);
        if table.is_free(node, tick, t2, vehicle) {
            push((idx, t2), &mut open);
        }
    }
    Err(no_path)
}
