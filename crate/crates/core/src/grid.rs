//! Virtual-node decomposition of a rectangular terrain.
//!
//! Nodes sit on a regular lattice with pitch `spacing_m`; node `(0, 0)` is the
//! metric origin and `(nx - 1, ny - 1)` the far corner. Connectivity is
//! 4-neighbour only.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack used when deciding whether a pitch divides the terrain exactly.
const FLOOR_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("terrain dimensions and spacing must be positive (got {width} x {height}, pitch {spacing})")]
    NonPositiveDimension { width: f64, height: f64, spacing: f64 },
    #[error("node pitch {spacing} exceeds the smaller terrain side {side}")]
    SpacingTooLarge { spacing: f64, side: f64 },
    #[error("node {0} is outside the grid")]
    NodeOutOfRange(NodeId),
    #[error("position ({x}, {y}) is outside the terrain")]
    OutOfTerrain { x: f64, y: f64 },
}

/// Grid address of a virtual node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub ix: u16,
    pub iy: u16,
}

impl NodeId {
    pub const fn new(ix: u16, iy: u16) -> Self {
        Self { ix, iy }
    }

    /// Hop distance on the 4-connected lattice, ignoring blocked nodes.
    pub fn manhattan(self, other: NodeId) -> u32 {
        (self.ix as i32 - other.ix as i32).unsigned_abs() + (self.iy as i32 - other.iy as i32).unsigned_abs()
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.ix, self.iy)
    }
}

/// Metric position relative to the terrain origin (x east, y north).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Cardinal move between 4-connected nodes. Declaration order is the
/// canonical expansion order used by every planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    East,
    North,
    West,
    South,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::East, Direction::North, Direction::West, Direction::South];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::East => (1, 0),
            Direction::North => (0, 1),
            Direction::West => (-1, 0),
            Direction::South => (0, -1),
        }
    }

    pub fn heading_deg(self) -> f64 {
        match self {
            Direction::East => 0.0,
            Direction::North => 90.0,
            Direction::West => 180.0,
            Direction::South => 270.0,
        }
    }

    /// Direction of the unit move `from -> to`, if the nodes are lattice neighbours.
    pub fn between(from: NodeId, to: NodeId) -> Option<Direction> {
        let dx = to.ix as i32 - from.ix as i32;
        let dy = to.iy as i32 - from.iy as i32;
        Direction::ALL.into_iter().find(|d| d.delta() == (dx, dy))
    }

    /// Nearest cardinal direction to a heading in degrees.
    pub fn from_heading(heading_deg: f64) -> Direction {
        let q = (heading_deg.rem_euclid(360.0) / 90.0).round() as i64 % 4;
        Direction::ALL[q as usize]
    }

    /// Number of quarter turns (0, 1 or 2) needed to face `other`.
    pub fn quarter_turns_to(self, other: Direction) -> u32 {
        let diff = (other as i32 - self as i32).rem_euclid(4);
        if diff == 3 {
            1
        } else {
            diff as u32
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    width_m: f64,
    height_m: f64,
    spacing_m: f64,
    nx: u16,
    ny: u16,
    blocked: BTreeSet<NodeId>,
}

impl GridMap {
    pub fn new(width_m: f64, height_m: f64, spacing_m: f64) -> Result<Self, GridError> {
        let finite = width_m.is_finite() && height_m.is_finite() && spacing_m.is_finite();
        if !finite || width_m <= 0.0 || height_m <= 0.0 || spacing_m <= 0.0 {
            return Err(GridError::NonPositiveDimension { width: width_m, height: height_m, spacing: spacing_m });
        }
        let side = width_m.min(height_m);
        if spacing_m > side {
            return Err(GridError::SpacingTooLarge { spacing: spacing_m, side });
        }
        let count = |extent: f64| ((extent / spacing_m) + FLOOR_EPS).floor() as u16 + 1;
        Ok(Self {
            width_m,
            height_m,
            spacing_m,
            nx: count(width_m),
            ny: count(height_m),
            blocked: BTreeSet::new(),
        })
    }

    pub fn width_m(&self) -> f64 {
        self.width_m
    }

    pub fn height_m(&self) -> f64 {
        self.height_m
    }

    pub fn spacing_m(&self) -> f64 {
        self.spacing_m
    }

    pub fn nx(&self) -> u16 {
        self.nx
    }

    pub fn ny(&self) -> u16 {
        self.ny
    }

    pub fn node_count(&self) -> usize {
        self.nx as usize * self.ny as usize
    }

    /// Longest Manhattan distance between two nodes.
    pub fn diameter(&self) -> u32 {
        (self.nx as u32 - 1) + (self.ny as u32 - 1)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.ix < self.nx && node.iy < self.ny
    }

    pub fn check(&self, node: NodeId) -> Result<NodeId, GridError> {
        if self.contains(node) {
            Ok(node)
        } else {
            Err(GridError::NodeOutOfRange(node))
        }
    }

    pub fn is_blocked(&self, node: NodeId) -> bool {
        self.blocked.contains(&node)
    }

    pub fn blocked(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.blocked.iter().copied()
    }

    pub fn block(&mut self, node: NodeId) -> Result<(), GridError> {
        self.check(node)?;
        self.blocked.insert(node);
        Ok(())
    }

    pub fn unblock(&mut self, node: NodeId) {
        self.blocked.remove(&node);
    }

    /// Dense index in row-major order (`iy * nx + ix`).
    pub fn index(&self, node: NodeId) -> usize {
        node.iy as usize * self.nx as usize + node.ix as usize
    }

    pub fn node_at(&self, index: usize) -> NodeId {
        NodeId::new((index % self.nx as usize) as u16, (index / self.nx as usize) as u16)
    }

    /// All nodes in ascending `NodeId` order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nx).flat_map(move |ix| (0..self.ny).map(move |iy| NodeId::new(ix, iy)))
    }

    pub fn node_to_position(&self, node: NodeId) -> Result<Position, GridError> {
        self.check(node)?;
        Ok(Position::new(node.ix as f64 * self.spacing_m, node.iy as f64 * self.spacing_m))
    }

    pub fn in_terrain(&self, pos: Position) -> bool {
        pos.x >= 0.0 && pos.y >= 0.0 && pos.x <= self.width_m && pos.y <= self.height_m
    }

    /// Snap a metric position to its closest node. Exact midpoints go to the
    /// lower index on each axis.
    pub fn position_to_nearest_node(&self, pos: Position) -> Result<NodeId, GridError> {
        if !pos.x.is_finite() || !pos.y.is_finite() || !self.in_terrain(pos) {
            return Err(GridError::OutOfTerrain { x: pos.x, y: pos.y });
        }
        // The lattice is separable, so the nearest node minimises each axis independently.
        let snap = |v: f64, n: u16| -> u16 {
            let lower = (v / self.spacing_m).floor();
            let lower_pos = lower * self.spacing_m;
            let upper_pos = (lower + 1.0) * self.spacing_m;
            let idx = if (upper_pos - v) < (v - lower_pos) { lower + 1.0 } else { lower };
            (idx.max(0.0) as u16).min(n - 1)
        };
        Ok(NodeId::new(snap(pos.x, self.nx), snap(pos.y, self.ny)))
    }

    /// Neighbour one step in `dir`, if in bounds (blocked or not).
    pub fn step(&self, node: NodeId, dir: Direction) -> Option<NodeId> {
        let (dx, dy) = dir.delta();
        let ix = node.ix as i32 + dx;
        let iy = node.iy as i32 + dy;
        if ix < 0 || iy < 0 || ix >= self.nx as i32 || iy >= self.ny as i32 {
            return None;
        }
        Some(NodeId::new(ix as u16, iy as u16))
    }

    /// Unblocked in-bounds 4-neighbours, ordered East, North, West, South.
    pub fn neighbors(&self, node: NodeId) -> Vec<NodeId> {
        self.neighbors_iter(node).map(|(_, n)| n).collect()
    }

    pub(crate) fn neighbors_iter(&self, node: NodeId) -> impl Iterator<Item = (Direction, NodeId)> + '_ {
        Direction::ALL
            .into_iter()
            .filter_map(move |d| self.step(node, d).map(|n| (d, n)))
            .filter(move |(_, n)| !self.is_blocked(*n))
    }
}
