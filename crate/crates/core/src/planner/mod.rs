//! Route planning over the virtual-node grid.
//!
//! Four single-agent shortest-path algorithms (all on unit hop costs), a
//! space-time reservation ledger with a cooperative A* that plans around
//! other vehicles' bookings, and the per-vehicle path memory used to
//! retrace a trip.

mod memory;
mod reservation;
mod search;
mod spacetime;

use thiserror::Error;

use crate::grid::{GridMap, NodeId};

pub use memory::PathMemory;
pub use reservation::{Reservation, ReservationTable, OPEN_END};
pub use search::{astar, bellman_ford, dijkstra, floyd_warshall, DistanceMatrix, FLOYD_WARSHALL_MAX_NODES};
pub use spacetime::{plan_along, plan_space_time, plan_space_time_with, MoveTiming, SpaceTimeRequest, TimedPath, TimedStep};

pub type VehicleId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("no path from {from} to {to}")]
    NoPath { from: NodeId, to: NodeId },
    #[error("node {0} is outside the grid or blocked")]
    InvalidNode(NodeId),
    #[error("grid has {nodes} nodes; all-pairs search is limited to {limit}")]
    GridTooLarge { nodes: usize, limit: usize },
    #[error("reservation interval [{start}, {end}) is empty")]
    BadInterval { start: u64, end: u64 },
    #[error("node {node} is already reserved by vehicle {holder}")]
    Conflict { node: NodeId, holder: VehicleId },
    #[error("no recorded path for vehicle {0}")]
    EmptyMemory(VehicleId),
}

/// A spatial route: consecutive nodes are 4-neighbours, `cost` counts hops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub cost: u32,
}

impl Path {
    pub fn from_nodes(nodes: Vec<NodeId>) -> Self {
        let cost = nodes.len().saturating_sub(1) as u32;
        Self { nodes, cost }
    }

    pub fn source(&self) -> Option<NodeId> {
        self.nodes.first().copied()
    }

    pub fn destination(&self) -> Option<NodeId> {
        self.nodes.last().copied()
    }

    /// Checks the path against the grid: every node valid and unblocked,
    /// every step a unit move, and `cost` equal to the hop count.
    pub fn is_valid_on(&self, grid: &GridMap) -> bool {
        if self.nodes.is_empty() || self.cost as usize != self.nodes.len() - 1 {
            return false;
        }
        if self.nodes.iter().any(|n| !grid.contains(*n) || grid.is_blocked(*n)) {
            return false;
        }
        self.nodes.windows(2).all(|w| w[0].manhattan(w[1]) == 1)
    }
}

fn check_endpoint(grid: &GridMap, node: NodeId) -> Result<(), PlanError> {
    if grid.contains(node) && !grid.is_blocked(node) {
        Ok(())
    } else {
        Err(PlanError::InvalidNode(node))
    }
}
