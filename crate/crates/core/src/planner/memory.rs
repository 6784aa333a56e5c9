use std::collections::HashMap;

use super::{Path, PlanError, VehicleId};
use crate::grid::NodeId;

/// Per-vehicle record of nodes entered, kept so a vehicle can drive its
/// outbound route back in reverse.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathMemory {
    table: HashMap<VehicleId, Vec<NodeId>>,
}

impl PathMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_node(&mut self, vehicle: VehicleId, node: NodeId) {
        self.table.entry(vehicle).or_default().push(node);
    }

    pub fn recorded(&self, vehicle: VehicleId) -> &[NodeId] {
        self.table.get(&vehicle).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn clear(&mut self, vehicle: VehicleId) {
        self.table.remove(&vehicle);
    }

    /// Reverse of the recorded sequence; the vehicle's memory is cleared.
    pub fn retrace(&mut self, vehicle: VehicleId) -> Result<Path, PlanError> {
        match self.table.remove(&vehicle) {
            Some(mut nodes) if !nodes.is_empty() => {
                nodes.reverse();
                Ok(Path::from_nodes(nodes))
            }
            _ => Err(PlanError::EmptyMemory(vehicle)),
        }
    }
}
