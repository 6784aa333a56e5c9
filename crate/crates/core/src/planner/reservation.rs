use std::collections::BTreeMap;

use super::{PlanError, TimedPath, VehicleId};
use crate::grid::NodeId;

/// End tick used for bookings that never expire (a parked vehicle).
pub const OPEN_END: u64 = u64::MAX;

/// Half-open claim `[start, end)` on one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Reservation {
    pub start: u64,
    pub end: u64,
    pub vehicle: VehicleId,
}

impl Reservation {
    fn overlaps(&self, start: u64, end: u64) -> bool {
        self.start < end && start < self.end
    }
}

/// Fleet-wide space-time ledger. Intervals held by different vehicles on the
/// same node never overlap; a vehicle may overlap its own bookings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReservationTable {
    entries: BTreeMap<NodeId, Vec<Reservation>>,
}

impl ReservationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reserve(&mut self, vehicle: VehicleId, node: NodeId, start: u64, end: u64) -> Result<(), PlanError> {
        if start >= end {
            return Err(PlanError::BadInterval { start, end });
        }
        if let Some(holder) = self.conflict(node, start, end, vehicle) {
            return Err(PlanError::Conflict { node, holder });
        }
        let list = self.entries.entry(node).or_default();
        list.push(Reservation { start, end, vehicle });
        list.sort_unstable();
        Ok(())
    }

    /// First other vehicle (lowest start) holding `node` somewhere in `[start, end)`.
    pub fn conflict(&self, node: NodeId, start: u64, end: u64, vehicle: VehicleId) -> Option<VehicleId> {
        self.entries
            .get(&node)?
            .iter()
            .find(|r| r.vehicle != vehicle && r.overlaps(start, end))
            .map(|r| r.vehicle)
    }

    pub fn is_free(&self, node: NodeId, start: u64, end: u64, vehicle: VehicleId) -> bool {
        start >= end || self.conflict(node, start, end, vehicle).is_none()
    }

    /// Whether another vehicle holds `node` from some tick onward without end.
    pub fn is_parked_by_other(&self, node: NodeId, vehicle: VehicleId) -> bool {
        self.entries
            .get(&node)
            .is_some_and(|l| l.iter().any(|r| r.vehicle != vehicle && r.end == OPEN_END))
    }

    pub fn intervals(&self, node: NodeId) -> &[Reservation] {
        self.entries.get(&node).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Reservation)> {
        self.entries.iter().flat_map(|(n, l)| l.iter().map(move |r| (*n, r)))
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Books every interval of `path` for `vehicle`, all or nothing.
    pub fn commit(&mut self, vehicle: VehicleId, path: &TimedPath) -> Result<(), PlanError> {
        let claims = path.reservations();
        for &(node, start, end) in &claims {
            if start >= end {
                return Err(PlanError::BadInterval { start, end });
            }
            if let Some(holder) = self.conflict(node, start, end, vehicle) {
                return Err(PlanError::Conflict { node, holder });
            }
        }
        for (node, start, end) in claims {
            let list = self.entries.entry(node).or_default();
            list.push(Reservation { start, end, vehicle });
            list.sort_unstable();
        }
        Ok(())
    }

    /// Drops `vehicle`'s claims from `tick` onward; intervals straddling
    /// `tick` are cut to end there.
    pub fn release_from(&mut self, vehicle: VehicleId, tick: u64) {
        for list in self.entries.values_mut() {
            list.retain_mut(|r| {
                if r.vehicle != vehicle || r.end <= tick {
                    return true;
                }
                if r.start >= tick {
                    return false;
                }
                r.end = tick;
                true
            });
        }
        self.entries.retain(|_, l| !l.is_empty());
    }

    /// Removes one exact interval previously booked by `vehicle`. Returns
    /// whether it was present.
    pub fn cancel(&mut self, vehicle: VehicleId, node: NodeId, start: u64, end: u64) -> bool {
        let Some(list) = self.entries.get_mut(&node) else {
            return false;
        };
        let target = Reservation { start, end, vehicle };
        let Some(pos) = list.iter().position(|r| *r == target) else {
            return false;
        };
        list.remove(pos);
        if list.is_empty() {
            self.entries.remove(&node);
        }
        true
    }

    /// Removes intervals that ended at or before `tick`.
    pub fn collect_garbage(&mut self, tick: u64) {
        for list in self.entries.values_mut() {
            list.retain(|r| r.end > tick);
        }
        self.entries.retain(|_, l| !l.is_empty());
    }

    /// Exhaustive pairwise scan for overlapping intervals held by different
    /// vehicles. Returns the offending node, if any.
    pub fn find_overlap(&self) -> Option<NodeId> {
        for (node, list) in &self.entries {
            for (i, a) in list.iter().enumerate() {
                for b in &list[i + 1..] {
                    if a.vehicle != b.vehicle && a.overlaps(b.start, b.end) {
                        return Some(*node);
                    }
                }
            }
        }
        None
    }
}
