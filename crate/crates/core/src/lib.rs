//! Simulation library for a hub-coordinated swarm of cargo vehicles moving
//! over a virtual-node grid.

// negated float comparisons reject NaN in parameter validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod grid;
pub mod hub;
pub mod planner;
pub mod radar;
pub mod rfnet;
pub mod sim;
pub mod vehicle;
