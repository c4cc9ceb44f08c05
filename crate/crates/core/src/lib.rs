//! Multi-hop downstream pressure and heterogeneous perimeter control.
//!
//! The crate models a road network as an absorbing Markov chain over links,
//! measures how congested the links a few hops downstream of every feeder are,
//! and uses that measure to split a region-wide inflow budget across feeders.
//! A mesoscopic grid simulator and an experiment harness are included.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod demand;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod network;
pub mod perturbation;
pub mod pressure;
pub mod sim;
pub mod toy;

pub use error::{Error, Result};
pub use graph::{build_extended_graph, transition_matrix, Edge, ExtendedGraph, Link, LinkId, LinkKind, TransitionMatrix, Vertex};
pub use pressure::{multi_hop_pressure, perimeter_pressures, PerimeterPressureVector, PressureVector, QueueDensityVector};
