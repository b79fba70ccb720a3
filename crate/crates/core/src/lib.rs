//! Slot-synchronous Monte-Carlo simulator for multihop rendezvous in
//! cognitive radio networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`topology`]: random connected deployments, unit-disk ground truth and
//!   asymmetric channel assignment.
//! - [`pr_activity`]: per-channel ON/OFF primary-radio occupancy.
//! - [`hopping`]: channel selection engines (dual modular clock, RCS, MCA).
//! - [`protocol`]: neighbour tables, coordinate-assisted handshake and
//!   termination policies.
//! - [`engine`]: the half-slot simulation loop.
//! - [`metrics`]: PTM/CTM per run and ATTR/ATM/PTDD across runs.
//! - [`experiments`]: scenario grids, the batch runner and CSV output.

pub mod engine;
pub mod experiments;
pub mod hopping;
pub mod metrics;
pub mod pr_activity;
pub mod protocol;
pub mod seed;
pub mod topology;

pub use engine::{run_once, RunConfig, RunRecord};
pub use hopping::Protocol;
pub use protocol::TerminationPolicy;
pub use topology::{ChannelId, Coordinates, GroundTopology, NodeId};
