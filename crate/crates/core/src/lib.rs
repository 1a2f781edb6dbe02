//! Deterministic discrete-event simulation of interdomain routing where a
//! subset of ASes hands control to a shared SDN controller.

pub mod bgp;
pub mod controller;
pub mod failover;
pub mod metrics;
pub mod network;
pub mod scenario;
pub mod sim;
pub mod topology;
