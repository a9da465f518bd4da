//! Scheduling toolkit for camera-perception inference pipelines on
//! multi-chiplet NPU packages.
//!
//! The crate models a perception workload as a layer-level DAG
//! ([`workload::WorkloadGraph`]), attaches per-layer latency/energy costs
//! under output-stationary and weight-stationary dataflows
//! ([`cost::CostProfile`]), models the package mesh interconnect
//! ([`nop::McmSpec`]), and schedules the workload onto the chiplet grid with
//! a throughput-matching algorithm ([`schedule::throughput_match`]).
//! A brute-force design-space exploration over heterogeneous chiplet mixes
//! for the trunk quadrant lives in [`dse`].

pub mod cost;
pub mod dse;
pub mod nop;
pub mod presets;
pub mod report;
pub mod schedule;
pub mod workload;
