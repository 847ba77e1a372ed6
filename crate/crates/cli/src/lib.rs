//! Scenario driver library behind the `stopt` binary: configuration
//! loading, mask presets, run reporting, and the experiment presets.

pub mod audit;
pub mod config;
pub mod masks;
pub mod report;
pub mod scenario;
