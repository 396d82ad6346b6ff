//! Deterministic discrete-event simulator for message dissemination in
//! vehicular networks.
//!
//! A run combines a mobility source (synthetic highway or grid, or a SUMO
//! FCD trace), a radio model with obstacle shadowing, roadside base
//! stations and one of three dissemination protocols. Results are reduced
//! to delivery records and summarised per (protocol, density, seed).

pub mod cli;
pub mod config;
pub mod engine;
pub mod infra;
pub mod metrics;
pub mod mobility;
pub mod protocols;
pub mod radio;
pub mod sweep;
pub mod world;
