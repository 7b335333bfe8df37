//! Stability certificates and transient simulation for ad hoc DC microgrids
//! with droop-controlled sources and constant power loads.

pub mod certificates;
pub mod commands;
pub mod controllers;
pub mod dynamics;
pub mod error;
pub mod load_flow;
pub mod network;
pub mod output;
pub mod ode;
pub mod potentials;
pub mod random;
pub mod scenario;

pub use error::{GridError, Result};
pub use network::{Bus, BusKind, LineParams, LoadParams, NetworkGraph, SourceParams};
