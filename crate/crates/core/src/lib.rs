//! Scheduling library and deterministic discrete-event simulator for DAG
//! analytics jobs spread over several data centers.

pub mod af;
pub mod coord;
pub mod error;
pub mod explore;
pub mod fairsched;
pub mod model;
pub mod parades;
pub mod sim;

pub use error::{Error, Result};
