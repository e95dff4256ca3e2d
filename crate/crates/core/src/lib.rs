//! Simulation and verification toolkit for the two-user MIMO X-network with
//! column-cancellation space-time block codes and local-CSIT precoding.

pub mod constellation;
pub mod decoder;
pub mod error;
pub mod numerics;
pub mod sim;
pub mod stbc;
pub mod verify;
pub mod xnetwork;

pub use constellation::Constellation;
pub use error::{Error, Result};
pub use stbc::{CcSpec, GsFunction, StbcCode};
