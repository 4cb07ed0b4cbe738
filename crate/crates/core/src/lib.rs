//! Synthesis and simulation of delayed decentralized LQG controllers for a
//! two-actuator (PZT + stepper) wavelength loop.

pub mod delay;
pub mod error;
pub mod linalg;
pub mod lti;
pub mod plant;
pub mod report;
pub mod riccati;
pub mod scenario;
pub mod sim;
pub mod synthesis;

pub use error::{Error, ErrorClass, Result};
