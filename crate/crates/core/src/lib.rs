//! Simulation and certification toolkit for L1 adaptive control of
//! uncertain systems with time-varying parameters.

pub mod bounds;
pub mod controller;
pub mod l1norm;
pub mod lti;
pub mod plant;
pub mod reference;
pub mod signals;
pub mod scenario;
pub mod sim;
