//! Flexibility areas and regulation-cost maps for active distribution
//! networks.
//!
//! The crate models a distribution network with switchable lines and
//! flexible units, poses AC optimal power flow problems in rectangular
//! voltage coordinates, traces the reachable P–Q region at the interface to
//! the upstream grid, and prices each reachable interface setpoint.
//!
//! Everything is generic over the scalar type; [`f64`] aliases live at the
//! crate root.

pub mod acropf;
pub mod boundary;
pub mod cases;
pub mod config;
pub mod dispatch;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod network;
pub mod nlp;
pub mod oracle;
pub mod scalar;

pub use error::{FlexError, Result};
pub use scalar::Scalar;

pub type NetworkCase = network::NetworkCase<f64>;
pub type QcpSolution = nlp::QcpSolution<f64>;
pub type QcpProblem = acropf::QcpProblem<f64>;
pub type OperatingPoint = oracle::OperatingPoint<f64>;
pub type FlexibilityBoundary = boundary::FlexibilityBoundary<f64>;
pub type SecureArea = boundary::SecureArea<f64>;
pub type DispatchPoint = dispatch::DispatchPoint<f64>;
pub type CostSurface = dispatch::CostSurface<f64>;
