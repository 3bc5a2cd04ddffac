//! Transient stability simulation with adaptive nonlinear model reduction.
//!
//! This crate simulates multi-machine power systems through faults and
//! topology changes. The system can be split into a study area, kept fully
//! nonlinear, and an external area replaced by a balanced-truncation reduced
//! model whose nonlinear machine equations are selectively retained near the
//! boundary. During a run the external representation switches between the
//! full equations, a hybrid partially linearized model, and a purely linear
//! model, driven by fault status and rotor-angle deviations.
//!
//! Everything is generic over the scalar type through [`Float`]; the `*64`
//! aliases below fix `f64` for ordinary use.

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod hybrid;
pub mod linearize;
pub mod mor;
pub mod netmodel;
pub mod scalar;
pub mod simulate;
pub(crate) mod sparse;

pub use error::{Error, Result};
pub use scalar::Float;

/// `f64` network description.
pub type BusNetwork64 = netmodel::BusNetwork<f64>;
/// `f64` reduced admittance blocks.
pub type ReducedYMatrix64 = netmodel::ReducedYMatrix<f64>;
/// `f64` reduced network with recovery operator.
pub type ReducedNetwork64 = netmodel::ReducedNetwork<f64>;
/// `f64` stacked machine states.
pub type SystemState64 = dynamics::SystemState<f64>;
/// `f64` boundary inputs and setpoints.
pub type BoundaryInput64 = dynamics::BoundaryInput<f64>;
/// `f64` linearized model.
pub type LinearModel64 = linearize::LinearModel<f64>;
/// `f64` balanced truncation result.
pub type BalancedReduction64 = mor::BalancedReduction<f64>;
/// `f64` hybrid model.
pub type HybridModel64 = hybrid::HybridModel<f64>;
/// `f64` simulated trajectory.
pub type Trajectory64 = simulate::Trajectory<f64>;
