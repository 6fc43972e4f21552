//! Numerical core for the autocatalytic zymogen activation reaction:
//! mass-action simulation, quasi-steady-state reductions, reduction-validity
//! diagnostics and kinetic parameter estimation.
//!
//! All types are immutable values and all operations are pure, so everything
//! here can be used from multiple threads without synchronisation.

pub mod diagnostics;
pub mod estimation;
pub mod export;
pub mod model;
pub mod ode;
pub mod reductions;

pub use model::{
    derived, DerivedQuantities, Equilibrium, InitialConditions, ModelConfig, ModelError,
    RateConstants, Stability, State, System,
};
pub use ode::{
    detect_min_distance, detect_tube_entry, integrate, t_inf, IntegrationSettings, OdeError,
    Trajectory,
};
