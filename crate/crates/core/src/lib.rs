//! Finite-volume solver for a chemotaxis model of virus infection with
//! saturated sensitivity `u / (1 + u)^alpha`, plus the monitors, parameter
//! sweeps and verification scenarios built on it.

pub mod config;
pub mod discretization;
pub mod grid;
pub mod model;
pub mod monitors;
pub mod output;
pub mod snapshot;
pub mod stepper;
pub mod sweep;
pub mod verify;

pub use config::{parse_config, Config, ConfigError};
pub use grid::{Field, Grid, GridError, State};
pub use model::{alpha_threshold, select_energy_exponent, Coefficients, ModelError, Params};
pub use stepper::{run, step, RunError, RunOptions, Scheme, StepControl};
