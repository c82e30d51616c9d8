//! Simulation and calibration toolkit for a signalling-molecule droplet
//! soaking into a bacteria-covered agar plate.
//!
//! The droplet shrinks at a constant height while releasing molecules into
//! the agar surface ([`droplet`]). Released molecules diffuse through the
//! agar cylinder, reflect off the side wall and the plate bottom, and are
//! consumed by a growing bacterial lawn on the top surface ([`growth`]).
//! Two engines integrate the same model:
//!
//! * [`pbs`], a stochastic particle simulator with counter-based random
//!   streams, so results do not depend on the worker count;
//! * [`pde`], a deterministic axisymmetric finite-volume solver used as an
//!   oracle for the particle engine.
//!
//! [`calibration`] recovers the soaking rate from measured droplet areas and
//! [`cli`] wires everything into the `soaksim` command-line tool.

pub mod calibration;
pub mod cli;
pub mod droplet;
pub mod error;
pub mod growth;
pub mod io;
pub mod model;
pub mod pbs;
pub mod pde;
pub mod rng;

pub use error::{Error, Result};
pub use model::{
    concentration_to_si, validate_config, ConcentrationUnit, DropletSpec, GrowthParams,
    PlateGeometry, SimulationConfig, SpeciesParams, ValidationReport, Violation,
};
