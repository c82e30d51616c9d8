use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(ValidationReport),

    /// The surface absorption probability for one step exceeds one.
    #[error(
        "time step too coarse for this consumption rate: absorption probability {probability:.4} > 1 \
         (k = {rate:e} m/s, D = {diffusion:e} m^2/s, dt = {dt} s); reduce dt"
    )]
    TimeStepTooCoarse {
        probability: f64,
        rate: f64,
        diffusion: f64,
        dt: f64,
    },

    #[error("reflection did not converge after {iterations} iterations at ({x:e}, {y:e}, {z:e})")]
    ReflectionDiverged { iterations: usize, x: f64, y: f64, z: f64 },

    #[error("explicit solver unstable: dt = {dt} s exceeds the stable limit {limit} s")]
    Unstable { dt: f64, limit: f64 },

    #[error("negative concentration {value:e} at cell ({i}, {j})")]
    NegativeConcentration { value: f64, i: usize, j: usize },

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::InvalidConfig(_) | Error::Parse(_) | Error::Mismatch(_)
        )
    }
}
