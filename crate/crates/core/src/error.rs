use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),

    #[error("parse error at row {row}, column `{column}`: cannot parse {value:?}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("integrity error: vehicle {vehicle_id}, frame {frame}: {reason}")]
    Integrity {
        vehicle_id: u32,
        frame: u32,
        reason: String,
    },

    #[error("lookup error: vehicle {vehicle_id} not present at frame {frame}")]
    NotPresent { vehicle_id: u32, frame: u32 },

    #[error("lookup error: vehicle {0} not in dataset")]
    UnknownVehicle(u32),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("fitting error: {0}")]
    Fit(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("input error: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model format error at line {line}: {reason}")]
    ModelFormat { line: usize, reason: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}
