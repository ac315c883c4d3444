pub mod cluster;
pub mod data;
pub mod error;
pub mod models;
pub mod nn;
pub mod service;
pub mod tensor;

pub use error::{FitError, Result};
