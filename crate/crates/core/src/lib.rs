pub mod control;
pub mod controller;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod mode;
pub mod ofu;
pub mod planner;
pub mod simulator;

pub use error::{Error, Result};
