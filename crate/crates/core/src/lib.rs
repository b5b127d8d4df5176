pub mod baselines;
pub mod config;
pub mod controller;
pub mod error;
pub mod harmonic;
pub mod hmpc;
pub mod model;
pub mod reference;
pub mod sim;
pub mod socp;
pub mod verify;

pub use error::{Error, Result};
