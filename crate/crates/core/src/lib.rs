pub mod ensemble;
pub mod error;
pub mod fft;
pub mod guidance;
pub mod measurement;
pub mod propagator;
pub mod scenarios;
pub mod subsystem;
pub mod wavefield;

pub use error::{Error, Result};
