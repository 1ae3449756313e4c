//! Spiking ring-attractor simulation engine and calibration toolkit.
//!
//! A ring of leaky integrate-and-fire neurons holds a joint angle as a
//! localized activity bump; velocity commands shift the bump through an
//! antisymmetric coupling term, and a population-vector decoder reads the
//! angle back out. The crate also emulates a mixed-signal hardware mapping
//! of the same network (populations, integer connection counts, fan-in
//! budget) and ships the experiment harness and CLI used to characterize
//! both models.

pub mod angle;
pub mod calibration;
pub mod decoder;
pub mod discrete_hw;
pub mod engine;
pub mod error;
pub mod harness;
pub mod presets;
pub mod ring;

pub use error::{Result, RingError};
