//! End-to-end model of a piezoresistive tactile sensing pad without the
//! hardware: grid geometry and frames, a bit-exact 100 Hz wire protocol
//! with a virtual device and resynchronizing decoder, SDF-based
//! Kelvin-Voigt contact simulation, (k_n, k_d) calibration with
//! histogram alignment, and 3D visuo-tactile point fusion.

pub mod calib;
pub mod error;
pub mod fusion;
pub mod pad;
pub mod sim;
pub mod wire;

pub use error::{Error, Result};
