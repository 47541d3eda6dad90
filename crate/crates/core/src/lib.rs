//! Numerical study of backward self-similar blow-up profiles for the
//! weighted reaction-diffusion equation du/dt = Lap(u) + |x|^sigma u^p in
//! the supercritical range: critical exponents, phase-space fields and
//! transforms, local analysis at the critical points, adaptive integration
//! with event detection, shooting classification, and profile
//! reconstruction.

pub mod dynsys;
pub mod error;
pub mod exponents;
pub mod integrator;
pub mod local;
pub mod profiles;

pub use error::{Error, Result};
pub use exponents::{Exponent, Regime, RegimeParams};
