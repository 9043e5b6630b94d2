//! Symbol and frame error rates of LoRa under same-spreading-factor
//! interference.

pub mod awgn_rates;
pub mod channel;
pub mod cli;
pub mod error;
pub mod interf_rates;
pub mod mc;
pub mod pattern;
pub mod phy;
pub mod quadrature;
pub mod special;

pub use error::{Error, Result};
