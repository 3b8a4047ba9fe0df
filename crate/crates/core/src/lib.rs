//! Extended-target tracking from monostatic ISAC communication echoes.
//!
//! The crate is `no_std` (with `alloc`) and contains every numerical piece of
//! the tracker: the echo simulator, adaptive beam control, the small neural
//! network toolkit with hand-written backward passes, the three-module
//! tracking network with its Kalman-style filtering stage, the staged training
//! curriculum, and geometric evaluation metrics. File formats, configuration
//! parsing and the command-line runner live in the `isac-track` crate.

#![no_std]

extern crate alloc;

pub mod beam;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod oracles;
pub mod seed;
pub mod sim;
pub mod tracknet;
pub mod train;

pub use error::{Error, Result};
pub use num_complex::Complex64;
