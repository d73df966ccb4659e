//! Hybrid tensor networks: isometric MPS channels contracted with their
//! conjugate through trainable diagonal reduction operators, which interpolate
//! between partial traces and post-selection.

pub mod error;
pub mod experiment;
pub mod model;
pub mod oracle;
pub mod qcompile;
pub mod tn;
pub mod train;
pub mod verify;

pub use error::{HtnError, Result};
