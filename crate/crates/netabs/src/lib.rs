//! Compositional abstractions for networks of discrete-time switched linear
//! subsystems: local simulation-function certificates, abstraction
//! construction, small-gain aggregation and closed-loop simulation.

pub mod builder;
pub mod bundle;
pub mod certify;
pub mod error;
pub mod linalg;
pub mod microgrid;
pub mod model;
pub mod pipeline;
pub mod registry;
pub mod simulator;
pub mod smallgain;
pub mod synthesis;

pub use error::{Error, ErrorClass, Result};
