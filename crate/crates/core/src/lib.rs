pub mod asymptotics;
pub mod error;
pub mod fields;
pub mod greenbound;
pub mod linkforge;
pub mod nodaltrace;
pub mod specfun;
pub mod topology;

pub use error::{Error, Result};
