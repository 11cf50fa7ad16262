pub mod error;
pub mod kinematics;
pub mod material;
pub mod discretization;
pub mod statics;
pub mod dynamics;
pub mod oracle;
pub mod cli_io;

pub use error::{Error, Result};
