pub mod error;
pub mod linalg;
pub mod model;

pub use error::{Error, Result};
pub mod superop;
pub mod oracle;
pub mod mps;
pub mod observables;
pub mod dkca;
pub mod experiment;
