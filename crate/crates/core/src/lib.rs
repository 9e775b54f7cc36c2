pub mod analytic;
pub mod cli;
pub mod error;
pub mod feedback;
pub mod merit;
pub mod modeshape;
pub mod optimizer;
pub mod stats;
pub mod trajectory;
pub mod validation;

pub use error::{Error, Result};
