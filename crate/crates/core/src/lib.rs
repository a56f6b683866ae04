pub mod catalog;
pub mod cli;
pub mod config;
pub mod cone;
pub mod crweyl;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod jet;
pub mod linalg;
pub mod reduction;
pub mod report;
pub mod suites;
pub mod tolerance;

pub use error::{Error, Result};
