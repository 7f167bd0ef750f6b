pub mod bohr;
pub mod dynamics;
pub mod error;
pub mod homalgebra;
pub mod linalg;
pub mod report;
pub mod scenarios;

pub use error::{HomLieError, Result};
