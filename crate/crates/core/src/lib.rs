pub mod certify;
pub mod cli;
pub mod config;
pub mod error;
pub mod forecast;
pub mod frac;
pub mod ident;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
