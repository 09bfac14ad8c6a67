pub mod controller;
pub mod error;
pub mod geometry;
pub mod rig;
pub mod robot;
pub mod simulation;

pub use error::{Error, Result};
