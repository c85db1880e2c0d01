pub mod error;
pub mod linalg;
pub mod metzler;
pub mod nelder_mead;
pub mod search;
pub mod system;
pub mod transform;

pub use error::{Error, Result};
pub mod bounds;
pub mod catalog;
pub mod lyapunov;
pub mod sim;
pub mod config;
pub mod report;
pub mod analyze;
pub mod reproduce;
