pub mod barycenters;
pub mod bubbles;
pub mod combinatorics;
pub mod domain;
pub mod error;
pub mod functional;
pub mod linalg;
pub mod morseflow;

pub use error::{Error, Result};
