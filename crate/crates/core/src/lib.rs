//! Twisted principal bundles with connection, given as Čech data over a
//! central extension `H → E → G`, and their holonomy functors.

pub mod catalog;
pub mod catgroup;
pub mod cech;
pub mod dual;
pub mod error;
pub mod expm;
pub mod expr;
pub mod families;
pub mod forms;
pub mod geometry;
pub mod holonomy;
pub mod lie;
pub mod reconstruct;

pub use error::{Error, Result};
