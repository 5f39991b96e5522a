//! Desk-scale laboratory for higher-order abstract Cauchy problems.

pub mod backends;
pub mod dynamics;
pub mod eigenfields;
pub mod error;
pub mod linalg;
pub mod polyspec;
pub mod recurrence;
pub mod reduction;

pub use error::{LabError, Result};
