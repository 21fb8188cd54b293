//! Performance estimation for first-order methods that use linear operators.

use openblas_src as _;

pub mod classes;
pub mod closedform;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod methods;
pub mod reconstruct;
pub mod sdp;
pub mod worstcase;

pub use error::{PepError, Result};
