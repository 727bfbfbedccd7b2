pub mod curve;
pub mod energy;
pub mod error;
pub mod flow;
pub mod gradient;
pub mod io;
pub mod jet;
pub mod loja;
pub mod scalar;
pub mod spectral;
pub mod suite;

pub use curve::{Backend, ClosedCurve};
pub use error::{Error, Result};
