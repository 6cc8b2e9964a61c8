pub mod ball;
pub mod cubature;
pub mod error;
pub mod harmonics;
pub mod nnls;
pub mod pipeline;
pub mod quadrature;
pub mod reference;
pub mod special;
pub mod sphere;
pub mod weight;

pub use error::{Error, Result};
