//! Eulerian poro-elastodynamics with inelastic strain, damage-type internal
//! variables and water diffusion, discretised by a fully implicit Rothe
//! scheme on a structured grid, with an independent audit of the discrete
//! energy balance.

pub mod audit;
pub mod error;
pub mod field;
pub mod linsolve;
pub mod material;
pub mod preset;
pub mod scalar;
pub mod scenario;
pub mod scheme;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision aliases of the generic types.
pub type Grid64 = field::Grid<f64>;
pub type Field64 = field::Field<f64>;
pub type State64 = scheme::State<f64>;
pub type Material64 = material::Material<f64>;
pub type Moduli64 = material::Moduli<f64>;
pub type SymTensor64 = tensor::SymTensor<f64>;
pub type InternalVec64 = tensor::InternalVec<f64>;
