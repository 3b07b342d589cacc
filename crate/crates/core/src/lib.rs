pub mod error;
pub mod experiments;
pub mod imde;
pub mod integrators;
pub mod neural;
pub mod scalar;
pub mod series;
pub mod stats;
pub mod systems;

pub use error::{Error, Result};
pub use scalar::{Real, Scalar, MAX_NESTING};
pub use series::{Jet, VectorField};

pub type Jet64 = series::Jet<f64>;
pub type Jet32 = series::Jet<f32>;
pub type Tableau64 = integrators::ButcherTableau<f64>;
pub type Tableau32 = integrators::ButcherTableau<f32>;
pub type System64 = systems::BuiltinSystem<f64>;
pub type System32 = systems::BuiltinSystem<f32>;
pub type Mlp64 = neural::MlpParams<f64>;
pub type Mlp32 = neural::MlpParams<f32>;
