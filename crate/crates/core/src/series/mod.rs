//! Truncated power series and Taylor-mode evaluation of vector fields.

mod field;
mod flow;
mod jet;

pub(crate) use field::check_dim;
pub use field::{
    field_on_jet, single, ConstantField, FieldList, FieldSeries, LinearField, VectorField,
};
pub use flow::{
    exact_flow_jet, reference_flow, reference_trajectory, MAX_SUBSTEPS, REFERENCE_ORDER,
};
pub use jet::Jet;
