//! Runge–Kutta methods on numeric and jet-valued states.

mod rk;
mod tableau;

pub use rk::{rk_increment, rk_step, rk_step_series, STAGE_MAX_ITERATIONS, STAGE_TOLERANCE};
pub use tableau::{ButcherTableau, TableauSpec, BUILTIN_TABLEAUX};
