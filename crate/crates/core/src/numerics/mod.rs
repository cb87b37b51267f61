//! Discretisation substrate shared by both solvers: uniform grids, value
//! fields with multilinear interpolation, Gauss–Legendre quadrature, and
//! the catch/arrival expectation primitives.

mod expect;
mod field;
mod grid;
mod quad;

pub use expect::{delta_expect, expect_field, expect_over_catch, expect_with, hazard, CatchKernel, DeltaEvaluator};
pub use field::{AxisKind, ValueField};
pub use grid::{default_mass_max, Axis, GridSpec};
pub use quad::{running_integral, GaussLegendre};
