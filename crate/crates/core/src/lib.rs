// NaN-rejecting `!(x > 0.0)` checks, index loops over stencils and full-width
// reference constants are intended.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::excessive_precision
)]

pub mod ansatz;
pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod frac_kernel;
pub mod output;
pub mod profile;
pub mod quad;
pub mod vec2;

pub use error::{Error, Result};
pub use frac_kernel::{gamma_fn, make_constants, FracOrder, KernelConstants};
pub use vec2::Vec2;
