//! Directed accumulator grids.
//!
//! A directed accumulation scatters every source cell into a target grid at
//! coordinates given by one or more sampling grids; slicing gathers back
//! through the same grids and is the exact adjoint of accumulation. On top of
//! that pair this crate builds polar accumulators (with parametric slicing),
//! circular accumulators along image-gradient rays, finite-difference
//! gradient checking, and PGM / DGT serialization.
//!
//! All arithmetic is `f64`. Operators run on the current rayon pool and are
//! bit-identical for every worker count.

pub mod accumulate;
pub mod circular;
mod engine;
pub mod error;
pub mod filter;
pub mod gradcheck;
pub mod io;
pub mod kernels;
pub mod polar;
pub mod tensor;

pub use accumulate::{
    accumulate, accumulate_backward_grid, accumulate_backward_input, accumulate_grid,
    accumulate_weights, grid_sample, normalize, slice, slice_backward, AccumulatorGrid, GridGrad,
    GridSet, SamplingGrid, TargetShape, DEFAULT_EPSILON,
};
pub use circular::{
    circular_accumulate, circular_grids, detect_circle_center, sobel_gradient_field, Band,
    CircularAccumulation, CircularConfig, GradientField,
};
pub use error::{Error, Result};
pub use filter::{box_filter, gaussian_filter, GridFilter};
pub use gradcheck::{check, compensated_dot, finite_difference, GradReport};
pub use kernels::{kernel_weight, taps, KernelKind, Tap};
pub use polar::{
    parametric_slice, parametric_slice_backward, polar_accumulate, polar_grid,
    polar_roundtrip_filter, polar_sample, polar_slice, ParametricSlicer, PolarConfig,
};
pub use tensor::{mesh_grids, MeshGrids, Plane, Tensor};
