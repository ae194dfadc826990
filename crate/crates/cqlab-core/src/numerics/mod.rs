//! Grids, sampled fields, derivatives, quadrature, and interpolation used by
//! every solver in the crate.

pub mod deriv;
pub mod fft;
pub mod grid;
pub mod interp;
pub mod quad;

pub use deriv::{
    derivative_1d, derivative_line_nonperiodic, flux_divergence_line, flux_divergence_nonperiodic,
    fornberg_weights, partial_derivative, partial_derivative_complex,
    partial_derivative_nonperiodic, DerivativeMode,
};
pub use grid::{Axis, ComplexField2D, Grid1D, Grid2D, RealField1D, RealField2D};
pub use interp::{interpolate_monotone, lagrange6_uniform, lagrange_uniform_weights, Pchip};
pub use quad::{
    boundary_mass, cumulative_hermite, integrate_1d, integrate_x, integrate_xy, integrate_y,
    l1_distance_1d, norm_l2, total_probability,
};
