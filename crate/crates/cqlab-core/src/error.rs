//! Error type shared by all solver and operator modules.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of grid operations, operator algebra, and solvers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// Grid construction rejected the requested shape or bounds.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// Two fields that must share a grid do not.
    #[error("grid mismatch in {context}")]
    GridMismatch { context: &'static str },

    /// Spectral differentiation requested along a non-periodic axis.
    #[error("spectral derivative requested on non-periodic {axis} axis")]
    NonPeriodicSpectral { axis: char },

    /// Derivative order outside the supported set {1, 2}.
    #[error("unsupported derivative order {0}, expected 1 or 2")]
    UnsupportedOrder(usize),

    /// Interpolation abscissae are not strictly increasing.
    #[error("abscissae not strictly increasing at index {index}")]
    NonMonotoneAbscissae { index: usize },

    /// Averaging window contains no grid nodes.
    #[error("averaging window [{a}, {b}] contains no grid nodes")]
    EmptyWindow { a: f64, b: f64 },

    /// Kernel specification rejected at construction.
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    /// Amplitude fell below the floor where a node-free state is required.
    #[error("amplitude node detected: |psi| = {min_abs:.3e} < {floor:.3e} at node ({ix}, {iy})")]
    NodeDetected {
        min_abs: f64,
        floor: f64,
        ix: usize,
        iy: usize,
    },

    /// Phase accumulates a nonzero winding around the y axis.
    #[error("phase winding {winding} detected around the y axis at column {index}")]
    WindingDetected { winding: i64, index: usize },

    /// State norm too far from 1 where a normalized state is required.
    #[error("state not normalized: |norm - 1| = {defect:.3e}")]
    NotNormalized { defect: f64 },

    /// Measurement region contains no grid nodes.
    #[error("measurement region has zero measure on the grid")]
    ZeroMeasureRegion,

    /// Lagrangian map Jacobian reached the caustic tolerance.
    #[error("caustic formed at t = {time:.6}")]
    CausticFormed { time: f64 },

    /// A characteristic left the representable domain.
    #[error("trajectory escaped the box at t = {time:.6} (label index {label})")]
    FlowEscaped { time: f64, label: usize },

    /// Requested time is not a stored flow time.
    #[error("time {time:.6} is not on the stored time grid")]
    TimeNotStored { time: f64 },

    /// Zeroth-order amplitude fell below the floor during an evolution.
    #[error("amplitude floor breached at t = {time:.6}: min R = {min_r:.3e}")]
    AmplitudeFloorBreached { time: f64, min_r: f64 },

    /// A field left the finite range during time stepping.
    #[error("blow-up detected at t = {time:.6} in {what}")]
    BlowUp { time: f64, what: &'static str },

    /// Parameter outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
