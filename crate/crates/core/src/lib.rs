//! Joint calibration of a reconfigurable intelligent surface (RIS) and user
//! positioning from uplink OFDM channel parameters.
//!
//! A base station receives pilots from one or more users over two paths: a
//! direct line-of-sight path and a path reflected by a RIS with unknown
//! position and yaw. From the eight geometric channel parameters observable
//! per user (two angle pairs, two coupled direction sums at the RIS, two
//! delays) the crate computes Fisher-information lower bounds on the joint
//! state (RIS position, RIS yaw, user positions, clock offsets) and estimates
//! that state with a grid-search initializer followed by weighted
//! Gauss-Newton refinement.
//!
//! Modules:
//! - [`geometry`]: directions, rotations, angle parameterizations, delays
//! - [`channel`]: steering vectors, two-path channel, sounding plans, noise
//! - [`scene`]: scenario container tying geometry, arrays and waveform together
//! - [`fim`]: channel-parameter FIM, effective FIM, state FIM, bound extraction
//! - [`estimator`]: measurement synthesis, initialization, Gauss-Newton, ambiguity checks

pub mod channel;
pub mod estimator;
pub mod fim;
pub mod geometry;
pub mod scene;

/// Speed of light in m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299.792_458e6;

/// Errors surfaced by the core computations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Two points coincide (or nearly so) where a direction is required.
    #[error("degenerate geometry: points separated by {separation} m")]
    DegenerateGeometry { separation: f64 },

    /// Vector/matrix dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A matrix that must be inverted is singular or too ill-conditioned.
    #[error("singular matrix: {context}")]
    SingularMatrix { context: &'static str },

    /// The candidate ray misses the user prior box.
    #[error("ray does not intersect the user prior area")]
    RayMissesPrior,

    /// No feasible candidate in the initialization grid.
    #[error("initialization failed: {reason}")]
    InitFailure { reason: &'static str },

    /// A scene is unobservable (blind); bounds are infinite.
    #[error("singular scene: state Fisher information is rank deficient")]
    SingularScene,

    /// Invalid configuration value.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
