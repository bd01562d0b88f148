//! Frame reconstruction from event-camera streams.
//!
//! Every pixel's intensity trajectory is recovered independently by solving a
//! small Tikhonov-regularized least-squares problem over time. The normal
//! equations are symmetric positive-definite tridiagonal, so each pixel costs
//! a single O(N) elimination and the whole sensor is processed data-parallel.
//!
//! The crate is organised as a pipeline:
//!
//! * [`event`]: event types, text I/O and stream validation
//! * [`simulator`]: forward event-camera model used for ground truth
//! * [`cube`]: binning of the global event stream into count windows
//! * [`lambda`]: per-pixel, per-frame regularization weights
//! * [`solver`]: assembly and solution of the per-pixel systems
//! * [`render`]: normalization and netpbm encoding
//! * [`pipeline`]: end-to-end orchestration and run reports
//! * [`cli`]: command-line front end

pub mod cli;
pub mod cube;
mod error;
pub mod event;
pub mod lambda;
pub mod pipeline;
pub mod render;
pub mod simulator;
pub mod solver;

pub use cube::{build_cube, cube_stats, CubeConfig, CubeStats, DataCube};
pub use error::{Error, ParseErrorKind, Result};
pub use event::{
    parse_event_text, validate_stream, write_event_text, Event, EventStream, ParseOptions,
    Polarity, PolarityConvention, SensorGeometry, ValidationReport,
};
pub use lambda::{compute_lambda, lambda_scalar, LambdaConfig, LambdaField, LambdaMode};
pub use pipeline::{run_reconstruct, run_simulate, ReconstructionConfig, RunReport};
pub use render::{apply_colormap, normalize, ColorMap, NormalizationMode};
pub use simulator::{
    oracle_log_difference, simulate_pixel, simulate_scene, LuminanceSignal, SimulatorConfig,
};
pub use solver::{
    assemble_system, rhs_from_accum, solve_all, solve_pixel, solve_tridiagonal, FrameStack,
    PixelProblem, TridiagonalSystem,
};
