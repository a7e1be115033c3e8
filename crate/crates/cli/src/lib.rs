//! Problem-file handling and command implementations behind the `ictmc` binary.

pub mod commands;
pub mod config;
pub mod problem;

pub use commands::{
    cmd_bounds, cmd_compare, cmd_info, cmd_solve, BoundsOutput, CommandError, CompareOutput, InfoOutput, Output,
    SolveOutput,
};
pub use config::{GambleSpec, Method, OutputFormat, RunConfig};
pub use problem::{load_problem, LoadError, ProblemFile};
