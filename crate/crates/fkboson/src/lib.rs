//! Experiment runner for the `fkboson-core` estimators: configuration,
//! file formats, the worker pool, the check suite and the CLI commands.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::needless_range_loop)]

pub mod checks;
pub mod commands;
pub mod config;
pub mod exec;
pub mod io;
