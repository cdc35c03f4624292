//! Problem files, run configuration, reports and the command-line front end
//! for single-leader multi-follower games.

pub mod cli;
pub mod config;
pub mod format;
pub mod report;

pub use format::{load_problem, save_problem};
