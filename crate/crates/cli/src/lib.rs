//! Configuration files, experiment presets and result files for the
//! `loopmem` command-line tool.

pub mod config;
pub mod output;
pub mod presets;
pub mod report;
