//! Configuration, orchestration and output formats for the `qwien` command-line tool.

pub mod config;
pub mod output;
pub mod quantity;
pub mod run;
