//! Std companion to `relbridge-core`: corpus file formats, TOML
//! configuration, the JSON Lines record store, threaded matrix execution,
//! plots and the `relbridge` command line.

pub mod cli;
pub mod config;
pub mod formats;
pub mod io;
pub mod parallel;
pub mod plot;
pub mod store;
