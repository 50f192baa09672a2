pub mod analytics;
pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod model;
pub mod plot;
pub mod selftest;
pub mod sweep;
