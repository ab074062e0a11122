//! Experiment harness around `qnflow-core`: TOML configuration, named
//! presets, CSV output and matplotlib script generation.

pub mod config;
pub mod experiment;
pub mod plot;
pub mod presets;
