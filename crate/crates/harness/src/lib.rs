//! Command-line harness around `proact-core`: chat-completion gateway with
//! cassettes, configuration, file formats and the batch runner.

pub mod app;
pub mod batch;
pub mod cli;
pub mod config;
pub mod gateway;
pub mod io;
