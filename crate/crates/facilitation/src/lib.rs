//! HTTP API and command-line front end over the session engine.

pub mod api;
pub mod auth;
pub mod cli;
pub mod config;
