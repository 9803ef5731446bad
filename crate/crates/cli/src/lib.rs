//! Command line front end and local HTTP service for `curvegcn`.

pub mod commands;
pub mod server;
