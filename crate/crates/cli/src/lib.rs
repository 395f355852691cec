//! Command-line tools and the HTTP editing service.

pub mod commands;
pub mod data;
pub mod service;
