//! Command-line interface and HTTP service over trained ISIC model bundles.

pub mod cli;
pub mod service;
