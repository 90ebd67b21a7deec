//! Multispectral (RGB+NIR) evaluation toolkit: radiometric preprocessing,
//! severity-graded naturalistic corruptions with channel-group-aware
//! randomness, dataset chipping/tiling/splitting, and perceptual-score /
//! corruption-robustness metrics over model prediction manifests.

pub mod cli;
pub mod config;
pub mod corrupt;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod probes;
pub mod radiometric;
pub mod raster;
pub mod report;
pub mod rng;
