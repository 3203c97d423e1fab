//! Localized invisible image watermarking.
//!
//! The library embeds an n-bit message into an image as a faint keyed pattern
//! scaled by a perceptual (just-noticeable-difference) heatmap, then recovers
//! it pixel-by-pixel: extraction produces a detection probability map plus one
//! probability map per message bit, so a watermark pasted into only part of an
//! image can be detected, decoded, and spatially localized. Clustering the
//! per-pixel decoded bits separates multiple different watermarks inside one
//! image.

pub mod augment;
pub mod carrier;
pub mod cluster;
pub mod codec;
pub mod config;
pub mod corpus;
pub mod detect;
pub mod error;
pub mod harness;
pub mod jnd;
pub mod maskgen;
pub mod metrics;
pub mod raster;

pub use error::{Error, Result};
