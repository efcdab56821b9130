//! Unsupervised anomaly detection over drone telemetry.
//!
//! Three detectors each produce a nonnegative degree of abnormality for a
//! timestamp: an autoencoder over IMU orientation and motion, an autoencoder
//! over the magnetometer, and a Siamese network that estimates how far the
//! camera image has rotated away from a normal reference frame. A weighted
//! sum of the three degrees decides whether the timestamp is abnormal.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angle;
pub mod datagen;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod imu;
pub mod label;
pub mod raster;

pub use error::{Error, Result};
pub use label::Label;
pub use raster::GrayImage;
