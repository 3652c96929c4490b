//! Direct, Doppler-aware odometry for spinning FMCW radar.
//!
//! The estimator registers each polar scan against a Cartesian local map
//! (correcting motion and Doppler distortion on the fly) and, for radars with
//! an alternating up/down chirp pattern, adds a velocity objective comparing
//! the GP-infilled up- and down-chirp images. A synthetic radar simulator and
//! KITTI/RPE metrics close the loop for testing.

pub mod bias;
pub mod config;
pub mod dataset;
pub mod doppler;
pub mod error;
pub mod geometry;
pub mod gp_infill;
pub mod metrics;
pub mod motion;
pub mod pipeline;
pub mod registration;
pub mod sim;
pub mod solver;
pub mod types;

pub use config::{Config, Mode};
pub use error::{Error, Result};
pub use geometry::{angle_to_rot, Pose2};
pub use types::{Chirp, Grid, GyroSeries, LocalMap, RadarScan, ScanState};
