//! Lidar-inertial odometry with motion-adaptive sub-frames, an iterated
//! error-state Kalman filter with a fixed-lag backward smoother, and a
//! robocentric two-layer voxel map.

pub mod bench;
pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod map;
pub mod pipeline;
pub mod propagation;
pub mod sim;
pub mod smoother;
pub mod state;
pub mod subframe;
pub mod update;

pub use error::{Error, Result};

/// Initial gravity magnitude, m/s².
pub const GRAVITY: f64 = 9.81;
