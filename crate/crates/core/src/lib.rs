//! Downfacing visual-inertial odometry toolkit.
//!
//! Three interchangeable frame-to-frame trackers ([`orb`], [`px4flow`],
//! [`superpoint`]) feed a planar rigid-body motion estimator ([`rigid`]) whose
//! output is fused with IMU and time-of-flight height readings in an EKF
//! ([`fusion`]). [`dataset`] loads and synthesises sequences, [`eval`] scores
//! trajectories, and [`pipeline`] / [`bench`] tie everything together.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod imgproc;
pub mod orb;
pub mod pipeline;
pub mod px4flow;
pub mod rigid;
pub mod superpoint;

pub use error::{Error, Result};
pub use imgproc::Image8;
pub use rigid::{RigidMotion2D, TrackedMatch};
