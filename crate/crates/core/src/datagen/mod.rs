//! Synthetic data: rotated image pairs, procedural scenes, IMU streams with
//! injected faults, and camera frame streams.

pub mod pairs;
pub mod procedural;
pub mod rotate;
pub mod streams;

pub use pairs::{make_angle_pairs, AnglePairSplit};
pub use procedural::{procedural_corpus, procedural_scene, SceneStyle};
pub use rotate::{inscribed_scale, rotate_image};
pub use streams::{make_frame_stream, make_imu_stream, FaultMenu, LabeledTimestamp, SyntheticRunSpec};
