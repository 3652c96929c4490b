//! Synthetic FMCW radar, gyro and ground truth.

mod scene;
mod sensor;
mod trajectory;

pub use scene::{NoiseParams, Pattern, RadarParams, Reflector, Scene, PRESETS};
pub use sensor::{emit_dataset, synth_gyro, synth_scan, EmitSummary, Simulation};
pub use trajectory::{MotionProfile, Sinusoid, Trajectory};
