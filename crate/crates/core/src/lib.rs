//! Depth and ego-motion estimation on cylindrical panoramic video.
//!
//! The crate is organised bottom-up:
//!
//! - [`camera`]: cylindrical and pinhole projection math.
//! - [`tensor`]: dense arrays with horizontally wrapping padding, convolution,
//!   bilinear sampling and finite differences, each with an analytic backward.
//! - [`synth`]: differentiable panoramic view synthesis and the loss stack.
//! - [`estimate`]: direct per-snippet optimisation, the toy depth/pose networks,
//!   training, checkpoints and the finite-difference gradient harness.
//! - [`datasets`]: cube-map stitching, equirectangular warping, frame filtering,
//!   cropping, sequencing, file formats and synthetic scenes.
//! - [`eval`]: depth metrics and snippet trajectory error.
//! - [`render`]: meshes, software rasterisation, omnidirectional stereo and
//!   anaglyphs.

pub mod camera;
pub mod datasets;
pub mod error;
pub mod estimate;
pub mod eval;
pub mod render;
pub mod synth;
pub mod tensor;

pub use camera::{CylCamera, CylCoord, PinholeCamera, Point3};
pub use error::{Error, Result};
pub use synth::{DepthState, LossConfig, Pose6};

pub use tensor::{EdgeMode, Kernel, Tensor};
