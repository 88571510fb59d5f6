//! Differentiable articulated-puppet pipeline.
//!
//! The crate models a human figure as a kinematic skeleton plus a 2D part
//! puppet. Local limb vectors are turned into a canonical 3D pose by forward
//! kinematics, projected through a restricted perspective camera, and used to
//! deform a canonical part dictionary into depth-composited soft part maps
//! that can be rendered, segmented, and differentiated end to end. On top of
//! that sit the self-supervision losses, a decoupled training schedule for a
//! toy encoder/decoder pair, an analysis-by-synthesis pose fitter, and the
//! pose/segmentation metrics used by the test suite.
//!
//! Pixel loops and batch work are data-parallel when the `parallel` feature
//! (default) is enabled; disabling it yields a dependency-free sequential
//! build with identical results.

pub mod camera;
pub mod config;
pub mod diffcore;
pub mod error;
pub mod fitter;
pub mod geometry;
pub mod gradsuite;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod nn;
pub(crate) mod parallel;
pub mod puppet;
pub mod selfsup;

pub use error::{Error, Result};
