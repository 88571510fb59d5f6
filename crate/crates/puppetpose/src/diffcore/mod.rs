//! Reverse-mode differentiation engine.
//!
//! Computation is recorded on a [`Tape`] as a sequence of coarse primitive
//! operations (kinematics, projection, warps, convolutions, losses), each of
//! which carries a hand-written backward pass. A single backward sweep from a
//! scalar output yields exact reverse-mode gradients for every leaf tensor.
//! [`gradcheck`] verifies any registered computation against central finite
//! differences.

mod gradcheck;
mod paramvec;
mod tape;
mod tensor;

pub use gradcheck::{gradcheck, gradcheck_fn, GradEntry, GradReport, DEFAULT_EPS, DEFAULT_TOL};
pub use paramvec::{ParameterVector, Slice};
pub use tape::{BuildFn, gradient, Op, Tape, ValueId};
pub use tensor::Tensor;
