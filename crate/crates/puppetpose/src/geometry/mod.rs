//! Skeleton, canonical coordinate frame, and kinematics.

pub mod kinematics;
pub mod pose;
pub mod skeleton;
pub mod vec3;

pub use kinematics::{
    align_canonical, face_vector, forward_kinematics, inverse_kinematics, parent_frame,
    template_local_pose, FkOp,
};
pub use pose::{flip_pose_lr, CanonicalPose, LocalPose, WorldPose};
pub use skeleton::{Limb, Skeleton};
