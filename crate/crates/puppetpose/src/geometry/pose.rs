//! Pose value types: local vectors, canonical positions, world positions.

use super::skeleton::Skeleton;
use super::vec3::{self, Vec3};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Parent-relative unit limb vectors, one per joint.
///
/// Torso joints are fixed by the canonical template and carry zero entries;
/// every free joint's entry is a unit vector expressed in its parent frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalPose {
    pub vectors: Vec<Vec3>,
}

impl LocalPose {
    pub fn validate(&self, skel: &Skeleton, tol: f64) -> Result<()> {
        if self.vectors.len() != skel.joint_count() {
            return Err(Error::InvalidInput("local pose has wrong joint count".into()));
        }
        for &j in skel.free_topo() {
            let n = vec3::norm(self.vectors[j]);
            if (n - 1.0).abs() > tol {
                return Err(Error::InvalidInput(format!(
                    "local vector for joint {j} has norm {n:.9}, expected 1"
                )));
            }
        }
        Ok(())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_rows3(&self.vectors)
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        let n = t.shape()[0];
        Self { vectors: (0..n).map(|i| t.row3(i)).collect() }
    }
}

/// View-invariant 3D joint positions: pelvis at the origin, face vector
/// along +X, bone lengths equal to the skeleton constants.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalPose {
    pub positions: Vec<Vec3>,
}

impl CanonicalPose {
    pub fn validate(&self, skel: &Skeleton, tol: f64) -> Result<()> {
        if vec3::norm(self.positions[skel.pelvis()]) > tol {
            return Err(Error::InvalidInput("canonical pelvis not at origin".into()));
        }
        let face = super::kinematics::face_vector(&self.positions, skel)?;
        if (face[0] - 1.0).abs() > tol || face[1].abs() > tol || face[2].abs() > tol {
            return Err(Error::InvalidInput("canonical face vector not +X".into()));
        }
        for j in 0..skel.joint_count() {
            if let Some(p) = skel.parent(j) {
                let len = vec3::norm(vec3::sub(self.positions[j], self.positions[p]));
                if (len - skel.limb_length(j)).abs() > tol {
                    return Err(Error::InvalidInput(format!(
                        "bone length at joint {j} is {len:.9}, expected {:.9}",
                        skel.limb_length(j)
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_rows3(&self.positions)
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        let n = t.shape()[0];
        Self { positions: (0..n).map(|i| t.row3(i)).collect() }
    }

    /// Mean absolute bone-length deviation relative to the skeleton
    /// constants (0 for poses produced by forward kinematics).
    pub fn bone_length_deviation(&self, skel: &Skeleton) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for j in 0..skel.joint_count() {
            if let Some(p) = skel.parent(j) {
                let len = vec3::norm(vec3::sub(self.positions[j], self.positions[p]));
                total += (len - skel.limb_length(j)).abs() / skel.limb_length(j);
                count += 1;
            }
        }
        total / count as f64
    }
}

/// Joint positions in an arbitrary rigid frame and unit (e.g. millimeters).
#[derive(Clone, Debug, PartialEq)]
pub struct WorldPose {
    pub positions: Vec<Vec3>,
}

impl WorldPose {
    pub fn validate(&self, skel: &Skeleton) -> Result<()> {
        if self.positions.len() != skel.joint_count() {
            return Err(Error::InvalidInput("world pose has wrong joint count".into()));
        }
        for p in &self.positions {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("world pose contains non-finite values".into()));
            }
        }
        for j in 0..skel.joint_count() {
            if let Some(p) = skel.parent(j) {
                if vec3::norm(vec3::sub(self.positions[j], self.positions[p])) <= 0.0 {
                    return Err(Error::InvalidInput(format!("zero-length bone at joint {j}")));
                }
            }
        }
        Ok(())
    }
}

/// Mirrors a canonical pose about the XZ plane, swapping left/right joints.
pub fn flip_pose_lr(pose: &CanonicalPose, skel: &Skeleton) -> CanonicalPose {
    let mut positions: Vec<Vec3> = pose
        .positions
        .iter()
        .map(|p| [p[0], -p[1], p[2]])
        .collect();
    for (l, r) in skel.lr_pairs() {
        positions.swap(l, r);
    }
    CanonicalPose { positions }
}
