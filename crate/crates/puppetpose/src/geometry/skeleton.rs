//! Skeleton topology, limb constants, and the canonical template pose.

use serde::{Deserialize, Serialize};

use super::vec3::{self, Vec3};
use crate::error::{Error, Result};

/// A puppet part with its anchored joints (two per limb, four for the torso).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Limb {
    pub name: String,
    /// Joint indices anchoring this limb's part map.
    pub joints: Vec<usize>,
}

/// Joint topology, parent map, and limb-length constants.
///
/// Torso joints (pelvis, spine, neck, hips) are fixed to template canonical
/// positions; all other joints are driven by parent-relative local vectors.
/// Lengths are in normalized units with the pelvis-neck distance equal to 1.
#[derive(Clone, Debug)]
pub struct Skeleton {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    limbs: Vec<Limb>,
    limb_lengths: Vec<f64>,
    torso_joints: Vec<usize>,
    /// pelvis, neck, left hip, right hip — the torso part's anchor joints.
    torso_anchors: [usize; 4],
    template: Vec<Vec3>,
    topo_free: Vec<usize>,
}

/// Template canonical positions for the default 17-joint figure.
///
/// The figure faces +X, up is +Z, and the left side of the body is +Y. All
/// template joints lie in the YZ plane so the face vector is exactly +X.
const DEFAULT_JOINTS: [(&str, i32, [f64; 3]); 17] = [
    ("pelvis", -1, [0.0, 0.0, 0.0]),
    ("spine", 0, [0.0, 0.0, 0.45]),
    ("neck", 0, [0.0, 0.0, 1.0]),
    ("l_hip", 0, [0.0, 0.13, -0.04]),
    ("r_hip", 0, [0.0, -0.13, -0.04]),
    ("head", 2, [0.0, 0.0, 1.12]),
    ("head_top", 5, [0.0, 0.0, 1.38]),
    ("l_shoulder", 2, [0.0, 0.20, 0.95]),
    ("l_elbow", 7, [0.0, 0.34, 0.64]),
    ("l_wrist", 8, [0.0, 0.46, 0.36]),
    ("r_shoulder", 2, [0.0, -0.20, 0.95]),
    ("r_elbow", 10, [0.0, -0.34, 0.64]),
    ("r_wrist", 11, [0.0, -0.46, 0.36]),
    ("l_knee", 3, [0.0, 0.16, -0.52]),
    ("l_ankle", 13, [0.0, 0.18, -0.98]),
    ("r_knee", 4, [0.0, -0.16, -0.52]),
    ("r_ankle", 15, [0.0, -0.18, -0.98]),
];

const DEFAULT_TORSO: [&str; 5] = ["pelvis", "spine", "neck", "l_hip", "r_hip"];

const DEFAULT_LIMBS: [(&str, &[&str]); 10] = [
    ("torso", &["pelvis", "neck", "l_hip", "r_hip"]),
    ("head", &["head", "head_top"]),
    ("l_upper_arm", &["l_shoulder", "l_elbow"]),
    ("l_lower_arm", &["l_elbow", "l_wrist"]),
    ("r_upper_arm", &["r_shoulder", "r_elbow"]),
    ("r_lower_arm", &["r_elbow", "r_wrist"]),
    ("l_upper_leg", &["l_hip", "l_knee"]),
    ("l_lower_leg", &["l_knee", "l_ankle"]),
    ("r_upper_leg", &["r_hip", "r_knee"]),
    ("r_lower_leg", &["r_knee", "r_ankle"]),
];

impl Skeleton {
    /// The built-in 17-joint figure with 10 puppet parts.
    pub fn default_h17() -> Self {
        let names: Vec<String> = DEFAULT_JOINTS.iter().map(|(n, _, _)| n.to_string()).collect();
        let parents: Vec<Option<usize>> = DEFAULT_JOINTS
            .iter()
            .map(|(_, p, _)| if *p < 0 { None } else { Some(*p as usize) })
            .collect();
        let template: Vec<Vec3> = DEFAULT_JOINTS.iter().map(|(_, _, p)| *p).collect();
        let find = |name: &str| names.iter().position(|n| n == name).unwrap();
        let limbs = DEFAULT_LIMBS
            .iter()
            .map(|(name, joints)| Limb {
                name: name.to_string(),
                joints: joints.iter().map(|j| find(j)).collect(),
            })
            .collect();
        let torso_joints = DEFAULT_TORSO.iter().map(|j| find(j)).collect();
        let torso_anchors = [find("pelvis"), find("neck"), find("l_hip"), find("r_hip")];
        let s = Self::assemble(names, parents, limbs, torso_joints, torso_anchors, template)
            .expect("default skeleton is valid");
        s
    }

    /// Builds a skeleton from raw pieces, deriving limb lengths from the
    /// template pose, and validates all invariants.
    pub fn assemble(
        names: Vec<String>,
        parents: Vec<Option<usize>>,
        limbs: Vec<Limb>,
        torso_joints: Vec<usize>,
        torso_anchors: [usize; 4],
        template: Vec<Vec3>,
    ) -> Result<Self> {
        let j = names.len();
        if parents.len() != j || template.len() != j {
            return Err(Error::Schema("joint arrays have mismatched lengths".into()));
        }
        let limb_lengths: Vec<f64> = (0..j)
            .map(|i| match parents[i] {
                Some(p) => vec3::norm(vec3::sub(template[i], template[p])),
                None => 0.0,
            })
            .collect();
        let topo_free = topo_order(&parents, &torso_joints)?;
        let s = Self {
            names,
            parents,
            limbs,
            limb_lengths,
            torso_joints,
            torso_anchors,
            template,
            topo_free,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.joint_count();
        let roots: Vec<usize> = (0..j).filter(|&i| self.parents[i].is_none()).collect();
        if roots.len() != 1 || roots[0] != self.pelvis() {
            return Err(Error::Schema("parent map must be a tree rooted at the pelvis".into()));
        }
        for (i, &p) in self.parents.iter().enumerate() {
            if let Some(p) = p {
                if p >= j {
                    return Err(Error::Schema(format!("joint {i} has out-of-range parent {p}")));
                }
                if self.limb_lengths[i] <= 0.0 {
                    return Err(Error::Schema(format!(
                        "joint {} has non-positive limb length",
                        self.names[i]
                    )));
                }
            }
        }
        // topo_free covering all free joints proves acyclicity for them.
        let free_count = (0..j).filter(|i| !self.is_fixed(*i)).count();
        if self.topo_free.len() != free_count {
            return Err(Error::Schema("parent map contains a cycle".into()));
        }
        for &f in &self.topo_free {
            let p = self.parents[f].expect("free joint has a parent");
            if self.parents[p].is_none() && !self.is_fixed(p) {
                return Err(Error::Schema(format!(
                    "free joint {} hangs directly off the root",
                    self.names[f]
                )));
            }
            if p == self.pelvis() {
                return Err(Error::Schema(format!(
                    "free joint {} has the root as parent; no parent limb exists for its frame",
                    self.names[f]
                )));
            }
        }
        for limb in &self.limbs {
            if limb.joints.len() != 2 && limb.joints.len() != 4 {
                return Err(Error::Schema(format!("limb {} must anchor 2 or 4 joints", limb.name)));
            }
            for &ji in &limb.joints {
                if ji >= j {
                    return Err(Error::Schema(format!("limb {} references joint {ji}", limb.name)));
                }
            }
        }
        for i in 0..j {
            if !self.is_fixed(i) && !self.limbs.iter().any(|l| l.joints.contains(&i)) {
                return Err(Error::Schema(format!(
                    "joint {} does not appear in any limb",
                    self.names[i]
                )));
            }
        }
        // Canonical template: pelvis at origin, unit pelvis-neck, face +X.
        let t = &self.template;
        if vec3::norm(t[self.pelvis()]) > 1e-9 {
            return Err(Error::Schema("template pelvis must sit at the origin".into()));
        }
        if (vec3::norm(vec3::sub(t[self.neck()], t[self.pelvis()])) - 1.0).abs() > 1e-9 {
            return Err(Error::Schema("template pelvis-neck distance must be 1".into()));
        }
        let face = super::kinematics::face_vector(t, self)?;
        if (face[0] - 1.0).abs() > 1e-9 || face[1].abs() > 1e-9 || face[2].abs() > 1e-9 {
            return Err(Error::Schema("template face vector must align with +X".into()));
        }
        Ok(())
    }

    pub fn joint_count(&self) -> usize {
        self.names.len()
    }

    pub fn limb_count(&self) -> usize {
        self.limbs.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        self.parents[j]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn limb_length(&self, j: usize) -> f64 {
        self.limb_lengths[j]
    }

    pub fn limb_lengths(&self) -> &[f64] {
        &self.limb_lengths
    }

    pub fn limbs(&self) -> &[Limb] {
        &self.limbs
    }

    pub fn torso_joints(&self) -> &[usize] {
        &self.torso_joints
    }

    pub fn is_fixed(&self, j: usize) -> bool {
        self.torso_joints.contains(&j)
    }

    /// Free (non-torso) joints in parent-before-child order.
    pub fn free_topo(&self) -> &[usize] {
        &self.topo_free
    }

    pub fn pelvis(&self) -> usize {
        self.torso_anchors[0]
    }

    pub fn neck(&self) -> usize {
        self.torso_anchors[1]
    }

    pub fn l_hip(&self) -> usize {
        self.torso_anchors[2]
    }

    pub fn r_hip(&self) -> usize {
        self.torso_anchors[3]
    }

    pub fn torso_anchors(&self) -> [usize; 4] {
        self.torso_anchors
    }

    /// Template canonical positions (the puppet's rest pose).
    pub fn template_positions(&self) -> &[Vec3] {
        &self.template
    }

    /// Index pairs `(left, right)` of joints that swap under mirroring,
    /// matched by `l_`/`r_` name prefixes.
    pub fn lr_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for (i, n) in self.names.iter().enumerate() {
            if let Some(rest) = n.strip_prefix("l_") {
                if let Some(r) = self.joint_index(&format!("r_{rest}")) {
                    pairs.push((i, r));
                }
            }
        }
        pairs
    }
}

fn topo_order(parents: &[Option<usize>], torso: &[usize]) -> Result<Vec<usize>> {
    let j = parents.len();
    let mut order = Vec::new();
    let mut placed = vec![false; j];
    for &t in torso {
        if t >= j {
            return Err(Error::Schema(format!("torso joint {t} out of range")));
        }
        placed[t] = true;
    }
    loop {
        let mut progressed = false;
        for i in 0..j {
            if placed[i] {
                continue;
            }
            if let Some(p) = parents[i] {
                if placed[p] {
                    order.push(i);
                    placed[i] = true;
                    progressed = true;
                }
            }
        }
        if !progressed {
            break;
        }
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_skeleton_is_valid() {
        let s = Skeleton::default_h17();
        assert_eq!(s.joint_count(), 17);
        assert_eq!(s.limb_count(), 10);
        assert_eq!(s.free_topo().len(), 12);
        s.validate().unwrap();
    }

    #[test]
    fn torso_limb_has_four_anchor_joints() {
        let s = Skeleton::default_h17();
        let torso = s.limbs().iter().find(|l| l.name == "torso").unwrap();
        assert_eq!(torso.joints.len(), 4);
        assert_eq!(torso.joints, s.torso_anchors().to_vec());
    }

    #[test]
    fn lr_pairs_cover_arms_and_legs() {
        let s = Skeleton::default_h17();
        let pairs = s.lr_pairs();
        // hip, shoulder, elbow, wrist, knee, ankle
        assert_eq!(pairs.len(), 6);
    }

    #[test]
    fn template_bone_lengths_match_constants() {
        let s = Skeleton::default_h17();
        let t = s.template_positions();
        for j in 0..s.joint_count() {
            if let Some(p) = s.parent(j) {
                let len = super::vec3::norm(super::vec3::sub(t[j], t[p]));
                assert!((len - s.limb_length(j)).abs() < 1e-12);
            }
        }
    }
}
