//! JSON skeleton files.

use crate::error::{Error, Result};
use crate::geometry::{Limb, Skeleton};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct SkeletonJson {
    joints: Vec<String>,
    /// Parent index per joint; -1 marks the root.
    parents: Vec<i64>,
    limbs: Vec<LimbJson>,
    /// Derived from `canonical_positions`; stored for readability.
    limb_lengths: Vec<f64>,
    torso_joints: Vec<String>,
    /// pelvis, neck, left hip, right hip.
    torso_anchor_joints: [String; 4],
    canonical_positions: Vec<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
struct LimbJson {
    id: u8,
    name: String,
    joints: Vec<String>,
}

pub fn save_skeleton(path: &Path, skel: &Skeleton) -> Result<()> {
    let anchors = skel.torso_anchors();
    let json = SkeletonJson {
        joints: skel.names().to_vec(),
        parents: skel
            .parents()
            .iter()
            .map(|p| p.map(|v| v as i64).unwrap_or(-1))
            .collect(),
        limbs: skel
            .limbs()
            .iter()
            .enumerate()
            .map(|(i, l)| LimbJson {
                id: (i + 1) as u8,
                name: l.name.clone(),
                joints: l.joints.iter().map(|&j| skel.names()[j].clone()).collect(),
            })
            .collect(),
        limb_lengths: skel.limb_lengths().to_vec(),
        torso_joints: skel
            .torso_joints()
            .iter()
            .map(|&j| skel.names()[j].clone())
            .collect(),
        torso_anchor_joints: [
            skel.names()[anchors[0]].clone(),
            skel.names()[anchors[1]].clone(),
            skel.names()[anchors[2]].clone(),
            skel.names()[anchors[3]].clone(),
        ],
        canonical_positions: skel.template_positions().to_vec(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&json)?)?;
    Ok(())
}

pub fn load_skeleton(path: &Path) -> Result<Skeleton> {
    let text = std::fs::read_to_string(path)?;
    let json: SkeletonJson = serde_json::from_str(&text)?;
    let find = |name: &str| -> Result<usize> {
        json.joints
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Schema(format!("skeleton file: unknown joint `{name}`")))
    };
    let parents = json
        .parents
        .iter()
        .map(|&p| if p < 0 { None } else { Some(p as usize) })
        .collect();
    let limbs = json
        .limbs
        .iter()
        .map(|l| {
            Ok(Limb {
                name: l.name.clone(),
                joints: l.joints.iter().map(|n| find(n)).collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let torso_joints = json
        .torso_joints
        .iter()
        .map(|n| find(n))
        .collect::<Result<Vec<_>>>()?;
    let torso_anchors = [
        find(&json.torso_anchor_joints[0])?,
        find(&json.torso_anchor_joints[1])?,
        find(&json.torso_anchor_joints[2])?,
        find(&json.torso_anchor_joints[3])?,
    ];
    Skeleton::assemble(
        json.joints,
        parents,
        limbs,
        torso_joints,
        torso_anchors,
        json.canonical_positions,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn skeleton_round_trips() {
        let skel = Skeleton::default_h17();
        let dir = tempdir().unwrap();
        let path = dir.path().join("skeleton.json");
        save_skeleton(&path, &skel).unwrap();
        let loaded = load_skeleton(&path).unwrap();
        assert_eq!(loaded.names(), skel.names());
        assert_eq!(loaded.limb_lengths(), skel.limb_lengths());
        assert_eq!(loaded.torso_anchors(), skel.torso_anchors());
    }
}
