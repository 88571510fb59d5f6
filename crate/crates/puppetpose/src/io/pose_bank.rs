//! Unpaired 3D pose banks: ingestion, validation, synthesis.

use crate::error::{Error, Result};
use crate::geometry::vec3::{self, Vec3};
use crate::geometry::{align_canonical, forward_kinematics, template_local_pose, CanonicalPose, Skeleton, WorldPose};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A set of unpaired world-space poses, canonicalized on load so samples can
/// feed the pipeline directly.
#[derive(Clone, Debug)]
pub struct PoseBank {
    pub source: String,
    pub world: Vec<WorldPose>,
    pub canonical: Vec<CanonicalPose>,
}

impl PoseBank {
    pub fn len(&self) -> usize {
        self.world.len()
    }

    pub fn is_empty(&self) -> bool {
        self.world.is_empty()
    }

    /// A plausible synthetic bank: the template pose with bounded random
    /// per-joint rotations, expressed in millimeters under a random rigid
    /// transform (so loading exercises the canonicalization path).
    pub fn synthetic(skel: &Skeleton, n: usize, seed: u64, max_angle: f64) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        let template = template_local_pose(skel);
        let mut world = Vec::with_capacity(n);
        let mut canonical = Vec::with_capacity(n);
        while world.len() < n {
            let mut v = template.clone();
            for &j in skel.free_topo() {
                let axis = random_unit(&mut rng);
                let angle = rng.gen_range(0.0..max_angle);
                v.vectors[j] = rotate(v.vectors[j], axis, angle);
            }
            let Ok(pose) = forward_kinematics(&v, skel) else {
                continue;
            };
            let scale = rng.gen_range(850.0..1150.0);
            let rot = random_rotation(&mut rng);
            let t: Vec3 = [
                rng.gen_range(-2000.0..2000.0),
                rng.gen_range(-2000.0..2000.0),
                rng.gen_range(-2000.0..2000.0),
            ];
            let positions = pose
                .positions
                .iter()
                .map(|p| vec3::add(vec3::scale(rot.mul_vec(*p), scale), t))
                .collect();
            world.push(WorldPose { positions });
            canonical.push(pose);
        }
        Self { source: format!("synthetic(seed={seed})"), world, canonical }
    }
}

fn random_unit(rng: &mut StdRng) -> Vec3 {
    loop {
        let v = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let n = vec3::norm(v);
        if n > 0.1 && n <= 1.0 {
            return vec3::scale(v, 1.0 / n);
        }
    }
}

fn rotate(v: Vec3, axis: Vec3, angle: f64) -> Vec3 {
    // Rodrigues rotation.
    let (s, c) = angle.sin_cos();
    let k = axis;
    vec3::add(
        vec3::add(vec3::scale(v, c), vec3::scale(vec3::cross(k, v), s)),
        vec3::scale(k, vec3::dot(k, v) * (1.0 - c)),
    )
}

fn random_rotation(rng: &mut StdRng) -> vec3::Mat3 {
    let axis = random_unit(rng);
    let angle = rng.gen_range(0.0..std::f64::consts::PI);
    let (s, c) = angle.sin_cos();
    let [x, y, z] = axis;
    let t = 1.0 - c;
    vec3::Mat3::from_rows(
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    )
}

#[derive(Serialize, Deserialize)]
struct BankFile {
    source: Option<String>,
    joints: Vec<String>,
    frames: Vec<Vec<[f64; 3]>>,
}

fn validate_and_canonicalize(
    source: String,
    frames: Vec<Vec<Vec3>>,
    skel: &Skeleton,
) -> Result<PoseBank> {
    if frames.is_empty() {
        return Err(Error::Schema("pose bank is empty".into()));
    }
    let mut world = Vec::with_capacity(frames.len());
    let mut canonical = Vec::with_capacity(frames.len());
    for (row, positions) in frames.into_iter().enumerate() {
        if positions.len() != skel.joint_count() {
            return Err(Error::Schema(format!(
                "frame {row}: {} joints, skeleton has {}",
                positions.len(),
                skel.joint_count()
            )));
        }
        if positions.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Schema(format!("frame {row}: non-finite coordinate")));
        }
        let pose = WorldPose { positions };
        pose.validate(skel)
            .map_err(|e| Error::Schema(format!("frame {row}: {e}")))?;
        let canon = align_canonical(&pose, skel)
            .map_err(|e| Error::Schema(format!("frame {row}: {e}")))?;
        world.push(pose);
        canonical.push(canon);
    }
    Ok(PoseBank { source, world, canonical })
}

/// Reorders file joints into skeleton order by name.
fn joint_permutation(file_joints: &[String], skel: &Skeleton) -> Result<Vec<usize>> {
    let mut perm = Vec::with_capacity(skel.joint_count());
    for name in skel.names() {
        let idx = file_joints
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Schema(format!("pose bank is missing joint `{name}`")))?;
        perm.push(idx);
    }
    Ok(perm)
}

pub fn load_pose_bank_json(path: &Path, skel: &Skeleton) -> Result<PoseBank> {
    let text = std::fs::read_to_string(path)?;
    let file: BankFile = serde_json::from_str(&text)?;
    let perm = joint_permutation(&file.joints, skel)?;
    let frames = file
        .frames
        .into_iter()
        .map(|f| {
            if f.len() != perm.len() {
                f.clone()
            } else {
                perm.iter().map(|&i| f[i]).collect()
            }
        })
        .collect();
    validate_and_canonicalize(
        file.source.unwrap_or_else(|| path.display().to_string()),
        frames,
        skel,
    )
}

pub fn load_pose_bank_csv(path: &Path, skel: &Skeleton) -> Result<PoseBank> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Schema("empty CSV pose bank".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() % 3 != 0 {
        return Err(Error::Schema("CSV header must have 3 columns per joint".into()));
    }
    let file_joints: Vec<String> = cols
        .chunks(3)
        .enumerate()
        .map(|(i, c)| {
            let name = c[0]
                .strip_suffix("_x")
                .ok_or_else(|| Error::Schema(format!("column {}: expected `<joint>_x`", i * 3)))?;
            if c[1] != format!("{name}_y") || c[2] != format!("{name}_z") {
                return Err(Error::Schema(format!("columns for joint `{name}` out of order")));
            }
            Ok(name.to_string())
        })
        .collect::<Result<_>>()?;
    let perm = joint_permutation(&file_joints, skel)?;
    let mut frames = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Schema(format!("row {}: bad number `{v}`", row + 1)))
            })
            .collect::<Result<_>>()?;
        if values.len() != cols.len() {
            return Err(Error::Schema(format!(
                "row {}: {} values, expected {}",
                row + 1,
                values.len(),
                cols.len()
            )));
        }
        let frame: Vec<Vec3> = perm
            .iter()
            .map(|&i| [values[i * 3], values[i * 3 + 1], values[i * 3 + 2]])
            .collect();
        frames.push(frame);
    }
    validate_and_canonicalize(path.display().to_string(), frames, skel)
}

/// Loads a pose bank by extension (`.json` or `.csv`).
pub fn load_pose_bank(path: &Path, skel: &Skeleton) -> Result<PoseBank> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => load_pose_bank_json(path, skel),
        Some("csv") => load_pose_bank_csv(path, skel),
        other => Err(Error::Schema(format!("unknown pose bank extension {other:?}"))),
    }
}

pub fn save_pose_bank_json(path: &Path, bank: &PoseBank, skel: &Skeleton) -> Result<()> {
    let file = BankFile {
        source: Some(bank.source.clone()),
        joints: skel.names().to_vec(),
        frames: bank.world.iter().map(|w| w.positions.clone()).collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn save_pose_bank_csv(path: &Path, bank: &PoseBank, skel: &Skeleton) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = skel
        .names()
        .iter()
        .flat_map(|n| [format!("{n}_x"), format!("{n}_y"), format!("{n}_z")])
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for w in &bank.world {
        let row: Vec<String> = w
            .positions
            .iter()
            .flat_map(|p| p.iter().map(|v| format!("{v:.9}")))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn synthetic_bank_is_valid_and_canonical() {
        let skel = Skeleton::default_h17();
        let bank = PoseBank::synthetic(&skel, 16, 42, 0.6);
        assert_eq!(bank.len(), 16);
        for c in &bank.canonical {
            c.validate(&skel, 1e-9).unwrap();
        }
    }

    #[test]
    fn json_round_trip_preserves_world_poses() {
        let skel = Skeleton::default_h17();
        let bank = PoseBank::synthetic(&skel, 4, 7, 0.5);
        let dir = tempdir().unwrap();
        let path = dir.path().join("bank.json");
        save_pose_bank_json(&path, &bank, &skel).unwrap();
        let loaded = load_pose_bank(&path, &skel).unwrap();
        for (a, b) in bank.world.iter().zip(&loaded.world) {
            for (pa, pb) in a.positions.iter().zip(&b.positions) {
                for k in 0..3 {
                    assert!((pa[k] - pb[k]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn csv_and_json_load_identically() {
        let skel = Skeleton::default_h17();
        let bank = PoseBank::synthetic(&skel, 3, 11, 0.5);
        let dir = tempdir().unwrap();
        let jpath = dir.path().join("bank.json");
        let cpath = dir.path().join("bank.csv");
        save_pose_bank_json(&jpath, &bank, &skel).unwrap();
        save_pose_bank_csv(&cpath, &bank, &skel).unwrap();
        let j = load_pose_bank(&jpath, &skel).unwrap();
        let c = load_pose_bank(&cpath, &skel).unwrap();
        for (a, b) in j.canonical.iter().zip(&c.canonical) {
            for (pa, pb) in a.positions.iter().zip(&b.positions) {
                for k in 0..3 {
                    assert!((pa[k] - pb[k]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn nan_row_is_rejected_with_its_index() {
        let skel = Skeleton::default_h17();
        let bank = PoseBank::synthetic(&skel, 3, 13, 0.5);
        let dir = tempdir().unwrap();
        let path = dir.path().join("bank.json");
        save_pose_bank_json(&path, &bank, &skel).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        // Corrupt one coordinate in the second frame.
        let needle = bank.world[1].positions[3][0];
        text = text.replacen(&format!("{needle}"), "null", 1);
        let path2 = dir.path().join("bad.json");
        std::fs::write(&path2, text).unwrap();
        assert!(load_pose_bank(&path2, &skel).is_err());
    }
}
