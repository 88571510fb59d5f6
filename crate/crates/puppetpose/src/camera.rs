//! Restricted camera parametrization and perspective projection.
//!
//! Extrinsics are three ZYX Euler angles plus a box-bounded translation whose
//! z component keeps the subject in front of the camera. Intrinsics are a
//! fixed focal length with the principal point at the image center; projected
//! coordinates live in [-1, 1]^2 with y pointing down.

use crate::diffcore::{Op, Tensor};
use crate::error::{Error, Result};
use crate::geometry::vec3::{self, Mat3, Vec3};
use crate::geometry::CanonicalPose;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Depths at or below this count as "behind the camera".
pub const Z_EPS: f64 = 1e-6;

/// Extrinsic camera parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    /// Euler angles in radians, applied as `Rz(r[2]) * Ry(r[1]) * Rx(r[0])`.
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

impl CameraParams {
    pub fn to_tensor(&self) -> Tensor {
        let mut d = Vec::with_capacity(6);
        d.extend_from_slice(&self.rotation);
        d.extend_from_slice(&self.translation);
        Tensor::from_vec(d)
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        let d = t.data();
        Self {
            rotation: [d[0], d[1], d[2]],
            translation: [d[3], d[4], d[5]],
        }
    }

    /// An upright front view of the canonical figure at the given distance.
    pub fn front_view(dist: f64) -> Self {
        Self {
            rotation: [std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2, 0.0],
            translation: [0.0, 0.0, dist],
        }
    }
}

/// Box bounds for camera parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CameraBounds {
    pub angle_lo: [f64; 3],
    pub angle_hi: [f64; 3],
    pub t_lo: [f64; 3],
    pub t_hi: [f64; 3],
    /// Hard lower bound on the translation z component.
    pub z_min: f64,
}

impl Default for CameraBounds {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            angle_lo: [-PI, -PI, -PI],
            angle_hi: [PI, PI, PI],
            t_lo: [-0.5, -0.5, 2.5],
            t_hi: [0.5, 0.5, 5.0],
            z_min: 0.5,
        }
    }
}

impl CameraBounds {
    pub fn contains(&self, c: &CameraParams) -> bool {
        let z_lo = self.t_lo[2].max(self.z_min);
        (0..3).all(|i| c.rotation[i] >= self.angle_lo[i] - 1e-12 && c.rotation[i] <= self.angle_hi[i] + 1e-12)
            && (0..3).all(|i| c.translation[i] >= self.t_lo[i] - 1e-12 && c.translation[i] <= self.t_hi[i] + 1e-12)
            && c.translation[2] >= z_lo - 1e-12
    }

    /// Interleaved `[lo, hi]` pairs for the 6-vector (angles then translation),
    /// used by the encoder's bounded squashing head.
    pub fn as_lo_hi(&self) -> ([f64; 6], [f64; 6]) {
        let mut lo = [0.0; 6];
        let mut hi = [0.0; 6];
        for i in 0..3 {
            lo[i] = self.angle_lo[i];
            hi[i] = self.angle_hi[i];
            lo[3 + i] = self.t_lo[i];
            hi[3 + i] = self.t_hi[i];
        }
        lo[5] = lo[5].max(self.z_min);
        (lo, hi)
    }
}

/// 2D projection of a pose: image-normalized points and camera-frame depths.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection2D {
    pub q: Vec<[f64; 2]>,
    pub q_d: Vec<f64>,
}

fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::from_rows([1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c])
}

fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::from_rows([c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c])
}

fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::from_rows([c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0])
}

fn drot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::from_rows([0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s])
}

fn drot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::from_rows([-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s])
}

fn drot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::from_rows([-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0])
}

/// Rotation matrix of ZYX Euler angles.
pub fn rotation_matrix(angles: [f64; 3]) -> Mat3 {
    rot_z(angles[2]).mul_mat(&rot_y(angles[1])).mul_mat(&rot_x(angles[0]))
}

fn rotation_derivs(angles: [f64; 3]) -> [Mat3; 3] {
    let rx = rot_x(angles[0]);
    let ry = rot_y(angles[1]);
    let rz = rot_z(angles[2]);
    [
        rz.mul_mat(&ry).mul_mat(&drot_x(angles[0])),
        rz.mul_mat(&drot_y(angles[1])).mul_mat(&rx),
        drot_z(angles[2]).mul_mat(&ry).mul_mat(&rx),
    ]
}

/// Projects a canonical pose through the camera.
pub fn project(p: &CanonicalPose, c: &CameraParams, focal: f64) -> Result<Projection2D> {
    let r = rotation_matrix(c.rotation);
    let mut q = Vec::with_capacity(p.positions.len());
    let mut q_d = Vec::with_capacity(p.positions.len());
    for (i, pos) in p.positions.iter().enumerate() {
        let x = vec3::add(r.mul_vec(*pos), c.translation);
        if x[2] <= Z_EPS {
            return Err(Error::BehindCamera { joint: i, depth: x[2] });
        }
        q.push([focal * x[0] / x[2], focal * x[1] / x[2]]);
        q_d.push(x[2]);
    }
    Ok(Projection2D { q, q_d })
}

/// Tape op: `(p3d [J,3], camera [6]) -> (q [J,2], q_d [J])`.
pub struct ProjectOp {
    pub focal: f64,
}

impl Op for ProjectOp {
    fn name(&self) -> &'static str {
        "project"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
        let p = inputs[0];
        let cam = CameraParams::from_tensor(inputs[1]);
        let j = p.shape()[0];
        let r = rotation_matrix(cam.rotation);
        let mut q = Tensor::zeros(vec![j, 2]);
        let mut qd = Tensor::zeros(vec![j]);
        for i in 0..j {
            let x = vec3::add(r.mul_vec(p.row3(i)), cam.translation);
            if x[2] <= Z_EPS {
                return Err(Error::BehindCamera { joint: i, depth: x[2] });
            }
            q.data_mut()[i * 2] = self.focal * x[0] / x[2];
            q.data_mut()[i * 2 + 1] = self.focal * x[1] / x[2];
            qd.data_mut()[i] = x[2];
        }
        Ok(vec![q, qd])
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _outputs: &[&Tensor],
        grad_outputs: &[&Tensor],
    ) -> Result<Vec<Tensor>> {
        let p = inputs[0];
        let cam = CameraParams::from_tensor(inputs[1]);
        let j = p.shape()[0];
        let r = rotation_matrix(cam.rotation);
        let dr = rotation_derivs(cam.rotation);
        let q_bar = grad_outputs[0];
        let qd_bar = grad_outputs[1];

        let mut p_bar = Tensor::zeros(vec![j, 3]);
        let mut t_bar = [0.0f64; 3];
        // R adjoint accumulated as rows for the Frobenius products below.
        let mut r_bar_rows = [[0.0f64; 3]; 3];
        for i in 0..j {
            let pos = p.row3(i);
            let x = vec3::add(r.mul_vec(pos), cam.translation);
            let gq = q_bar.row2(i);
            let gz = qd_bar.data()[i];
            let z = x[2];
            let xc_bar: Vec3 = [
                self.focal * gq[0] / z,
                self.focal * gq[1] / z,
                -self.focal * (x[0] * gq[0] + x[1] * gq[1]) / (z * z) + gz,
            ];
            p_bar.add_row3(i, r.tr_mul_vec(xc_bar));
            t_bar = vec3::add(t_bar, xc_bar);
            for row in 0..3 {
                for col in 0..3 {
                    r_bar_rows[row][col] += xc_bar[row] * pos[col];
                }
            }
        }
        let mut cam_bar = Tensor::zeros(vec![6]);
        for k in 0..3 {
            let mut acc = 0.0;
            for row in 0..3 {
                for col in 0..3 {
                    // Mat3 stores columns; entry (row, col) is cols[col][row].
                    acc += r_bar_rows[row][col] * dr[k].cols[col][row];
                }
            }
            cam_bar.data_mut()[k] = acc;
            cam_bar.data_mut()[3 + k] = t_bar[k];
        }
        Ok(vec![p_bar, cam_bar])
    }
}

/// Returns the nearest camera (per-component clamp, then a minimal increase
/// of z) for which every projected joint lands in
/// `[-1 + margin, 1 - margin]^2`. Idempotent.
pub fn clamp_in_frame(
    c: &CameraParams,
    p: &CanonicalPose,
    focal: f64,
    bounds: &CameraBounds,
    margin: f64,
) -> Result<CameraParams> {
    let mut out = *c;
    for i in 0..3 {
        out.rotation[i] = out.rotation[i].clamp(bounds.angle_lo[i], bounds.angle_hi[i]);
    }
    let z_lo = bounds.t_lo[2].max(bounds.z_min);
    out.translation[0] = out.translation[0].clamp(bounds.t_lo[0], bounds.t_hi[0]);
    out.translation[1] = out.translation[1].clamp(bounds.t_lo[1], bounds.t_hi[1]);
    out.translation[2] = out.translation[2].clamp(z_lo, bounds.t_hi[2]);

    let r = rotation_matrix(out.rotation);
    let limit = 1.0 - margin;
    if limit <= 0.0 {
        return Err(Error::Config("camera margin must be below 1".into()));
    }
    let mut z_needed = f64::NEG_INFINITY;
    for pos in &p.positions {
        let rp = r.mul_vec(*pos);
        let x = rp[0] + out.translation[0];
        let y = rp[1] + out.translation[1];
        z_needed = z_needed
            .max(focal * x.abs() / limit - rp[2])
            .max(focal * y.abs() / limit - rp[2])
            .max(10.0 * Z_EPS - rp[2]);
    }
    if z_needed > out.translation[2] {
        if z_needed > bounds.t_hi[2] + 1e-9 {
            return Err(Error::Config(format!(
                "camera z bound {:.3} cannot frame the pose (needs {:.3})",
                bounds.t_hi[2], z_needed
            )));
        }
        out.translation[2] = z_needed;
    }
    Ok(out)
}

/// Uniform draw inside the bounds, then clamped to frame the pose.
pub fn sample_camera<R: Rng>(
    rng: &mut R,
    bounds: &CameraBounds,
    p: &CanonicalPose,
    focal: f64,
    margin: f64,
) -> Result<CameraParams> {
    let z_lo = bounds.t_lo[2].max(bounds.z_min);
    let raw = CameraParams {
        rotation: [
            rng.gen_range(bounds.angle_lo[0]..=bounds.angle_hi[0]),
            rng.gen_range(bounds.angle_lo[1]..=bounds.angle_hi[1]),
            rng.gen_range(bounds.angle_lo[2]..=bounds.angle_hi[2]),
        ],
        translation: [
            rng.gen_range(bounds.t_lo[0]..=bounds.t_hi[0]),
            rng.gen_range(bounds.t_lo[1]..=bounds.t_hi[1]),
            rng.gen_range(z_lo..=bounds.t_hi[2]),
        ],
    };
    clamp_in_frame(&raw, p, focal, bounds, margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{forward_kinematics, template_local_pose, Skeleton};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn one_point_pose(p: [f64; 3]) -> CanonicalPose {
        CanonicalPose { positions: vec![p] }
    }

    #[test]
    fn optical_axis_point_projects_to_center() {
        let c = CameraParams { rotation: [0.0; 3], translation: [0.0, 0.0, 2.0] };
        let pr = project(&one_point_pose([0.0, 0.0, 0.0]), &c, 1.0).unwrap();
        assert_eq!(pr.q[0], [0.0, 0.0]);
        assert_eq!(pr.q_d[0], 2.0);
    }

    #[test]
    fn perspective_division_hand_case() {
        let c = CameraParams { rotation: [0.0; 3], translation: [0.0, 0.0, 2.0] };
        let pr = project(&one_point_pose([1.0, 0.0, 0.0]), &c, 1.0).unwrap();
        assert!((pr.q[0][0] - 0.5).abs() < 1e-15);
        assert_eq!(pr.q[0][1], 0.0);
        assert_eq!(pr.q_d[0], 2.0);
    }

    #[test]
    fn doubling_focal_doubles_q_not_depth() {
        let c = CameraParams { rotation: [0.1, -0.2, 0.3], translation: [0.1, 0.0, 3.0] };
        let p = one_point_pose([0.4, -0.2, 0.1]);
        let a = project(&p, &c, 1.0).unwrap();
        let b = project(&p, &c, 2.0).unwrap();
        assert!((b.q[0][0] - 2.0 * a.q[0][0]).abs() < 1e-12);
        assert!((b.q[0][1] - 2.0 * a.q[0][1]).abs() < 1e-12);
        assert_eq!(a.q_d[0], b.q_d[0]);
    }

    #[test]
    fn behind_camera_is_an_error() {
        let c = CameraParams { rotation: [0.0; 3], translation: [0.0, 0.0, -1.0] };
        assert!(matches!(
            project(&one_point_pose([0.0, 0.0, 0.0]), &c, 1.0),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn front_view_sees_head_above_pelvis() {
        let s = Skeleton::default_h17();
        let p = forward_kinematics(&template_local_pose(&s), &s).unwrap();
        let pr = project(&p, &CameraParams::front_view(3.0), 1.2).unwrap();
        let head = s.joint_index("head_top").unwrap();
        let pelvis = s.pelvis();
        assert!(pr.q[head][1] < pr.q[pelvis][1], "image y points down");
    }

    #[test]
    fn clamp_in_frame_is_idempotent_and_frames_all_joints() {
        let s = Skeleton::default_h17();
        let p = forward_kinematics(&template_local_pose(&s), &s).unwrap();
        let bounds = CameraBounds::default();
        let margin = 0.05;
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..1000 {
            let c = sample_camera(&mut rng, &bounds, &p, 1.2, margin).unwrap();
            assert!(bounds.contains(&c));
            let again = clamp_in_frame(&c, &p, 1.2, &bounds, margin).unwrap();
            assert_eq!(c, again);
            let pr = project(&p, &c, 1.2).unwrap();
            for q in &pr.q {
                assert!(q[0].abs() <= 1.0 - margin + 1e-9);
                assert!(q[1].abs() <= 1.0 - margin + 1e-9);
            }
        }
    }

    #[test]
    fn sample_camera_is_deterministic_per_seed() {
        let s = Skeleton::default_h17();
        let p = forward_kinematics(&template_local_pose(&s), &s).unwrap();
        let bounds = CameraBounds::default();
        let a = sample_camera(&mut StdRng::seed_from_u64(5), &bounds, &p, 1.2, 0.05).unwrap();
        let b = sample_camera(&mut StdRng::seed_from_u64(5), &bounds, &p, 1.2, 0.05).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn infeasible_z_bound_is_a_config_error() {
        let s = Skeleton::default_h17();
        let p = forward_kinematics(&template_local_pose(&s), &s).unwrap();
        let bounds = CameraBounds {
            t_lo: [-0.5, -0.5, 0.5],
            t_hi: [0.5, 0.5, 0.6],
            z_min: 0.1,
            ..CameraBounds::default()
        };
        let c = CameraParams { rotation: [0.0; 3], translation: [0.5, 0.5, 0.5] };
        assert!(matches!(
            clamp_in_frame(&c, &p, 1.2, &bounds, 0.05),
            Err(Error::Config(_))
        ));
    }
}
