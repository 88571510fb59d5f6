//! Face vector, Gram-Schmidt parent frames, forward/inverse kinematics,
//! and canonical alignment of world poses.

use super::pose::{CanonicalPose, LocalPose, WorldPose};
use super::skeleton::Skeleton;
use super::vec3::{self, Mat3, Vec3};
use crate::diffcore::{Op, Tensor};
use crate::error::{Error, Result};
use std::sync::Arc;

/// Parent-limb vectors shorter than this are degenerate.
pub const FRAME_EPS: f64 = 1e-7;
/// Local vectors may drift this far from unit norm before being rejected;
/// inside the band they are re-normalized, which keeps the map smooth for
/// finite-difference probes.
pub const UNIT_TOL: f64 = 1e-3;

/// Unit normal of the neck/left-hip/right-hip plane, oriented toward the
/// body's front: positive dot with `(l_hip - r_hip) x (neck - pelvis)`.
pub fn face_vector(positions: &[Vec3], skel: &Skeleton) -> Result<Vec3> {
    let neck = positions[skel.neck()];
    let lhip = positions[skel.l_hip()];
    let rhip = positions[skel.r_hip()];
    let pelvis = positions[skel.pelvis()];
    let a = vec3::sub(lhip, neck);
    let b = vec3::sub(rhip, neck);
    let n_raw = vec3::cross(a, b);
    let scale = vec3::norm(a) * vec3::norm(b);
    if vec3::norm(n_raw) <= FRAME_EPS * scale.max(1e-30) {
        return Err(Error::DegenerateInput(
            "neck and hip joints are collinear; face vector undefined".into(),
        ));
    }
    let mut n = vec3::normalize(n_raw);
    let reference = vec3::cross(vec3::sub(lhip, rhip), vec3::sub(neck, pelvis));
    if vec3::norm(reference) <= FRAME_EPS * scale.max(1e-30) {
        return Err(Error::DegenerateInput(
            "torso too degenerate to orient the face vector".into(),
        ));
    }
    if vec3::dot(n, reference) < 0.0 {
        n = vec3::scale(n, -1.0);
    }
    Ok(n)
}

pub(crate) struct FrameCtx {
    pub e1: Vec3,
    pub e2: Vec3,
    pub e3: Vec3,
    pub un: f64,
    pub wn: f64,
    pub face: Vec3,
}

/// Orthonormal right-handed frame from a parent-limb vector `u` and the face
/// vector: axis1 along `u`, axis2 the face component orthogonal to axis1,
/// axis3 their cross product.
pub(crate) fn frame_from(u: Vec3, face: Vec3) -> Result<FrameCtx> {
    let un = vec3::norm(u);
    if un < FRAME_EPS {
        return Err(Error::DegenerateFrame("parent limb vector is near zero".into()));
    }
    let e1 = vec3::scale(u, 1.0 / un);
    let w = vec3::sub(face, vec3::scale(e1, vec3::dot(face, e1)));
    let wn = vec3::norm(w);
    if wn < FRAME_EPS {
        return Err(Error::DegenerateFrame(
            "face vector is parallel to the parent limb".into(),
        ));
    }
    let e2 = vec3::scale(w, 1.0 / wn);
    let e3 = vec3::cross(e1, e2);
    Ok(FrameCtx { e1, e2, e3, un, wn, face })
}

/// Adjoint of [`frame_from`]: pulls gradients on the three axes back to the
/// parent-limb vector `u` (the face vector is treated as constant).
pub(crate) fn frame_backward(ctx: &FrameCtx, e1_bar: Vec3, e2_bar: Vec3, e3_bar: Vec3) -> Vec3 {
    // e3 = e1 x e2
    let mut e1_acc = vec3::add(e1_bar, vec3::cross(ctx.e2, e3_bar));
    let e2_acc = vec3::add(e2_bar, vec3::cross(e3_bar, ctx.e1));
    // e2 = w / |w|
    let w_bar = vec3::scale(
        vec3::sub(e2_acc, vec3::scale(ctx.e2, vec3::dot(ctx.e2, e2_acc))),
        1.0 / ctx.wn,
    );
    // w = face - (face . e1) e1
    let fe1 = vec3::dot(ctx.face, ctx.e1);
    e1_acc = vec3::sub(
        e1_acc,
        vec3::add(
            vec3::scale(ctx.face, vec3::dot(ctx.e1, w_bar)),
            vec3::scale(w_bar, fe1),
        ),
    );
    // e1 = u / |u|
    vec3::scale(
        vec3::sub(e1_acc, vec3::scale(ctx.e1, vec3::dot(ctx.e1, e1_acc))),
        1.0 / ctx.un,
    )
}

/// The Gram-Schmidt frame of a free joint's parent limb within pose `p`.
pub fn parent_frame(p: &CanonicalPose, skel: &Skeleton, j: usize) -> Result<Mat3> {
    if skel.is_fixed(j) || skel.parent(j).is_none() {
        return Err(Error::InvalidInput(format!(
            "joint {j} is a torso/root joint and has no parent frame"
        )));
    }
    let face = face_vector(&p.positions, skel)?;
    let pj = skel.parent(j).unwrap();
    let gj = skel
        .parent(pj)
        .ok_or_else(|| Error::InvalidInput(format!("joint {j}: parent is the root")))?;
    let u = vec3::sub(p.positions[pj], p.positions[gj]);
    let ctx = frame_from(u, face)?;
    Ok(Mat3 { cols: [ctx.e1, ctx.e2, ctx.e3] })
}

fn fk_positions(v: &Tensor, skel: &Skeleton) -> Result<Vec<Vec3>> {
    let j = skel.joint_count();
    if v.shape() != [j, 3] {
        return Err(Error::InvalidInput(format!(
            "local pose tensor must be [{j}, 3], got {:?}",
            v.shape()
        )));
    }
    let mut p: Vec<Vec3> = skel.template_positions().to_vec();
    // Torso joints sit at template positions, so the face vector is the
    // canonical +X for every frame below.
    let face = face_vector(&p, skel)?;
    for &jf in skel.free_topo() {
        let pj = skel.parent(jf).unwrap();
        let gj = skel.parent(pj).unwrap();
        let ctx = frame_from(vec3::sub(p[pj], p[gj]), face)?;
        let n = v.row3(jf);
        let nn = vec3::norm(n);
        if (nn - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidInput(format!(
                "local vector for joint {jf} has norm {nn:.6}, beyond tolerance"
            )));
        }
        let vn = vec3::scale(n, 1.0 / nn);
        let dir = Mat3 { cols: [ctx.e1, ctx.e2, ctx.e3] }.mul_vec(vn);
        p[jf] = vec3::add(p[pj], vec3::scale(dir, skel.limb_length(jf)));
    }
    Ok(p)
}

/// Recursive forward kinematics: places each free joint at
/// `parent + length * (parent_frame * v)`, torso joints at the template.
pub fn forward_kinematics(v: &LocalPose, skel: &Skeleton) -> Result<CanonicalPose> {
    let p = fk_positions(&v.to_tensor(), skel)?;
    Ok(CanonicalPose { positions: p })
}

/// Recovers local vectors from a canonical pose; inverse of
/// [`forward_kinematics`] on its image.
pub fn inverse_kinematics(p: &CanonicalPose, skel: &Skeleton) -> Result<LocalPose> {
    let face = face_vector(&p.positions, skel)?;
    let mut v = vec![[0.0; 3]; skel.joint_count()];
    for &jf in skel.free_topo() {
        let pj = skel.parent(jf).unwrap();
        let gj = skel.parent(pj).unwrap();
        let ctx = frame_from(vec3::sub(p.positions[pj], p.positions[gj]), face)?;
        let d = vec3::sub(p.positions[jf], p.positions[pj]);
        let dn = vec3::norm(d);
        if dn < FRAME_EPS {
            return Err(Error::DegenerateInput(format!(
                "joint {jf} coincides with its parent"
            )));
        }
        let dir = vec3::scale(d, 1.0 / dn);
        v[jf] = Mat3 { cols: [ctx.e1, ctx.e2, ctx.e3] }.tr_mul_vec(dir);
    }
    Ok(LocalPose { vectors: v })
}

/// Maps an arbitrary world pose into the canonical frame: pelvis to origin,
/// unit pelvis-neck distance, face vector to +X with the pelvis-neck residual
/// along +Z, then bone lengths snapped to the skeleton constants by an
/// inverse/forward kinematics round trip.
pub fn align_canonical(w: &WorldPose, skel: &Skeleton) -> Result<CanonicalPose> {
    w.validate(skel)?;
    let pelvis = w.positions[skel.pelvis()];
    let neck = w.positions[skel.neck()];
    let d = vec3::sub(neck, pelvis);
    let dist = vec3::norm(d);
    if dist < 1e-12 {
        return Err(Error::DegenerateInput("pelvis and neck coincide".into()));
    }
    let s = 1.0 / dist;
    let centered: Vec<Vec3> = w
        .positions
        .iter()
        .map(|p| vec3::scale(vec3::sub(*p, pelvis), s))
        .collect();
    let f = face_vector(&centered, skel)?;
    let n = centered[skel.neck()];
    let z_res = vec3::sub(n, vec3::scale(f, vec3::dot(n, f)));
    let zn = vec3::norm(z_res);
    if zn < FRAME_EPS {
        return Err(Error::DegenerateInput(
            "pelvis-neck direction is parallel to the face vector".into(),
        ));
    }
    let z = vec3::scale(z_res, 1.0 / zn);
    let x = f;
    let y = vec3::cross(z, x);
    let rot = Mat3::from_rows(x, y, z);
    let rotated: Vec<Vec3> = centered.iter().map(|p| rot.mul_vec(*p)).collect();
    let v = inverse_kinematics(&CanonicalPose { positions: rotated }, skel)?;
    forward_kinematics(&v, skel)
}

/// The template pose's own local vectors (fixed point of FK/IK).
pub fn template_local_pose(skel: &Skeleton) -> LocalPose {
    let p = CanonicalPose { positions: skel.template_positions().to_vec() };
    inverse_kinematics(&p, skel).expect("template pose has valid frames")
}

/// Tape op: local vectors `[J,3]` to canonical positions `[J,3]`.
pub struct FkOp {
    skel: Arc<Skeleton>,
}

impl FkOp {
    pub fn new(skel: Arc<Skeleton>) -> Self {
        Self { skel }
    }
}

impl Op for FkOp {
    fn name(&self) -> &'static str {
        "forward_kinematics"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
        let p = fk_positions(inputs[0], &self.skel)?;
        Ok(vec![Tensor::from_rows3(&p)])
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        outputs: &[&Tensor],
        grad_outputs: &[&Tensor],
    ) -> Result<Vec<Tensor>> {
        let skel = &self.skel;
        let v = inputs[0];
        let pos = outputs[0];
        let j = skel.joint_count();
        let mut p_bar: Vec<Vec3> = (0..j).map(|i| grad_outputs[0].row3(i)).collect();
        let mut v_bar = Tensor::zeros(vec![j, 3]);
        let positions: Vec<Vec3> = (0..j).map(|i| pos.row3(i)).collect();
        let face = face_vector(skel.template_positions(), skel)?;

        for &jf in skel.free_topo().iter().rev() {
            let pj = skel.parent(jf).unwrap();
            let gj = skel.parent(pj).unwrap();
            let ctx = frame_from(vec3::sub(positions[pj], positions[gj]), face)?;
            let n = v.row3(jf);
            let nn = vec3::norm(n);
            let vn = vec3::scale(n, 1.0 / nn);
            let len = skel.limb_length(jf);

            let pb = p_bar[jf];
            // p[jf] = p[pj] + len * R vn
            p_bar[pj] = vec3::add(p_bar[pj], pb);
            let vn_bar = vec3::scale(
                Mat3 { cols: [ctx.e1, ctx.e2, ctx.e3] }.tr_mul_vec(pb),
                len,
            );
            // columns' adjoints: R_bar[:,k] = len * pb * vn[k]
            let e1_bar = vec3::scale(pb, len * vn[0]);
            let e2_bar = vec3::scale(pb, len * vn[1]);
            let e3_bar = vec3::scale(pb, len * vn[2]);
            let u_bar = frame_backward(&ctx, e1_bar, e2_bar, e3_bar);
            p_bar[pj] = vec3::add(p_bar[pj], u_bar);
            p_bar[gj] = vec3::sub(p_bar[gj], u_bar);
            // vn = n / |n|
            let n_bar = vec3::scale(
                vec3::sub(vn_bar, vec3::scale(vn, vec3::dot(vn, vn_bar))),
                1.0 / nn,
            );
            v_bar.add_row3(jf, n_bar);
        }
        Ok(vec![v_bar])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn skel() -> Skeleton {
        Skeleton::default_h17()
    }

    pub(crate) fn random_unit(rng: &mut StdRng) -> Vec3 {
        loop {
            let v = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let n = vec3::norm(v);
            if n > 0.1 && n < 1.0 {
                return vec3::scale(v, 1.0 / n);
            }
        }
    }

    pub(crate) fn random_local_pose(skel: &Skeleton, rng: &mut StdRng) -> LocalPose {
        loop {
            let mut v = vec![[0.0; 3]; skel.joint_count()];
            for &j in skel.free_topo() {
                v[j] = random_unit(rng);
            }
            let pose = LocalPose { vectors: v };
            if forward_kinematics(&pose, skel).is_ok() {
                return pose;
            }
        }
    }

    #[test]
    fn template_vectors_reproduce_template_pose() {
        let s = skel();
        let v = template_local_pose(&s);
        let p = forward_kinematics(&v, &s).unwrap();
        for (a, b) in p.positions.iter().zip(s.template_positions()) {
            assert!(vec3::norm(vec3::sub(*a, *b)) < 1e-12);
        }
    }

    #[test]
    fn fk_output_is_canonical_for_random_poses() {
        let s = skel();
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let v = random_local_pose(&s, &mut rng);
            let p = forward_kinematics(&v, &s).unwrap();
            assert!(vec3::norm(p.positions[s.pelvis()]) < 1e-9);
            let f = face_vector(&p.positions, &s).unwrap();
            assert!((f[0] - 1.0).abs() < 1e-9 && f[1].abs() < 1e-9 && f[2].abs() < 1e-9);
            p.validate(&s, 1e-9).unwrap();
        }
    }

    #[test]
    fn two_link_chain_matches_frame_composition_oracle() {
        // A chain hanging off the neck: l_shoulder then l_elbow, with local
        // vectors +X in their parent frames. Compose the two Gram-Schmidt
        // frames by hand and compare joint positions.
        let s = skel();
        let mut v = template_local_pose(&s);
        let sh = s.joint_index("l_shoulder").unwrap();
        let el = s.joint_index("l_elbow").unwrap();
        v.vectors[sh] = [1.0, 0.0, 0.0];
        v.vectors[el] = [1.0, 0.0, 0.0];
        let p = forward_kinematics(&v, &s).unwrap();

        let t = s.template_positions();
        let face = [1.0, 0.0, 0.0];
        // Shoulder frame: parent limb is pelvis->neck.
        let ctx1 = frame_from(vec3::sub(t[s.neck()], t[s.pelvis()]), face).unwrap();
        let r1 = Mat3 { cols: [ctx1.e1, ctx1.e2, ctx1.e3] };
        let sh_pos = vec3::add(t[s.neck()], vec3::scale(r1.mul_vec([1.0, 0.0, 0.0]), s.limb_length(sh)));
        assert!(vec3::norm(vec3::sub(p.positions[sh], sh_pos)) < 1e-12);
        // Elbow frame: parent limb is neck->shoulder (which we just placed).
        let ctx2 = frame_from(vec3::sub(sh_pos, t[s.neck()]), face).unwrap();
        let r2 = Mat3 { cols: [ctx2.e1, ctx2.e2, ctx2.e3] };
        let el_pos = vec3::add(sh_pos, vec3::scale(r2.mul_vec([1.0, 0.0, 0.0]), s.limb_length(el)));
        assert!(vec3::norm(vec3::sub(p.positions[el], el_pos)) < 1e-12);
    }

    #[test]
    fn non_unit_local_vector_is_rejected() {
        let s = skel();
        let mut v = template_local_pose(&s);
        let j = s.free_topo()[0];
        v.vectors[j] = vec3::scale(v.vectors[j], 1.1);
        assert!(matches!(
            forward_kinematics(&v, &s),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn parent_frame_is_orthonormal_on_random_poses() {
        let s = skel();
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..100 {
            let v = random_local_pose(&s, &mut rng);
            let p = forward_kinematics(&v, &s).unwrap();
            for &j in s.free_topo() {
                let r = parent_frame(&p, &s, j).unwrap();
                assert!(r.orthonormality_error() < 1e-12);
            }
        }
    }

    #[test]
    fn parent_frame_hand_case_and_degenerate_case() {
        let s = skel();
        // Template: head's parent limb is neck->head along +Z, face +X.
        let p = CanonicalPose { positions: s.template_positions().to_vec() };
        let ht = s.joint_index("head_top").unwrap();
        let r = parent_frame(&p, &s, ht).unwrap();
        assert!(vec3::norm(vec3::sub(r.cols[0], [0.0, 0.0, 1.0])) < 1e-12);
        assert!(vec3::norm(vec3::sub(r.cols[1], [1.0, 0.0, 0.0])) < 1e-12);
        assert!(vec3::norm(vec3::sub(r.cols[2], [0.0, 1.0, 0.0])) < 1e-12);

        // Parent limb along +X collapses Gram-Schmidt.
        let mut bad = p.clone();
        let head = s.joint_index("head").unwrap();
        bad.positions[head] = vec3::add(bad.positions[s.neck()], [0.12, 0.0, 0.0]);
        assert!(matches!(
            parent_frame(&bad, &s, ht),
            Err(Error::DegenerateFrame(_))
        ));
    }

    #[test]
    fn face_vector_hand_case_and_equivariance() {
        let s = skel();
        let mut positions = vec![[0.0; 3]; s.joint_count()];
        positions[s.neck()] = [0.0, 0.0, 1.0];
        positions[s.l_hip()] = [0.0, 0.2, 0.0];
        positions[s.r_hip()] = [0.0, -0.2, 0.0];
        let f = face_vector(&positions, &s).unwrap();
        assert!(vec3::norm(vec3::sub(f, [1.0, 0.0, 0.0])) < 1e-12);

        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..50 {
            let axis = random_unit(&mut rng);
            let angle = rng.gen_range(-3.0..3.0);
            let rot = axis_angle(axis, angle);
            let rotated: Vec<Vec3> = positions.iter().map(|p| rot.mul_vec(*p)).collect();
            let fr = face_vector(&rotated, &s).unwrap();
            assert!(vec3::norm(vec3::sub(fr, rot.mul_vec(f))) < 1e-9);
        }
    }

    #[test]
    fn face_vector_errors_on_collinear_joints() {
        let s = skel();
        let mut positions = vec![[0.0; 3]; s.joint_count()];
        positions[s.neck()] = [0.0, 0.0, 1.0];
        positions[s.l_hip()] = [0.0, 0.0, 0.5];
        positions[s.r_hip()] = [0.0, 0.0, 0.25];
        assert!(matches!(
            face_vector(&positions, &s),
            Err(Error::DegenerateInput(_))
        ));
    }

    pub(crate) fn axis_angle(axis: Vec3, angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        let [x, y, z] = axis;
        let t = 1.0 - c;
        Mat3::from_rows(
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        )
    }

    #[test]
    fn ik_of_fk_is_identity() {
        let s = skel();
        let mut rng = StdRng::seed_from_u64(21);
        for _ in 0..100 {
            let v = random_local_pose(&s, &mut rng);
            let p = forward_kinematics(&v, &s).unwrap();
            let v2 = inverse_kinematics(&p, &s).unwrap();
            for &j in s.free_topo() {
                assert!(vec3::norm(vec3::sub(v.vectors[j], v2.vectors[j])) < 1e-9);
            }
        }
    }

    #[test]
    fn fk_of_ik_preserves_directions_when_lengths_mismatch() {
        // Scale all bones by 1.3: FK(IK(p)) must restore skeleton lengths
        // while preserving each limb's direction.
        let s = skel();
        let mut rng = StdRng::seed_from_u64(5);
        let v = random_local_pose(&s, &mut rng);
        let p = forward_kinematics(&v, &s).unwrap();
        let mut scaled = vec![[0.0; 3]; s.joint_count()];
        for &j in s.free_topo() {
            let pj = s.parent(j).unwrap();
            let dir = vec3::sub(p.positions[j], p.positions[pj]);
            scaled[j] = vec3::add(scaled[pj], vec3::scale(dir, 1.3));
        }
        // Torso joints stay at template (their positions are fixed anyway).
        for &t in s.torso_joints() {
            scaled[t] = p.positions[t];
        }
        // Rebuild in topological order so parents are resolved first.
        let mut positions = p.positions.clone();
        for &j in s.free_topo() {
            let pj = s.parent(j).unwrap();
            let dir = vec3::sub(p.positions[j], p.positions[pj]);
            positions[j] = vec3::add(positions[pj], vec3::scale(dir, 1.3));
        }
        let stretched = CanonicalPose { positions };
        let round = forward_kinematics(&inverse_kinematics(&stretched, &s).unwrap(), &s).unwrap();
        round.validate(&s, 1e-9).unwrap();
        for &j in s.free_topo() {
            let pj = s.parent(j).unwrap();
            let d1 = vec3::normalize(vec3::sub(stretched.positions[j], stretched.positions[pj]));
            let d2 = vec3::normalize(vec3::sub(round.positions[j], round.positions[pj]));
            assert!(vec3::norm(vec3::sub(d1, d2)) < 1e-9);
        }
    }

    #[test]
    fn align_canonical_is_idempotent_and_rigid_invariant() {
        let s = skel();
        let mut rng = StdRng::seed_from_u64(9);
        let v = random_local_pose(&s, &mut rng);
        let p = forward_kinematics(&v, &s).unwrap();

        let aligned = align_canonical(&WorldPose { positions: p.positions.clone() }, &s).unwrap();
        for (a, b) in aligned.positions.iter().zip(&p.positions) {
            assert!(vec3::norm(vec3::sub(*a, *b)) < 1e-9);
        }

        for _ in 0..20 {
            let axis = random_unit(&mut rng);
            let rot = axis_angle(axis, rng.gen_range(-3.0..3.0));
            let t = [
                rng.gen_range(-500.0..500.0),
                rng.gen_range(-500.0..500.0),
                rng.gen_range(-500.0..500.0),
            ];
            let scale = rng.gen_range(10.0..2000.0);
            let world = WorldPose {
                positions: p
                    .positions
                    .iter()
                    .map(|q| vec3::add(vec3::scale(rot.mul_vec(*q), scale), t))
                    .collect(),
            };
            let back = align_canonical(&world, &s).unwrap();
            for (a, b) in back.positions.iter().zip(&p.positions) {
                assert!(vec3::norm(vec3::sub(*a, *b)) < 1e-6);
            }
            let dist = vec3::norm(vec3::sub(
                back.positions[s.neck()],
                back.positions[s.pelvis()],
            ));
            assert!((dist - 1.0).abs() < 1e-9);
        }
    }
}
