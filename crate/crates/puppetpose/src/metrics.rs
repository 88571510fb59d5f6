//! Pose metrics (similarity-aligned MPJPE, PCK, AUC) and segmentation F1.

use crate::error::{Error, Result};
use crate::geometry::vec3::{self, Vec3};
use crate::puppet::SegMap;
use nalgebra::{Matrix3, Vector3};

/// Recovered similarity transform `x -> s * R * x + t`.
#[derive(Clone, Debug)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        let v = self.rotation * Vector3::new(p[0], p[1], p[2]) * self.scale + self.translation;
        [v[0], v[1], v[2]]
    }
}

/// Per-sample values plus their mean for one metric.
#[derive(Clone, Debug)]
pub struct MetricReport {
    pub name: String,
    pub alignment: String,
    pub per_sample: Vec<f64>,
    pub mean: f64,
}

impl MetricReport {
    pub fn new(name: &str, alignment: &str, per_sample: Vec<f64>) -> Self {
        let mean = per_sample.iter().sum::<f64>() / per_sample.len().max(1) as f64;
        Self { name: name.into(), alignment: alignment.into(), per_sample, mean }
    }
}

/// Least-squares similarity aligning `p` onto `q` (reflections excluded).
pub fn procrustes_align(p: &[Vec3], q: &[Vec3]) -> Result<SimilarityTransform> {
    if p.len() != q.len() || p.len() < 3 {
        return Err(Error::InvalidInput("procrustes needs >= 3 matched points".into()));
    }
    let n = p.len() as f64;
    let mut pc = [0.0; 3];
    let mut qc = [0.0; 3];
    for i in 0..p.len() {
        pc = vec3::add(pc, p[i]);
        qc = vec3::add(qc, q[i]);
    }
    pc = vec3::scale(pc, 1.0 / n);
    qc = vec3::scale(qc, 1.0 / n);

    let mut h = Matrix3::zeros();
    let mut p_var = 0.0;
    for i in 0..p.len() {
        let a = vec3::sub(p[i], pc);
        let b = vec3::sub(q[i], qc);
        p_var += vec3::dot(a, a);
        for r in 0..3 {
            for c in 0..3 {
                h[(r, c)] += b[r] * a[c];
            }
        }
    }
    if p_var < 1e-20 {
        return Err(Error::DegenerateInput("all source points coincide".into()));
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let sing = svd.singular_values;
    if sing[1] < 1e-12 * sing[0].max(1e-300) {
        return Err(Error::DegenerateInput(
            "rank-deficient point configuration for procrustes".into(),
        ));
    }
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = u * d * vt;
    let trace = sing[0] + sing[1] + d[(2, 2)] * sing[2];
    let scale = trace / p_var;
    let pc_v = Vector3::new(pc[0], pc[1], pc[2]);
    let qc_v = Vector3::new(qc[0], qc[1], qc[2]);
    let translation = qc_v - rotation * pc_v * scale;
    Ok(SimilarityTransform { scale, rotation, translation })
}

/// Mean per-joint position error after similarity alignment.
pub fn mpjpe_pa(pred: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    let t = procrustes_align(pred, gt)?;
    let mut total = 0.0;
    for i in 0..pred.len() {
        total += vec3::norm(vec3::sub(t.apply(pred[i]), gt[i]));
    }
    Ok(total / pred.len() as f64)
}

/// Fraction of joints with aligned error below `thr`.
pub fn pck3d(pred: &[Vec3], gt: &[Vec3], thr: f64) -> Result<f64> {
    let t = procrustes_align(pred, gt)?;
    let hits = (0..pred.len())
        .filter(|&i| vec3::norm(vec3::sub(t.apply(pred[i]), gt[i])) < thr)
        .count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Mean PCK over 31 thresholds spanning `(0, thr_max]`.
pub fn auc(pred: &[Vec3], gt: &[Vec3], thr_max: f64) -> Result<f64> {
    let t = procrustes_align(pred, gt)?;
    let errors: Vec<f64> = (0..pred.len())
        .map(|i| vec3::norm(vec3::sub(t.apply(pred[i]), gt[i])))
        .collect();
    let mut acc = 0.0;
    for step in 1..=31 {
        let thr = thr_max * step as f64 / 31.0;
        // `<=` so a perfect prediction scores 1 at every threshold.
        acc += errors.iter().filter(|&&e| e <= thr).count() as f64 / errors.len() as f64;
    }
    Ok(acc / 31.0)
}

fn f1(tp: usize, fp: usize, fne: usize) -> f64 {
    if 2 * tp + fp + fne == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fne) as f64
    }
}

/// Foreground-vs-background F1 and the macro-mean per-part F1 over parts
/// present in the ground truth.
pub fn seg_f1(pred: &SegMap, gt: &SegMap, num_parts: usize) -> Result<(f64, f64)> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::InvalidInput("segmentation maps differ in resolution".into()));
    }
    let bg = SegMap::background_label(num_parts);
    let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
    for (p, g) in pred.labels.iter().zip(&gt.labels) {
        let pf = *p != bg;
        let gf = *g != bg;
        match (pf, gf) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            _ => {}
        }
    }
    let fg_f1 = f1(tp, fp, fne);

    let mut part_scores = Vec::new();
    for label in 1..=num_parts as u8 {
        if !gt.labels.iter().any(|&g| g == label) {
            continue;
        }
        let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
        for (p, g) in pred.labels.iter().zip(&gt.labels) {
            match (*p == label, *g == label) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fne += 1,
                _ => {}
            }
        }
        part_scores.push(f1(tp, fp, fne));
    }
    let mean_part = part_scores.iter().sum::<f64>() / part_scores.len().max(1) as f64;
    Ok((fg_f1, mean_part))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rot(axis: Vec3, angle: f64) -> Matrix3<f64> {
        let (s, c) = angle.sin_cos();
        let [x, y, z] = axis;
        let t = 1.0 - c;
        Matrix3::new(
            t * x * x + c, t * x * y - s * z, t * x * z + s * y,
            t * x * y + s * z, t * y * y + c, t * y * z - s * x,
            t * x * z - s * y, t * y * z + s * x, t * z * z + c,
        )
    }

    fn random_points(rng: &mut StdRng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]
            })
            .collect()
    }

    #[test]
    fn exact_similarity_is_recovered() {
        let mut rng = StdRng::seed_from_u64(1);
        let p = random_points(&mut rng, 8);
        let r = rot([0.0, 0.6, 0.8], 1.1);
        let s = 2.3;
        let t = Vector3::new(0.4, -0.2, 1.0);
        let q: Vec<Vec3> = p
            .iter()
            .map(|x| {
                let v = r * Vector3::new(x[0], x[1], x[2]) * s + t;
                [v[0], v[1], v[2]]
            })
            .collect();
        let tf = procrustes_align(&p, &q).unwrap();
        assert!((tf.scale - s).abs() < 1e-9);
        for i in 0..p.len() {
            let m = tf.apply(p[i]);
            assert!(vec3::norm(vec3::sub(m, q[i])) < 1e-9);
        }
        assert!(mpjpe_pa(&p, &q).unwrap() < 1e-9);
    }

    #[test]
    fn perfect_prediction_scores_perfectly() {
        let mut rng = StdRng::seed_from_u64(2);
        let p = random_points(&mut rng, 17);
        assert!(mpjpe_pa(&p, &p).unwrap() < 1e-12);
        assert_eq!(pck3d(&p, &p, 0.15).unwrap(), 1.0);
        assert_eq!(auc(&p, &p, 0.15).unwrap(), 1.0);
    }

    #[test]
    fn uniform_offset_is_removed_by_alignment() {
        let mut rng = StdRng::seed_from_u64(3);
        let p = random_points(&mut rng, 17);
        let q: Vec<Vec3> = p.iter().map(|x| vec3::add(*x, [1.0, 1.0, 1.0])).collect();
        assert!(mpjpe_pa(&q, &p).unwrap() < 1e-9);
    }

    #[test]
    fn alignment_residual_invariant_to_joint_prerotation() {
        let mut rng = StdRng::seed_from_u64(4);
        let p = random_points(&mut rng, 6);
        let mut q = random_points(&mut rng, 6);
        for v in &mut q {
            *v = vec3::add(*v, [0.05, 0.0, 0.0]);
        }
        let base = mpjpe_pa(&p, &q).unwrap();
        let r = rot(vec3::normalize([1.0, 2.0, 0.5]), 0.7);
        let pr: Vec<Vec3> = p
            .iter()
            .map(|x| {
                let v = r * Vector3::new(x[0], x[1], x[2]);
                [v[0], v[1], v[2]]
            })
            .collect();
        let qr: Vec<Vec3> = q
            .iter()
            .map(|x| {
                let v = r * Vector3::new(x[0], x[1], x[2]);
                [v[0], v[1], v[2]]
            })
            .collect();
        let rotated = mpjpe_pa(&pr, &qr).unwrap();
        assert!((base - rotated).abs() < 1e-9);
    }

    #[test]
    fn pck_is_monotone_in_threshold() {
        let mut rng = StdRng::seed_from_u64(5);
        let p = random_points(&mut rng, 17);
        let q: Vec<Vec3> = p
            .iter()
            .map(|x| vec3::add(*x, [rng.gen_range(-0.1..0.1), 0.0, 0.0]))
            .collect();
        let mut prev = 0.0;
        for k in 1..=10 {
            let v = pck3d(&p, &q, 0.02 * k as f64).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn rank_deficient_configuration_errors() {
        // All points on a line.
        let p: Vec<Vec3> = (0..5).map(|i| [i as f64, 0.0, 0.0]).collect();
        let q = p.clone();
        assert!(procrustes_align(&p, &q).is_err());
    }

    #[test]
    fn seg_f1_hand_counted_confusion() {
        // 2x2 maps, 1 part (labels: 1 = part, 2 = background).
        // pred: [1, 1, 2, 2], gt: [1, 2, 1, 2] -> tp=1, fp=1, fn=1 -> F1 = 0.5.
        let pred = SegMap { width: 2, height: 2, labels: vec![1, 1, 2, 2] };
        let gt = SegMap { width: 2, height: 2, labels: vec![1, 2, 1, 2] };
        let (fg, parts) = seg_f1(&pred, &gt, 1).unwrap();
        assert!((fg - 0.5).abs() < 1e-12);
        assert!((parts - 0.5).abs() < 1e-12);
    }

    #[test]
    fn seg_f1_perfect_and_all_background() {
        let gt = SegMap { width: 2, height: 2, labels: vec![1, 2, 3, 11] };
        let (fg, parts) = seg_f1(&gt, &gt, 10).unwrap();
        assert_eq!((fg, parts), (1.0, 1.0));
        let empty = SegMap { width: 2, height: 2, labels: vec![11; 4] };
        let (fg0, parts0) = seg_f1(&empty, &gt, 10).unwrap();
        assert_eq!((fg0, parts0), (0.0, 0.0));
    }
}
