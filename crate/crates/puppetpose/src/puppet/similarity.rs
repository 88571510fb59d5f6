//! 2D similarity transforms anchored at limb joints.
//!
//! A similarity (rotation, uniform scale, translation) is a complex-linear
//! map `z -> alpha*z + beta`. Two anchor correspondences determine it
//! exactly; the four torso anchors determine it in the least-squares sense,
//! which is an ordinary linear least-squares problem in `(alpha, beta)` with
//! a closed form. Scale is floored at `s_min` by shrinking proportionally
//! toward the anchor midpoint/centroid.

use crate::error::{Error, Result};

/// Complex scalar used for 2D similarity algebra.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct C {
    pub re: f64,
    pub im: f64,
}

impl C {
    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn from_pt(p: [f64; 2]) -> Self {
        Self { re: p[0], im: p[1] }
    }

    pub fn to_pt(self) -> [f64; 2] {
        [self.re, self.im]
    }

    pub fn add(self, o: C) -> C {
        C::new(self.re + o.re, self.im + o.im)
    }

    pub fn sub(self, o: C) -> C {
        C::new(self.re - o.re, self.im - o.im)
    }

    pub fn mul(self, o: C) -> C {
        C::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }

    pub fn div(self, o: C) -> C {
        let d = o.re * o.re + o.im * o.im;
        C::new(
            (self.re * o.re + self.im * o.im) / d,
            (self.im * o.re - self.re * o.im) / d,
        )
    }

    pub fn conj(self) -> C {
        C::new(self.re, -self.im)
    }

    pub fn scale(self, s: f64) -> C {
        C::new(self.re * s, self.im * s)
    }

    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn zero() -> C {
        C::new(0.0, 0.0)
    }
}

/// A 2D affine map `x -> linear*x + translation`; for limb warps the linear
/// part is a similarity (`R^T R = s^2 I`).
#[derive(Clone, Copy, Debug)]
pub struct Affine2D {
    pub linear: [[f64; 2]; 2],
    pub translation: [f64; 2],
}

impl Affine2D {
    pub(crate) fn from_complex(alpha: C, beta: C) -> Self {
        Self {
            linear: [[alpha.re, -alpha.im], [alpha.im, alpha.re]],
            translation: [beta.re, beta.im],
        }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.linear[0][0] * p[0] + self.linear[0][1] * p[1] + self.translation[0],
            self.linear[1][0] * p[0] + self.linear[1][1] * p[1] + self.translation[1],
        ]
    }

    /// Uniform scale factor of the linear part.
    pub fn scale(&self) -> f64 {
        self.linear[0][0].hypot(self.linear[1][0])
    }
}

/// How the similarity parameters respond to the pose anchors; consumed by the
/// warp backward pass.
#[derive(Clone, Debug)]
pub(crate) enum SimCtx {
    /// Exact 2-point fit: `alpha_raw = w*(q2-q1)`, `beta = q1 - alpha*r1`.
    Limb { w: C, r1: C, floor: Option<FloorCtx> },
    /// Least-squares 4-point fit: `alpha_raw = sum c_k q_k`, centroid form.
    Torso { c: [C; 4], r_mean: C, floor: Option<FloorCtx> },
}

/// Present when the raw scale fell below `s_min` and the transform was
/// re-anchored at the midpoint/centroid.
#[derive(Clone, Copy, Debug)]
pub(crate) struct FloorCtx {
    pub alpha_raw: C,
    pub s_min: f64,
    /// Midpoint (limb) or centroid (torso) of the canonical anchors.
    pub anchor_center: C,
}

pub(crate) struct SimFit {
    pub alpha: C,
    pub beta: C,
    pub ctx: SimCtx,
}

fn floor_alpha(alpha_raw: C, s_min: f64) -> (C, bool) {
    let a = alpha_raw.abs();
    if a >= s_min {
        (alpha_raw, false)
    } else if a > 0.0 {
        (alpha_raw.scale(s_min / a), true)
    } else {
        (C::new(s_min, 0.0), true)
    }
}

/// The unique similarity with `A(r1) = q1`, `A(r2) = q2` (scale floored).
pub(crate) fn fit_limb(r1: [f64; 2], r2: [f64; 2], q1: [f64; 2], q2: [f64; 2], s_min: f64) -> Result<SimFit> {
    let (r1, r2) = (C::from_pt(r1), C::from_pt(r2));
    let (q1, q2) = (C::from_pt(q1), C::from_pt(q2));
    let dr = r2.sub(r1);
    if dr.abs() < 1e-9 {
        return Err(Error::Template("coincident canonical anchors for limb".into()));
    }
    let w = C::new(1.0, 0.0).div(dr);
    let alpha_raw = q2.sub(q1).mul(w);
    let (alpha, floored) = floor_alpha(alpha_raw, s_min);
    if !floored {
        Ok(SimFit {
            alpha,
            beta: q1.sub(alpha.mul(r1)),
            ctx: SimCtx::Limb { w, r1, floor: None },
        })
    } else {
        let mid_r = r1.add(r2).scale(0.5);
        let mid_q = q1.add(q2).scale(0.5);
        Ok(SimFit {
            alpha,
            beta: mid_q.sub(alpha.mul(mid_r)),
            ctx: SimCtx::Limb {
                w,
                r1,
                floor: Some(FloorCtx { alpha_raw, s_min, anchor_center: mid_r }),
            },
        })
    }
}

/// Least-squares similarity over four anchor correspondences.
pub(crate) fn fit_torso(r: &[[f64; 2]; 4], q: &[[f64; 2]; 4], s_min: f64) -> Result<SimFit> {
    let rc: Vec<C> = r.iter().map(|p| C::from_pt(*p)).collect();
    let qc: Vec<C> = q.iter().map(|p| C::from_pt(*p)).collect();
    let r_mean = rc.iter().fold(C::zero(), |a, b| a.add(*b)).scale(0.25);
    let q_mean = qc.iter().fold(C::zero(), |a, b| a.add(*b)).scale(0.25);

    // Collinearity test on the centered canonical anchors.
    let centered: Vec<C> = rc.iter().map(|p| p.sub(r_mean)).collect();
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for d in &centered {
        sxx += d.re * d.re;
        syy += d.im * d.im;
        sxy += d.re * d.im;
    }
    let tr = sxx + syy;
    let disc = ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt();
    let lam_min = 0.5 * (tr - disc);
    if tr < 1e-12 || lam_min <= 1e-9 * tr {
        return Err(Error::Template("torso anchors are collinear".into()));
    }

    let den: f64 = centered.iter().map(|d| d.re * d.re + d.im * d.im).sum();
    let mut coeff = [C::zero(); 4];
    let mut alpha_raw = C::zero();
    for k in 0..4 {
        coeff[k] = centered[k].conj().scale(1.0 / den);
        alpha_raw = alpha_raw.add(coeff[k].mul(qc[k]));
    }
    let (alpha, floored) = floor_alpha(alpha_raw, s_min);
    let floor = floored.then_some(FloorCtx { alpha_raw, s_min, anchor_center: r_mean });
    Ok(SimFit {
        alpha,
        beta: q_mean.sub(alpha.mul(r_mean)),
        ctx: SimCtx::Torso { c: coeff, r_mean, floor },
    })
}

/// VJP through the scale floor: adjoint of `alpha = s_min * u`, `u = a/|a|`.
fn floor_backward(fl: &FloorCtx, alpha_bar: C) -> C {
    let a = fl.alpha_raw.abs();
    if a == 0.0 {
        return C::zero();
    }
    let u = [fl.alpha_raw.re / a, fl.alpha_raw.im / a];
    let g = [alpha_bar.re, alpha_bar.im];
    let proj = u[0] * g[0] + u[1] * g[1];
    C::new(
        fl.s_min / a * (g[0] - u[0] * proj),
        fl.s_min / a * (g[1] - u[1] * proj),
    )
}

impl SimFit {
    /// Pulls adjoints on `(alpha, beta)` back to the pose anchors. Returns
    /// one gradient per anchor point, in the anchor order of the fit.
    pub(crate) fn backward(&self, alpha_bar: C, beta_bar: C) -> Vec<[f64; 2]> {
        match &self.ctx {
            SimCtx::Limb { w, r1, floor } => match floor {
                None => {
                    // beta = q1 - alpha*r1
                    let mut q1_bar = beta_bar;
                    let alpha_total = alpha_bar.add(r1.conj().scale(-1.0).mul(beta_bar));
                    // alpha = w*(q2 - q1)
                    let through = w.conj().mul(alpha_total);
                    q1_bar = q1_bar.sub(through);
                    let q2_bar = through;
                    vec![q1_bar.to_pt(), q2_bar.to_pt()]
                }
                Some(fl) => {
                    // beta = mid_q - alpha*mid_r, mid_q = (q1+q2)/2
                    let mut q1_bar = beta_bar.scale(0.5);
                    let mut q2_bar = beta_bar.scale(0.5);
                    let alpha_total = alpha_bar.add(fl.anchor_center.conj().scale(-1.0).mul(beta_bar));
                    let raw_bar = floor_backward(fl, alpha_total);
                    let through = w.conj().mul(raw_bar);
                    q1_bar = q1_bar.sub(through);
                    q2_bar = q2_bar.add(through);
                    vec![q1_bar.to_pt(), q2_bar.to_pt()]
                }
            },
            SimCtx::Torso { c, r_mean, floor } => {
                // beta = q_mean - alpha*r_mean
                let alpha_total = alpha_bar.add(r_mean.conj().scale(-1.0).mul(beta_bar));
                let raw_bar = match floor {
                    None => alpha_total,
                    Some(fl) => floor_backward(fl, alpha_total),
                };
                (0..4)
                    .map(|k| c[k].conj().mul(raw_bar).add(beta_bar.scale(0.25)).to_pt())
                    .collect()
            }
        }
    }
}

/// Exact two-anchor similarity as a public affine transform.
pub fn limb_similarity(
    r1: [f64; 2],
    r2: [f64; 2],
    q1: [f64; 2],
    q2: [f64; 2],
    s_min: f64,
) -> Result<Affine2D> {
    let fit = fit_limb(r1, r2, q1, q2, s_min)?;
    Ok(Affine2D::from_complex(fit.alpha, fit.beta))
}

/// Least-squares four-anchor similarity as a public affine transform.
pub fn torso_similarity(r: &[[f64; 2]; 4], q: &[[f64; 2]; 4], s_min: f64) -> Result<Affine2D> {
    let fit = fit_torso(r, q, s_min)?;
    Ok(Affine2D::from_complex(fit.alpha, fit.beta))
}

#[cfg(test)]
mod tests {
    use super::*;

    const S_MIN: f64 = 1e-3;

    #[test]
    fn identity_when_pose_matches_anchors() {
        let a = limb_similarity([1.0, 2.0], [4.0, -1.0], [1.0, 2.0], [4.0, -1.0], S_MIN).unwrap();
        assert!((a.linear[0][0] - 1.0).abs() < 1e-12);
        assert!(a.linear[0][1].abs() < 1e-12);
        assert!(a.translation[0].abs() < 1e-12 && a.translation[1].abs() < 1e-12);
    }

    #[test]
    fn pure_translation() {
        let a = limb_similarity([1.0, 2.0], [4.0, -1.0], [6.0, 2.0], [9.0, -1.0], S_MIN).unwrap();
        assert!((a.translation[0] - 5.0).abs() < 1e-12);
        assert!(a.translation[1].abs() < 1e-12);
        assert!((a.scale() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_case_matches_complex_ratio_oracle() {
        // r1=(0,0), r2=(0,2) -> q1=(1,1), q2=(3,1): rotation -90 deg, scale 1,
        // translation (1,1); oracle alpha = (q2-q1)/(r2-r1) = 2/(2i) = -i.
        let a = limb_similarity([0.0, 0.0], [0.0, 2.0], [1.0, 1.0], [3.0, 1.0], S_MIN).unwrap();
        assert!((a.scale() - 1.0).abs() < 1e-12);
        assert!((a.linear[0][0] - 0.0).abs() < 1e-12);
        assert!((a.linear[0][1] - 1.0).abs() < 1e-12); // alpha = -i
        assert!((a.linear[1][0] + 1.0).abs() < 1e-12);
        assert!((a.translation[0] - 1.0).abs() < 1e-12);
        assert!((a.translation[1] - 1.0).abs() < 1e-12);
        // And it maps the anchors exactly.
        let m1 = a.apply([0.0, 0.0]);
        let m2 = a.apply([0.0, 2.0]);
        assert!((m1[0] - 1.0).abs() < 1e-12 && (m1[1] - 1.0).abs() < 1e-12);
        assert!((m2[0] - 3.0).abs() < 1e-12 && (m2[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_canonical_anchors_error() {
        assert!(matches!(
            limb_similarity([1.0, 1.0], [1.0, 1.0], [0.0, 0.0], [1.0, 0.0], S_MIN),
            Err(Error::Template(_))
        ));
    }

    #[test]
    fn collapsed_pose_anchors_floor_the_scale() {
        let a = limb_similarity([0.0, 0.0], [10.0, 0.0], [3.0, 3.0], [3.0, 3.0], 0.05).unwrap();
        assert!((a.scale() - 0.05).abs() < 1e-12);
        // Midpoint maps to midpoint.
        let m = a.apply([5.0, 0.0]);
        assert!((m[0] - 3.0).abs() < 1e-12 && (m[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn torso_recovers_exact_similarity() {
        let r = [[10.0, 10.0], [30.0, 10.0], [10.0, 40.0], [30.0, 40.0]];
        let truth = Affine2D::from_complex(C::new(0.8, 0.6), C::new(5.0, -3.0));
        let q = [
            truth.apply(r[0]),
            truth.apply(r[1]),
            truth.apply(r[2]),
            truth.apply(r[3]),
        ];
        let fit = torso_similarity(&r, &q, S_MIN).unwrap();
        let mut residual = 0.0;
        for k in 0..4 {
            let m = fit.apply(r[k]);
            residual += (m[0] - q[k][0]).powi(2) + (m[1] - q[k][1]).powi(2);
        }
        assert!(residual < 1e-18);
    }

    #[test]
    fn torso_matches_normal_equations_oracle_with_noise() {
        // Solve the 4x4 normal equations for (a, b, tx, ty) directly:
        // A(r) = [[a, -b], [b, a]] r + t.
        let r = [[12.0, 20.0], [40.0, 18.0], [15.0, 60.0], [42.0, 58.0]];
        let mut q = [[30.0, 25.0], [55.0, 28.0], [28.0, 63.0], [60.0, 66.0]];
        q[2][0] += 3.5; // perturb one point

        let fit = torso_similarity(&r, &q, S_MIN).unwrap();

        // Normal equations: unknowns x = (a, b, tx, ty); rows per point:
        // [rx, -ry, 1, 0] . x = qx ; [ry, rx, 0, 1] . x = qy
        let mut ata = [[0.0f64; 4]; 4];
        let mut atb = [0.0f64; 4];
        for k in 0..4 {
            let rows = [
                ([r[k][0], -r[k][1], 1.0, 0.0], q[k][0]),
                ([r[k][1], r[k][0], 0.0, 1.0], q[k][1]),
            ];
            for (row, b) in rows {
                for i in 0..4 {
                    for jj in 0..4 {
                        ata[i][jj] += row[i] * row[jj];
                    }
                    atb[i] += row[i] * b;
                }
            }
        }
        // Gaussian elimination.
        let mut m = ata;
        let mut v = atb;
        for col in 0..4 {
            let piv = (col..4).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
            m.swap(col, piv);
            v.swap(col, piv);
            for row in 0..4 {
                if row != col {
                    let f = m[row][col] / m[col][col];
                    for jj in 0..4 {
                        m[row][jj] -= f * m[col][jj];
                    }
                    v[row] -= f * v[col];
                }
            }
        }
        let sol: Vec<f64> = (0..4).map(|i| v[i] / m[i][i]).collect();

        assert!((fit.linear[0][0] - sol[0]).abs() < 1e-6);
        assert!((fit.linear[1][0] - sol[1]).abs() < 1e-6);
        assert!((fit.translation[0] - sol[2]).abs() < 1e-6);
        assert!((fit.translation[1] - sol[3]).abs() < 1e-6);
    }

    #[test]
    fn torso_is_permutation_consistent() {
        let r = [[12.0, 20.0], [40.0, 18.0], [15.0, 60.0], [42.0, 58.0]];
        let q = [[30.0, 25.0], [55.0, 28.0], [28.0, 63.0], [60.0, 66.0]];
        let a = torso_similarity(&r, &q, S_MIN).unwrap();
        let perm = [2usize, 0, 3, 1];
        let rp = [r[perm[0]], r[perm[1]], r[perm[2]], r[perm[3]]];
        let qp = [q[perm[0]], q[perm[1]], q[perm[2]], q[perm[3]]];
        let b = torso_similarity(&rp, &qp, S_MIN).unwrap();
        assert!((a.linear[0][0] - b.linear[0][0]).abs() < 1e-12);
        assert!((a.translation[1] - b.translation[1]).abs() < 1e-12);
    }

    #[test]
    fn collinear_torso_anchors_error() {
        let r = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let q = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        assert!(matches!(
            torso_similarity(&r, &q, S_MIN),
            Err(Error::Template(_))
        ));
    }
}
