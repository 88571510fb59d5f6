//! Differentiable puppet pipeline stages as tape ops, plus plain-function
//! wrappers for forward-only use.

use super::dictionary::PartDictionary;
use super::similarity::{fit_limb, fit_torso, SimFit, C};
use crate::diffcore::{Op, Tensor};
use crate::error::{Error, Result};
use crate::parallel;
use std::sync::Arc;

/// Minimum similarity scale; collapsed limbs shrink toward their midpoint
/// instead of degenerating.
pub const DEFAULT_S_MIN: f64 = 1e-3;

/// Hard per-pixel part labels, 1..=L for parts and L+1 for background.
#[derive(Clone, Debug, PartialEq)]
pub struct SegMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
}

impl SegMap {
    pub fn background_label(num_parts: usize) -> u8 {
        (num_parts + 1) as u8
    }
}

#[inline]
fn bilinear_sample(map: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let xi = x0 as isize;
    let yi = y0 as isize;
    let get = |xx: isize, yy: isize| -> f64 {
        if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
            0.0
        } else {
            map[yy as usize * w + xx as usize]
        }
    };
    (1.0 - fx) * (1.0 - fy) * get(xi, yi)
        + fx * (1.0 - fy) * get(xi + 1, yi)
        + (1.0 - fx) * fy * get(xi, yi + 1)
        + fx * fy * get(xi + 1, yi + 1)
}

/// Bilinear value and its spatial gradient at (x, y).
#[inline]
fn bilinear_with_grad(map: &[f64], w: usize, h: usize, x: f64, y: f64) -> (f64, f64, f64) {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let xi = x0 as isize;
    let yi = y0 as isize;
    let get = |xx: isize, yy: isize| -> f64 {
        if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
            0.0
        } else {
            map[yy as usize * w + xx as usize]
        }
    };
    let m00 = get(xi, yi);
    let m10 = get(xi + 1, yi);
    let m01 = get(xi, yi + 1);
    let m11 = get(xi + 1, yi + 1);
    let v = (1.0 - fx) * (1.0 - fy) * m00 + fx * (1.0 - fy) * m10 + (1.0 - fx) * fy * m01 + fx * fy * m11;
    let dx = (1.0 - fy) * (m10 - m00) + fy * (m11 - m01);
    let dy = (1.0 - fx) * (m01 - m00) + fx * (m11 - m10);
    (v, dx, dy)
}

/// Normalized [-1,1] coordinates to pixel coordinates.
#[inline]
pub fn to_pixel(q: [f64; 2], width: usize, height: usize) -> [f64; 2] {
    [
        (q[0] + 1.0) * 0.5 * (width - 1) as f64,
        (q[1] + 1.0) * 0.5 * (height - 1) as f64,
    ]
}

fn fit_part(part_joints: &[usize], anchors: &[[f64; 2]], q_px: &[[f64; 2]], s_min: f64) -> Result<SimFit> {
    match part_joints.len() {
        2 => fit_limb(
            anchors[0],
            anchors[1],
            q_px[part_joints[0]],
            q_px[part_joints[1]],
            s_min,
        ),
        4 => {
            let r = [anchors[0], anchors[1], anchors[2], anchors[3]];
            let q = [
                q_px[part_joints[0]],
                q_px[part_joints[1]],
                q_px[part_joints[2]],
                q_px[part_joints[3]],
            ];
            fit_torso(&r, &q, s_min)
        }
        n => Err(Error::Template(format!("part anchors must be 2 or 4, got {n}"))),
    }
}

/// Tape op: joint-anchored part deformation.
///
/// Input `q [J,2]` (normalized image coordinates); outputs the pose-deformed
/// part maps `phi_p [L,H,W]` and uncertainty maps `psi_p [L,H,W]`, each part
/// warped by its anchor-determined similarity via inverse mapping with
/// bilinear sampling and zero padding.
pub struct DeformOp {
    pub dict: Arc<PartDictionary>,
    pub s_min: f64,
}

impl DeformOp {
    fn q_pixels(&self, q: &Tensor) -> Vec<[f64; 2]> {
        (0..q.shape()[0])
            .map(|j| to_pixel(q.row2(j), self.dict.width, self.dict.height))
            .collect()
    }
}

impl Op for DeformOp {
    fn name(&self) -> &'static str {
        "deform"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
        let (w, h) = (self.dict.width, self.dict.height);
        let l = self.dict.part_count();
        let q_px = self.q_pixels(inputs[0]);
        let warped = parallel::try_map_indexed(l, |li| -> Result<(Vec<f64>, Vec<f64>)> {
            let part = &self.dict.parts[li];
            let fit = fit_part(&part.joints, &part.anchors, &q_px, self.s_min)?;
            let inv_a = C::new(1.0, 0.0).div(fit.alpha);
            let c = C::zero().sub(fit.beta).mul(inv_a);
            let mut phi = vec![0.0; w * h];
            let mut psi = vec![0.0; w * h];
            for y in 0..h {
                let fy = y as f64;
                for x in 0..w {
                    let fx = x as f64;
                    let gx = inv_a.re * fx - inv_a.im * fy + c.re;
                    let gy = inv_a.im * fx + inv_a.re * fy + c.im;
                    phi[y * w + x] = bilinear_sample(&part.phi, w, h, gx, gy);
                    psi[y * w + x] = bilinear_sample(&part.psi, w, h, gx, gy);
                }
            }
            Ok((phi, psi))
        })?;
        let mut phi_p = Tensor::zeros(vec![l, h, w]);
        let mut psi_p = Tensor::zeros(vec![l, h, w]);
        for (li, (phi, psi)) in warped.into_iter().enumerate() {
            phi_p.data_mut()[li * w * h..(li + 1) * w * h].copy_from_slice(&phi);
            psi_p.data_mut()[li * w * h..(li + 1) * w * h].copy_from_slice(&psi);
        }
        Ok(vec![phi_p, psi_p])
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _outputs: &[&Tensor],
        grad_outputs: &[&Tensor],
    ) -> Result<Vec<Tensor>> {
        let (w, h) = (self.dict.width, self.dict.height);
        let l = self.dict.part_count();
        let q = inputs[0];
        let j = q.shape()[0];
        let q_px = self.q_pixels(q);
        let phi_bar = grad_outputs[0];
        let psi_bar = grad_outputs[1];

        let per_part = parallel::try_map_indexed(l, |li| -> Result<Vec<(usize, [f64; 2])>> {
            let part = &self.dict.parts[li];
            let fit = fit_part(&part.joints, &part.anchors, &q_px, self.s_min)?;
            let inv_a = C::new(1.0, 0.0).div(fit.alpha);
            let c = C::zero().sub(fit.beta).mul(inv_a);
            let inv_conj = inv_a.conj();
            let mut alpha_bar = C::zero();
            let mut beta_bar = C::zero();
            let base = li * w * h;
            for y in 0..h {
                let fy = y as f64;
                for x in 0..w {
                    let g_phi = phi_bar.data()[base + y * w + x];
                    let g_psi = psi_bar.data()[base + y * w + x];
                    if g_phi == 0.0 && g_psi == 0.0 {
                        continue;
                    }
                    let fx = x as f64;
                    let gx = inv_a.re * fx - inv_a.im * fy + c.re;
                    let gy = inv_a.im * fx + inv_a.re * fy + c.im;
                    let (_, px, py) = bilinear_with_grad(&part.phi, w, h, gx, gy);
                    let (_, sx, sy) = bilinear_with_grad(&part.psi, w, h, gx, gy);
                    let v = C::new(g_phi * px + g_psi * sx, g_phi * py + g_psi * sy);
                    // g = (u - beta)/alpha: dg/dbeta = -1/alpha, dg/dalpha = -g/alpha.
                    beta_bar = beta_bar.sub(inv_conj.mul(v));
                    let gc = C::new(gx, gy);
                    alpha_bar = alpha_bar.sub(gc.conj().mul(inv_conj).mul(v));
                }
            }
            let anchor_grads = fit.backward(alpha_bar, beta_bar);
            Ok(part
                .joints
                .iter()
                .zip(anchor_grads)
                .map(|(&ji, g)| (ji, g))
                .collect())
        })?;

        let mut q_bar = Tensor::zeros(vec![j, 2]);
        let sx = 0.5 * (w - 1) as f64;
        let sy = 0.5 * (h - 1) as f64;
        for contributions in per_part {
            for (ji, g) in contributions {
                q_bar.add_row2(ji, [g[0] * sx, g[1] * sy]);
            }
        }
        Ok(vec![q_bar])
    }
}

/// Tape op: per-limb scalar depth as the mean of the anchor joints' depths.
pub struct LimbDepthsOp {
    pub dict: Arc<PartDictionary>,
}

impl Op for LimbDepthsOp {
    fn name(&self) -> &'static str {
        "limb_depths"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
        let qd = inputs[0];
        let d: Vec<f64> = self
            .dict
            .parts
            .iter()
            .map(|p| p.joints.iter().map(|&ji| qd.data()[ji]).sum::<f64>() / p.joints.len() as f64)
            .collect();
        Ok(vec![Tensor::from_vec(d)])
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _outputs: &[&Tensor],
        grad_outputs: &[&Tensor],
    ) -> Result<Vec<Tensor>> {
        let mut qd_bar = Tensor::zeros(vec![inputs[0].len()]);
        for (li, p) in self.dict.parts.iter().enumerate() {
            let g = grad_outputs[0].data()[li] / p.joints.len() as f64;
            for &ji in &p.joints {
                qd_bar.data_mut()[ji] += g;
            }
        }
        Ok(vec![qd_bar])
    }
}

/// Tape op: depth-aware two-stage soft compositing.
///
/// Inputs `(phi_p [L,H,W], d [L])`; outputs `(phi_d [L+1,H,W], phibar
/// [L+1,H,W])`. Stage one softmaxes `phi_p/d` over parts, the background
/// channel is one minus the stage-one maximum, stage two softmaxes all L+1
/// channels. Both softmaxes divide their logits by the temperature, and
/// depths are optionally normalized by their mean first.
pub struct DepthComposeOp {
    pub tau: f64,
    pub normalize_depth: bool,
}

impl DepthComposeOp {
    fn normalized(&self, d: &Tensor) -> Result<Vec<f64>> {
        for (i, &v) in d.data().iter().enumerate() {
            if v <= 0.0 {
                return Err(Error::InvalidInput(format!("limb depth {i} is non-positive ({v})")));
            }
        }
        if self.normalize_depth {
            let mean = d.data().iter().sum::<f64>() / d.len() as f64;
            Ok(d.data().iter().map(|v| v / mean).collect())
        } else {
            Ok(d.data().to_vec())
        }
    }
}

fn softmax_inplace(logits: &mut [f64]) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Op for DepthComposeOp {
    fn name(&self) -> &'static str {
        "depth_compose"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
        let phi = inputs[0];
        let l = phi.shape()[0];
        let (h, w) = (phi.shape()[1], phi.shape()[2]);
        if inputs[1].len() != l {
            return Err(Error::InvalidInput("depth vector length != part count".into()));
        }
        let dn = self.normalized(inputs[1])?;
        let tau = self.tau;

        let rows = parallel::map_indexed(h, |y| {
            let mut phi_d_row = vec![0.0; (l + 1) * w];
            let mut phibar_row = vec![0.0; (l + 1) * w];
            let mut s = vec![0.0; l];
            let mut t = vec![0.0; l + 1];
            for x in 0..w {
                for li in 0..l {
                    s[li] = phi.data()[(li * h + y) * w + x] / (dn[li] * tau);
                }
                softmax_inplace(&mut s);
                let bg = 1.0 - s[argmax_lowest(&s)];
                for li in 0..l {
                    phi_d_row[li * w + x] = s[li];
                    t[li] = s[li] / tau;
                }
                phi_d_row[l * w + x] = bg;
                t[l] = bg / tau;
                softmax_inplace(&mut t);
                for li in 0..=l {
                    phibar_row[li * w + x] = t[li];
                }
            }
            (phi_d_row, phibar_row)
        });

        let mut phi_d = Tensor::zeros(vec![l + 1, h, w]);
        let mut phibar = Tensor::zeros(vec![l + 1, h, w]);
        for (y, (pd, pb)) in rows.into_iter().enumerate() {
            for li in 0..=l {
                let dst = (li * h + y) * w;
                phi_d.data_mut()[dst..dst + w].copy_from_slice(&pd[li * w..(li + 1) * w]);
                phibar.data_mut()[dst..dst + w].copy_from_slice(&pb[li * w..(li + 1) * w]);
            }
        }
        Ok(vec![phi_d, phibar])
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        outputs: &[&Tensor],
        grad_outputs: &[&Tensor],
    ) -> Result<Vec<Tensor>> {
        let phi = inputs[0];
        let l = phi.shape()[0];
        let (h, w) = (phi.shape()[1], phi.shape()[2]);
        let dn = self.normalized(inputs[1])?;
        let tau = self.tau;
        let phi_d = outputs[0];
        let phibar = outputs[1];
        let gpd = grad_outputs[0];
        let gpb = grad_outputs[1];

        let rows = parallel::map_indexed(h, |y| {
            let mut phi_bar_row = vec![0.0; l * w];
            let mut dn_bar = vec![0.0; l];
            let mut s = vec![0.0; l];
            let mut t = vec![0.0; l + 1];
            let mut t_bar = vec![0.0; l + 1];
            let mut s_bar = vec![0.0; l];
            for x in 0..w {
                for li in 0..=l {
                    t[li] = phibar.data()[(li * h + y) * w + x];
                }
                for li in 0..l {
                    s[li] = phi_d.data()[(li * h + y) * w + x];
                }
                // Stage-two softmax VJP.
                let mut dot = 0.0;
                for li in 0..=l {
                    dot += gpb.data()[(li * h + y) * w + x] * t[li];
                }
                for li in 0..=l {
                    let g = gpb.data()[(li * h + y) * w + x];
                    t_bar[li] = t[li] * (g - dot) / tau + gpd.data()[(li * h + y) * w + x];
                }
                // Background channel: bg = 1 - max(s).
                let am = argmax_lowest(&s);
                for li in 0..l {
                    s_bar[li] = t_bar[li];
                }
                s_bar[am] -= t_bar[l];
                // Stage-one softmax VJP.
                let mut dot1 = 0.0;
                for li in 0..l {
                    dot1 += s_bar[li] * s[li];
                }
                for li in 0..l {
                    let sin_bar = s[li] * (s_bar[li] - dot1);
                    phi_bar_row[li * w + x] = sin_bar / (dn[li] * tau);
                    dn_bar[li] -= sin_bar * phi.data()[(li * h + y) * w + x] / (dn[li] * dn[li] * tau);
                }
            }
            (phi_bar_row, dn_bar)
        });

        let mut phi_bar = Tensor::zeros(vec![l, h, w]);
        let mut dn_bar = vec![0.0; l];
        for (y, (row, partial)) in rows.into_iter().enumerate() {
            for li in 0..l {
                let dst = (li * h + y) * w;
                phi_bar.data_mut()[dst..dst + w].copy_from_slice(&row[li * w..(li + 1) * w]);
            }
            for li in 0..l {
                dn_bar[li] += partial[li];
            }
        }

        let d = inputs[1].data();
        let mut d_bar = Tensor::zeros(vec![l]);
        if self.normalize_depth {
            let mean = d.iter().sum::<f64>() / l as f64;
            let weighted: f64 = dn_bar.iter().zip(d).map(|(g, v)| g * v).sum();
            for k in 0..l {
                d_bar.data_mut()[k] = dn_bar[k] / mean - weighted / (mean * mean * l as f64);
            }
        } else {
            d_bar.data_mut().copy_from_slice(&dn_bar);
        }
        Ok(vec![phi_bar, d_bar])
    }
}

/// Tape op: pixelwise max over part channels (`w_fg` from `phi_p`, `w_unc`
/// from `psi_p`). Ties route the subgradient to the lowest channel.
pub struct MaxOverPartsOp;

impl Op for MaxOverPartsOp {
    fn name(&self) -> &'static str {
        "max_over_parts"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
        let m = inputs[0];
        let l = m.shape()[0];
        let (h, w) = (m.shape()[1], m.shape()[2]);
        let mut out = Tensor::zeros(vec![h, w]);
        for y in 0..h {
            for x in 0..w {
                let mut best = m.data()[(y) * w + x];
                for li in 1..l {
                    best = best.max(m.data()[(li * h + y) * w + x]);
                }
                out.data_mut()[y * w + x] = best;
            }
        }
        Ok(vec![out])
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _outputs: &[&Tensor],
        grad_outputs: &[&Tensor],
    ) -> Result<Vec<Tensor>> {
        let m = inputs[0];
        let l = m.shape()[0];
        let (h, w) = (m.shape()[1], m.shape()[2]);
        let mut g = Tensor::zeros(vec![l, h, w]);
        for y in 0..h {
            for x in 0..w {
                let mut best_li = 0;
                let mut best = m.data()[y * w + x];
                for li in 1..l {
                    let v = m.data()[(li * h + y) * w + x];
                    if v > best {
                        best = v;
                        best_li = li;
                    }
                }
                g.data_mut()[(best_li * h + y) * w + x] = grad_outputs[0].data()[y * w + x];
            }
        }
        Ok(vec![g])
    }
}

/// Tape op: flat-color rendering.
///
/// Inputs `(phibar [L+1,H,W], colors [L+1,3])` (background color last);
/// output `[3,H,W]` as the per-pixel convex combination of part colors.
pub struct RenderFlatOp;

impl Op for RenderFlatOp {
    fn name(&self) -> &'static str {
        "render_flat"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
        let maps = inputs[0];
        let colors = inputs[1];
        let lp1 = maps.shape()[0];
        let (h, w) = (maps.shape()[1], maps.shape()[2]);
        if colors.shape() != [lp1, 3] {
            return Err(Error::InvalidInput("colors tensor must be [L+1, 3]".into()));
        }
        if colors.data().iter().any(|&v| !(-1e-3..=1.0 + 1e-3).contains(&v)) {
            return Err(Error::InvalidInput("colors must lie in [0, 1]".into()));
        }
        let mut out = Tensor::zeros(vec![3, h, w]);
        for li in 0..lp1 {
            for ch in 0..3 {
                let col = colors.data()[li * 3 + ch];
                if col == 0.0 {
                    continue;
                }
                let src = li * h * w;
                let dst = ch * h * w;
                for i in 0..h * w {
                    out.data_mut()[dst + i] += maps.data()[src + i] * col;
                }
            }
        }
        Ok(vec![out])
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _outputs: &[&Tensor],
        grad_outputs: &[&Tensor],
    ) -> Result<Vec<Tensor>> {
        let maps = inputs[0];
        let colors = inputs[1];
        let lp1 = maps.shape()[0];
        let (h, w) = (maps.shape()[1], maps.shape()[2]);
        let g = grad_outputs[0];
        let mut maps_bar = Tensor::zeros(vec![lp1, h, w]);
        let mut colors_bar = Tensor::zeros(vec![lp1, 3]);
        for li in 0..lp1 {
            for ch in 0..3 {
                let col = colors.data()[li * 3 + ch];
                let src = ch * h * w;
                let dst = li * h * w;
                let mut acc = 0.0;
                for i in 0..h * w {
                    let gv = g.data()[src + i];
                    maps_bar.data_mut()[dst + i] += gv * col;
                    acc += gv * maps.data()[dst + i];
                }
                colors_bar.data_mut()[li * 3 + ch] = acc;
            }
        }
        Ok(vec![maps_bar, colors_bar])
    }
}

/// Non-differentiable argmax labeling; recording it on a tape is fine but a
/// backward pass through it reports an unsupported-op error.
pub struct HardSegOp;

impl Op for HardSegOp {
    fn name(&self) -> &'static str {
        "hard_segmentation"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
        let maps = inputs[0];
        let lp1 = maps.shape()[0];
        let (h, w) = (maps.shape()[1], maps.shape()[2]);
        let mut out = Tensor::zeros(vec![h, w]);
        for y in 0..h {
            for x in 0..w {
                let mut best_li = 0;
                let mut best = maps.data()[y * w + x];
                for li in 1..lp1 {
                    let v = maps.data()[(li * h + y) * w + x];
                    if v > best {
                        best = v;
                        best_li = li;
                    }
                }
                out.data_mut()[y * w + x] = (best_li + 1) as f64;
            }
        }
        Ok(vec![out])
    }

    fn backward(
        &self,
        _inputs: &[&Tensor],
        _outputs: &[&Tensor],
        _grad_outputs: &[&Tensor],
    ) -> Result<Vec<Tensor>> {
        Err(Error::UnsupportedOp("hard_segmentation"))
    }

    fn differentiable(&self) -> bool {
        false
    }
}

/// Per-pixel argmax labels from the composited maps.
pub fn hard_segmentation(phibar: &Tensor) -> SegMap {
    let labels_t = HardSegOp.forward(&[phibar]).expect("argmax cannot fail");
    let (h, w) = (phibar.shape()[1], phibar.shape()[2]);
    SegMap {
        width: w,
        height: h,
        labels: labels_t[0].data().iter().map(|&v| v as u8).collect(),
    }
}

/// All soft maps derived from one projected pose.
#[derive(Clone, Debug)]
pub struct PartMaps {
    pub phi_p: Tensor,
    pub psi_p: Tensor,
    pub phi_d: Tensor,
    pub phibar: Tensor,
    pub w_fg: Tensor,
    pub w_unc: Tensor,
    pub depths: Tensor,
}

/// Forward-only evaluation of deform + depth compositing + aggregates.
pub fn compute_part_maps(
    dict: &Arc<PartDictionary>,
    q: &Tensor,
    q_d: &Tensor,
    tau: f64,
    normalize_depth: bool,
    s_min: f64,
) -> Result<PartMaps> {
    let deform = DeformOp { dict: dict.clone(), s_min };
    let warped = deform.forward(&[q])?;
    let depths = LimbDepthsOp { dict: dict.clone() }.forward(&[q_d])?;
    let composed = DepthComposeOp { tau, normalize_depth }.forward(&[&warped[0], &depths[0]])?;
    let w_fg = MaxOverPartsOp.forward(&[&warped[0]])?;
    let w_unc = MaxOverPartsOp.forward(&[&warped[1]])?;
    let mut it = composed.into_iter();
    let phi_d = it.next().unwrap();
    let phibar = it.next().unwrap();
    let mut warped = warped.into_iter();
    Ok(PartMaps {
        phi_p: warped.next().unwrap(),
        psi_p: warped.next().unwrap(),
        phi_d,
        phibar,
        w_fg: w_fg.into_iter().next().unwrap(),
        w_unc: w_unc.into_iter().next().unwrap(),
        depths: depths.into_iter().next().unwrap(),
    })
}

/// Forward-only flat rendering with explicit part and background colors.
pub fn render_flat(phibar: &Tensor, part_colors: &[[f64; 3]], bg_color: [f64; 3]) -> Result<Tensor> {
    let colors = colors_tensor(part_colors, bg_color);
    Ok(RenderFlatOp.forward(&[phibar, &colors])?.into_iter().next().unwrap())
}

/// Flat render where the background channel reveals a full image instead of
/// a constant color (used by the synthetic-pair generator).
pub fn render_over_background(phibar: &Tensor, part_colors: &[[f64; 3]], bg: &Tensor) -> Tensor {
    let lp1 = phibar.shape()[0];
    let l = lp1 - 1;
    let (h, w) = (phibar.shape()[1], phibar.shape()[2]);
    debug_assert_eq!(bg.shape(), [3, h, w]);
    let mut out = Tensor::zeros(vec![3, h, w]);
    for ch in 0..3 {
        let dst = ch * h * w;
        for li in 0..l {
            let col = part_colors[li][ch];
            let src = li * h * w;
            for i in 0..h * w {
                out.data_mut()[dst + i] += phibar.data()[src + i] * col;
            }
        }
        let src = l * h * w;
        for i in 0..h * w {
            out.data_mut()[dst + i] += phibar.data()[src + i] * bg.data()[dst + i];
        }
    }
    out
}

/// Stacks part colors and the background color into a `[L+1, 3]` tensor.
pub fn colors_tensor(part_colors: &[[f64; 3]], bg_color: [f64; 3]) -> Tensor {
    let mut data = Vec::with_capacity((part_colors.len() + 1) * 3);
    for c in part_colors {
        data.extend_from_slice(c);
    }
    data.extend_from_slice(&bg_color);
    Tensor::new(vec![part_colors.len() + 1, 3], data)
}
