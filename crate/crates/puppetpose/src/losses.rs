//! Self-supervision objectives as differentiable scalar ops.

use crate::diffcore::{Op, Tensor};
use crate::error::{Error, Result};
use crate::puppet::SegMap;
use std::sync::Arc;

/// Log arguments are clamped here to keep cross-entropy finite.
pub const LOG_CLAMP: f64 = 1e-12;

/// Loss hyperparameters shared across objectives.
#[derive(Clone, Copy, Debug)]
pub struct LossConfig {
    /// Saliency weight in the uncertain reconstruction objective.
    pub beta: f64,
    /// Constant background color used by the certain reconstruction.
    pub bg_color: [f64; 3],
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { beta: 0.5, bg_color: [0.5, 0.5, 0.5] }
    }
}

fn check_same_shape(a: &Tensor, b: &[usize], what: &str) -> Result<()> {
    if a.shape() != b {
        return Err(Error::InvalidInput(format!(
            "{what}: shape {:?} does not match {:?}",
            a.shape(),
            b
        )));
    }
    Ok(())
}

/// Uncertain reconstruction: pixel weight `(1 - y_bg + beta * m_sal)` times
/// the L1 color difference to the target, averaged over pixels and channels.
///
/// Inputs: `(i_hat [C,H,W], y_hat [L+1,H,W])`; the target image and saliency
/// mask are constants held by the op.
pub struct ReconUncertainOp {
    pub target: Arc<Tensor>,
    pub m_sal: Arc<Tensor>,
    pub beta: f64,
}

impl ReconUncertainOp {
    fn weights(&self, y_hat: &Tensor) -> Vec<f64> {
        let lp1 = y_hat.shape()[0];
        let (h, w) = (y_hat.shape()[1], y_hat.shape()[2]);
        let bg = &y_hat.data()[(lp1 - 1) * h * w..];
        bg.iter()
            .zip(self.m_sal.data())
            .map(|(b, m)| 1.0 - b + self.beta * m)
            .collect()
    }
}

impl Op for ReconUncertainOp {
    fn name(&self) -> &'static str {
        "recon_uncertain"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
        let i_hat = inputs[0];
        let y_hat = inputs[1];
        check_same_shape(i_hat, self.target.shape(), "recon_uncertain image")?;
        let c = i_hat.shape()[0];
        let (h, w) = (i_hat.shape()[1], i_hat.shape()[2]);
        check_same_shape(&Tensor::zeros(vec![h, w]), self.m_sal.shape(), "recon_uncertain mask")?;
        if y_hat.shape()[1] != h || y_hat.shape()[2] != w {
            return Err(Error::InvalidInput("recon_uncertain: seg map resolution mismatch".into()));
        }
        let weights = self.weights(y_hat);
        let mut total = 0.0;
        for ch in 0..c {
            let base = ch * h * w;
            for i in 0..h * w {
                total += weights[i] * (i_hat.data()[base + i] - self.target.data()[base + i]).abs();
            }
        }
        Ok(vec![Tensor::scalar(total / (c * h * w) as f64)])
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _outputs: &[&Tensor],
        grad_outputs: &[&Tensor],
    ) -> Result<Vec<Tensor>> {
        let i_hat = inputs[0];
        let y_hat = inputs[1];
        let g = grad_outputs[0].item();
        let c = i_hat.shape()[0];
        let (h, w) = (i_hat.shape()[1], i_hat.shape()[2]);
        let lp1 = y_hat.shape()[0];
        let norm = g / (c * h * w) as f64;
        let weights = self.weights(y_hat);

        let mut i_bar = Tensor::zeros(i_hat.shape().to_vec());
        let mut y_bar = Tensor::zeros(y_hat.shape().to_vec());
        let bg_base = (lp1 - 1) * h * w;
        for ch in 0..c {
            let base = ch * h * w;
            for i in 0..h * w {
                let diff = i_hat.data()[base + i] - self.target.data()[base + i];
                i_bar.data_mut()[base + i] = norm * weights[i] * diff.signum();
                // d weight / d y_bg = -1
                y_bar.data_mut()[bg_base + i] -= norm * diff.abs();
            }
        }
        Ok(vec![i_bar, y_bar])
    }
}

/// Certain reconstruction: `w_fg * |a - b| + (1 - w_fg) * |a - BG_c|`,
/// averaged over pixels and channels.
///
/// Inputs: `(i_s_hat [3,H,W], i_t_hat [3,H,W], w_fg [H,W])`.
pub struct ReconCertainOp {
    pub bg_color: [f64; 3],
}

impl Op for ReconCertainOp {
    fn name(&self) -> &'static str {
        "recon_certain"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
        let a = inputs[0];
        let b = inputs[1];
        let w_fg = inputs[2];
        check_same_shape(b, a.shape(), "recon_certain images")?;
        let c = a.shape()[0];
        let (h, w) = (a.shape()[1], a.shape()[2]);
        check_same_shape(w_fg, &[h, w], "recon_certain fg map")?;
        let mut total = 0.0;
        for ch in 0..c {
            let base = ch * h * w;
            let bg = self.bg_color[ch];
            for i in 0..h * w {
                let fg = w_fg.data()[i];
                let av = a.data()[base + i];
                total += fg * (av - b.data()[base + i]).abs() + (1.0 - fg) * (av - bg).abs();
            }
        }
        Ok(vec![Tensor::scalar(total / (c * h * w) as f64)])
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _outputs: &[&Tensor],
        grad_outputs: &[&Tensor],
    ) -> Result<Vec<Tensor>> {
        let a = inputs[0];
        let b = inputs[1];
        let w_fg = inputs[2];
        let c = a.shape()[0];
        let (h, w) = (a.shape()[1], a.shape()[2]);
        let norm = grad_outputs[0].item() / (c * h * w) as f64;
        let mut a_bar = Tensor::zeros(a.shape().to_vec());
        let mut b_bar = Tensor::zeros(b.shape().to_vec());
        let mut w_bar = Tensor::zeros(w_fg.shape().to_vec());
        for ch in 0..c {
            let base = ch * h * w;
            let bg = self.bg_color[ch];
            for i in 0..h * w {
                let fg = w_fg.data()[i];
                let av = a.data()[base + i];
                let d1 = av - b.data()[base + i];
                let d2 = av - bg;
                a_bar.data_mut()[base + i] = norm * (fg * d1.signum() + (1.0 - fg) * d2.signum());
                b_bar.data_mut()[base + i] = -norm * fg * d1.signum();
                w_bar.data_mut()[i] += norm * (d1.abs() - d2.abs());
            }
        }
        Ok(vec![a_bar, b_bar, w_bar])
    }
}

/// Segmentation consistency: `(1 - w_unc) * CE(y_hat, target) + w_unc *
/// SE(y_hat)` with pixel-wise cross-entropy and self-entropy, averaged over
/// pixels.
///
/// Inputs: `(y_hat [L+1,H,W], w_unc [H,W])`; the hard target labels are a
/// constant of the op.
pub struct SegConsistencyOp {
    pub target: Arc<SegMap>,
}

impl Op for SegConsistencyOp {
    fn name(&self) -> &'static str {
        "seg_consistency"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
        let y = inputs[0];
        let w_unc = inputs[1];
        let lp1 = y.shape()[0];
        let (h, w) = (y.shape()[1], y.shape()[2]);
        check_same_shape(w_unc, &[h, w], "seg_consistency w_unc")?;
        if self.target.width != w || self.target.height != h {
            return Err(Error::InvalidInput("seg_consistency: target resolution mismatch".into()));
        }
        // y must be a per-pixel distribution.
        for i in 0..h * w {
            let mut sum = 0.0;
            for li in 0..lp1 {
                sum += y.data()[li * h * w + i];
            }
            if (sum - 1.0).abs() > 1e-4 {
                return Err(Error::InvalidInput(format!(
                    "seg_consistency: channels sum to {sum:.6} at pixel {i}"
                )));
            }
        }
        let mut total = 0.0;
        for i in 0..h * w {
            let label = self.target.labels[i] as usize;
            let unc = w_unc.data()[i];
            let p_true = y.data()[(label - 1) * h * w + i].max(LOG_CLAMP);
            let ce = -p_true.ln();
            let mut se = 0.0;
            for li in 0..lp1 {
                let p = y.data()[li * h * w + i];
                se -= p * p.max(LOG_CLAMP).ln();
            }
            total += (1.0 - unc) * ce + unc * se;
        }
        Ok(vec![Tensor::scalar(total / (h * w) as f64)])
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _outputs: &[&Tensor],
        grad_outputs: &[&Tensor],
    ) -> Result<Vec<Tensor>> {
        let y = inputs[0];
        let w_unc = inputs[1];
        let lp1 = y.shape()[0];
        let (h, w) = (y.shape()[1], y.shape()[2]);
        let norm = grad_outputs[0].item() / (h * w) as f64;
        let mut y_bar = Tensor::zeros(y.shape().to_vec());
        let mut unc_bar = Tensor::zeros(w_unc.shape().to_vec());
        for i in 0..h * w {
            let label = self.target.labels[i] as usize;
            let unc = w_unc.data()[i];
            let p_true = y.data()[(label - 1) * h * w + i].max(LOG_CLAMP);
            let ce = -p_true.ln();
            let mut se = 0.0;
            for li in 0..lp1 {
                let p = y.data()[li * h * w + i];
                let pc = p.max(LOG_CLAMP);
                se -= p * pc.ln();
                // d(-p ln p)/dp = -(ln p + 1) where the clamp is inactive.
                let dse = if p > LOG_CLAMP { -(pc.ln() + 1.0) } else { -pc.ln() };
                y_bar.data_mut()[li * h * w + i] += norm * unc * dse;
            }
            if y.data()[(label - 1) * h * w + i] > LOG_CLAMP {
                y_bar.data_mut()[(label - 1) * h * w + i] += norm * (1.0 - unc) * (-1.0 / p_true);
            }
            unc_bar.data_mut()[i] = norm * (se - ce);
        }
        Ok(vec![y_bar, unc_bar])
    }
}

/// Mean absolute difference between two tensors of equal shape; serves as
/// both energy terms and the image-mode fitting objective.
pub struct MeanAbsDiffOp;

impl Op for MeanAbsDiffOp {
    fn name(&self) -> &'static str {
        "mean_abs_diff"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
        let a = inputs[0];
        let b = inputs[1];
        check_same_shape(b, a.shape(), "mean_abs_diff")?;
        let total: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
        Ok(vec![Tensor::scalar(total / a.len() as f64)])
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _outputs: &[&Tensor],
        grad_outputs: &[&Tensor],
    ) -> Result<Vec<Tensor>> {
        let a = inputs[0];
        let b = inputs[1];
        let norm = grad_outputs[0].item() / a.len() as f64;
        let mut a_bar = Tensor::zeros(a.shape().to_vec());
        let mut b_bar = Tensor::zeros(b.shape().to_vec());
        for i in 0..a.len() {
            let s = (a.data()[i] - b.data()[i]).signum();
            a_bar.data_mut()[i] = norm * s;
            b_bar.data_mut()[i] = -norm * s;
        }
        Ok(vec![a_bar, b_bar])
    }
}

/// Forward-only helpers mirroring the ops, for plain (non-tape) evaluation.
pub fn recon_uncertain(
    i_hat: &Tensor,
    target: &Tensor,
    y_hat: &Tensor,
    m_sal: &Tensor,
    beta: f64,
) -> Result<f64> {
    let op = ReconUncertainOp {
        target: Arc::new(target.clone()),
        m_sal: Arc::new(m_sal.clone()),
        beta,
    };
    Ok(op.forward(&[i_hat, y_hat])?[0].item())
}

pub fn recon_certain(a: &Tensor, b: &Tensor, w_fg: &Tensor, bg_color: [f64; 3]) -> Result<f64> {
    Ok(ReconCertainOp { bg_color }.forward(&[a, b, w_fg])?[0].item())
}

pub fn seg_consistency(y_hat: &Tensor, target: &SegMap, w_unc: &Tensor) -> Result<f64> {
    let op = SegConsistencyOp { target: Arc::new(target.clone()) };
    Ok(op.forward(&[y_hat, w_unc])?[0].item())
}

pub fn mean_abs_diff(a: &Tensor, b: &Tensor) -> Result<f64> {
    Ok(MeanAbsDiffOp.forward(&[a, b])?[0].item())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::new(shape, data)
    }

    #[test]
    fn recon_uncertain_zero_at_exact_reconstruction() {
        let img = t(vec![3, 2, 2], vec![0.3; 12]);
        let y = t(vec![2, 2, 2], vec![0.5; 8]);
        let sal = t(vec![2, 2], vec![1.0; 4]);
        let v = recon_uncertain(&img, &img, &y, &sal, 0.5).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn recon_uncertain_fully_masked_is_zero() {
        // y_bg == 1 and m_sal == 0 zeroes every pixel weight.
        let a = t(vec![1, 1, 2], vec![0.1, 0.9]);
        let b = t(vec![1, 1, 2], vec![0.7, 0.2]);
        let mut y = Tensor::zeros(vec![3, 1, 2]);
        for i in 0..2 {
            y.data_mut()[2 * 2 + i] = 1.0; // background channel
        }
        let sal = Tensor::zeros(vec![1, 2]);
        let v = recon_uncertain(&a, &b, &y, &sal, 0.5).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn recon_uncertain_hand_case() {
        // 1x2 single-channel image, weights (1, 0.5), |diff| = (0.2, 0.4):
        // (1*0.2 + 0.5*0.4)/2 = 0.2. Weights via y_bg = (0.5, 0.5) and
        // m_sal = (1, 0) with beta = 0.5: w = 1 - 0.5 + 0.5*m.
        let a = t(vec![1, 1, 2], vec![0.5, 0.8]);
        let target = t(vec![1, 1, 2], vec![0.3, 0.4]);
        let mut y = Tensor::zeros(vec![2, 1, 2]);
        y.data_mut()[2] = 0.5;
        y.data_mut()[3] = 0.5;
        let sal = t(vec![1, 2], vec![1.0, 0.0]);
        let v = recon_uncertain(&a, &target, &y, &sal, 0.5).unwrap();
        assert!((v - 0.2).abs() < 1e-12, "{v}");
    }

    #[test]
    fn recon_uncertain_monotone_in_pixel_error() {
        let target = t(vec![1, 1, 2], vec![0.3, 0.4]);
        let y = Tensor::zeros(vec![2, 1, 2]);
        let sal = t(vec![1, 2], vec![0.0, 0.0]);
        let mut prev = -1.0;
        for step in 0..5 {
            let a = t(vec![1, 1, 2], vec![0.3 + 0.1 * step as f64, 0.4]);
            let v = recon_uncertain(&a, &target, &y, &sal, 0.5).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn recon_certain_zero_fixed_point_and_plain_l1() {
        let bg = [0.5, 0.5, 0.5];
        // a == b on foreground and a == bg on background -> 0.
        let a = t(vec![3, 1, 1], vec![0.5, 0.5, 0.5]);
        let w0 = t(vec![1, 1], vec![0.0]);
        assert_eq!(recon_certain(&a, &a, &w0, bg).unwrap(), 0.0);

        // w_fg == 1 reduces to plain L1.
        let b = t(vec![3, 1, 1], vec![0.1, 0.9, 0.5]);
        let w1 = t(vec![1, 1], vec![1.0]);
        let v = recon_certain(&a, &b, &w1, bg).unwrap();
        let l1 = ((0.5f64 - 0.1).abs() + (0.5f64 - 0.9).abs() + 0.0) / 3.0;
        assert!((v - l1).abs() < 1e-15);
    }

    #[test]
    fn recon_certain_hand_case() {
        // Single pixel, single channel view: w=0.25, |a-b|=0.4, |a-bg|=0.8
        // -> 0.25*0.4 + 0.75*0.8 = 0.7.
        let a = t(vec![1, 1, 1], vec![0.9]);
        let b = t(vec![1, 1, 1], vec![0.5]);
        let w = t(vec![1, 1], vec![0.25]);
        let v = ReconCertainOp { bg_color: [0.1, 0.0, 0.0] }
            .forward(&[&a, &b, &w])
            .unwrap()[0]
            .item();
        assert!((v - 0.7).abs() < 1e-12, "{v}");
    }

    #[test]
    fn seg_consistency_zero_cases_and_uniform_entropy() {
        let lp1 = 11;
        let (h, w) = (2, 2);
        // One-hot prediction equal to the target, w_unc = 0 -> 0.
        let target = SegMap { width: w, height: h, labels: vec![3; 4] };
        let mut y = Tensor::zeros(vec![lp1, h, w]);
        for i in 0..h * w {
            y.data_mut()[2 * h * w + i] = 1.0;
        }
        let zeros = Tensor::zeros(vec![h, w]);
        assert!(seg_consistency(&y, &target, &zeros).unwrap() < 1e-10);

        // w_unc = 1 with one-hot prediction: self-entropy 0.
        let ones = Tensor::full(vec![h, w], 1.0);
        assert!(seg_consistency(&y, &target, &ones).unwrap() < 1e-10);

        // Uniform prediction, w_unc = 1: ln(11) per pixel.
        let u = Tensor::full(vec![lp1, h, w], 1.0 / lp1 as f64);
        let v = seg_consistency(&u, &target, &ones).unwrap();
        assert!((v - (lp1 as f64).ln()).abs() < 1e-12, "{v}");
    }

    #[test]
    fn seg_consistency_rejects_unnormalized_prediction() {
        let target = SegMap { width: 1, height: 1, labels: vec![1] };
        let y = Tensor::full(vec![2, 1, 1], 0.6);
        let wu = Tensor::zeros(vec![1, 1]);
        assert!(matches!(
            seg_consistency(&y, &target, &wu),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn energy_terms_hand_cases() {
        // Identical inputs -> 0.
        let a = Tensor::from_vec(vec![0.4; 51]);
        assert_eq!(mean_abs_diff(&a, &a).unwrap(), 0.0);

        // One coordinate off by 0.3 in a 51-dim pose -> 0.3/51.
        let mut b = a.clone();
        b.data_mut()[17] += 0.3;
        let v = mean_abs_diff(&a, &b).unwrap();
        assert!((v - 0.3 / 51.0).abs() < 1e-15);

        // Symmetry.
        assert_eq!(mean_abs_diff(&a, &b).unwrap(), mean_abs_diff(&b, &a).unwrap());
    }

    #[test]
    fn losses_are_nonnegative() {
        let a = t(vec![1, 1, 2], vec![0.9, 0.05]);
        let b = t(vec![1, 1, 2], vec![0.1, 0.95]);
        let y = Tensor::zeros(vec![2, 1, 2]);
        let sal = t(vec![1, 2], vec![1.0, 1.0]);
        assert!(recon_uncertain(&a, &b, &y, &sal, 0.5).unwrap() >= 0.0);
        let w = t(vec![1, 2], vec![0.3, 0.8]);
        assert!(recon_certain(&a, &b, &w, [0.5; 3]).unwrap() >= 0.0);
        assert!(mean_abs_diff(&a, &b).unwrap() >= 0.0);
    }
}
