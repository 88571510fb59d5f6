//! Small-network building blocks (convolutions, linear layers, activations)
//! as tape ops, sized for the toy encoder/decoder.

pub mod ops {
    use crate::diffcore::{Op, Tensor};
    use crate::error::{Error, Result};

    /// 2D convolution with square kernels. Inputs: `(x [Cin,H,W],
    /// w [Cout,Cin,K,K], b [Cout])`.
    pub struct Conv2d {
        pub stride: usize,
        pub pad: usize,
    }

    impl Conv2d {
        fn out_size(&self, n: usize, k: usize) -> usize {
            (n + 2 * self.pad - k) / self.stride + 1
        }
    }

    impl Op for Conv2d {
        fn name(&self) -> &'static str {
            "conv2d"
        }

        fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
            let (x, wt, b) = (inputs[0], inputs[1], inputs[2]);
            let (cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let (cout, k) = (wt.shape()[0], wt.shape()[2]);
            if wt.shape()[1] != cin || b.len() != cout {
                return Err(Error::InvalidInput("conv2d: weight/bias shape mismatch".into()));
            }
            let (ho, wo) = (self.out_size(h, k), self.out_size(w, k));
            let mut out = Tensor::zeros(vec![cout, ho, wo]);
            let s = self.stride as isize;
            let p = self.pad as isize;
            for co in 0..cout {
                let bias = b.data()[co];
                let out_base = co * ho * wo;
                for v in &mut out.data_mut()[out_base..out_base + ho * wo] {
                    *v = bias;
                }
                for ci in 0..cin {
                    let x_base = ci * h * w;
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = wt.data()[((co * cin + ci) * k + ky) * k + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            for oy in 0..ho {
                                let iy = oy as isize * s + ky as isize - p;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let in_row = x_base + iy as usize * w;
                                let out_row = out_base + oy * wo;
                                for ox in 0..wo {
                                    let ix = ox as isize * s + kx as isize - p;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    out.data_mut()[out_row + ox] += wv * x.data()[in_row + ix as usize];
                                }
                            }
                        }
                    }
                }
            }
            Ok(vec![out])
        }

        fn backward(
            &self,
            inputs: &[&Tensor],
            outputs: &[&Tensor],
            grad_outputs: &[&Tensor],
        ) -> Result<Vec<Tensor>> {
            let (x, wt) = (inputs[0], inputs[1]);
            let (cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let (cout, k) = (wt.shape()[0], wt.shape()[2]);
            let (ho, wo) = (outputs[0].shape()[1], outputs[0].shape()[2]);
            let g = grad_outputs[0];
            let s = self.stride as isize;
            let p = self.pad as isize;

            let mut x_bar = Tensor::zeros(x.shape().to_vec());
            let mut w_bar = Tensor::zeros(wt.shape().to_vec());
            let mut b_bar = Tensor::zeros(vec![cout]);
            for co in 0..cout {
                let out_base = co * ho * wo;
                b_bar.data_mut()[co] = g.data()[out_base..out_base + ho * wo].iter().sum();
                for ci in 0..cin {
                    let x_base = ci * h * w;
                    for ky in 0..k {
                        for kx in 0..k {
                            let widx = ((co * cin + ci) * k + ky) * k + kx;
                            let wv = wt.data()[widx];
                            let mut wacc = 0.0;
                            for oy in 0..ho {
                                let iy = oy as isize * s + ky as isize - p;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let in_row = x_base + iy as usize * w;
                                let out_row = out_base + oy * wo;
                                for ox in 0..wo {
                                    let ix = ox as isize * s + kx as isize - p;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let gv = g.data()[out_row + ox];
                                    wacc += gv * x.data()[in_row + ix as usize];
                                    x_bar.data_mut()[in_row + ix as usize] += gv * wv;
                                }
                            }
                            w_bar.data_mut()[widx] = wacc;
                        }
                    }
                }
            }
            Ok(vec![x_bar, w_bar, b_bar])
        }
    }

    /// Fully connected layer. Inputs: `(x [n] (any shape, flattened),
    /// w [m,n], b [m])`.
    pub struct Linear;

    impl Op for Linear {
        fn name(&self) -> &'static str {
            "linear"
        }

        fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
            let (x, w, b) = (inputs[0], inputs[1], inputs[2]);
            let n = x.len();
            let m = b.len();
            if w.shape() != [m, n] {
                return Err(Error::InvalidInput(format!(
                    "linear: weight {:?} incompatible with input {n} and bias {m}",
                    w.shape()
                )));
            }
            let mut out = Tensor::zeros(vec![m]);
            for i in 0..m {
                let row = &w.data()[i * n..(i + 1) * n];
                let mut acc = b.data()[i];
                for (a, xv) in row.iter().zip(x.data()) {
                    acc += a * xv;
                }
                out.data_mut()[i] = acc;
            }
            Ok(vec![out])
        }

        fn backward(
            &self,
            inputs: &[&Tensor],
            _outputs: &[&Tensor],
            grad_outputs: &[&Tensor],
        ) -> Result<Vec<Tensor>> {
            let (x, w) = (inputs[0], inputs[1]);
            let n = x.len();
            let m = inputs[2].len();
            let g = grad_outputs[0];
            let mut x_bar = Tensor::zeros(x.shape().to_vec());
            let mut w_bar = Tensor::zeros(w.shape().to_vec());
            for i in 0..m {
                let gv = g.data()[i];
                if gv == 0.0 {
                    continue;
                }
                let row = &w.data()[i * n..(i + 1) * n];
                for j in 0..n {
                    x_bar.data_mut()[j] += gv * row[j];
                    w_bar.data_mut()[i * n + j] = gv * x.data()[j];
                }
            }
            Ok(vec![x_bar, w_bar, g.clone()])
        }
    }

    pub struct LeakyRelu {
        pub slope: f64,
    }

    impl Op for LeakyRelu {
        fn name(&self) -> &'static str {
            "leaky_relu"
        }

        fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
            let mut out = inputs[0].clone();
            for v in out.data_mut() {
                if *v < 0.0 {
                    *v *= self.slope;
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
            let mut g = grad_outputs[0].clone();
            for (gv, xv) in g.data_mut().iter_mut().zip(inputs[0].data()) {
                if *xv < 0.0 {
                    *gv *= self.slope;
                }
            }
            Ok(vec![g])
        }
    }

    pub struct Sigmoid;

    impl Op for Sigmoid {
        fn name(&self) -> &'static str {
            "sigmoid"
        }

        fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
            let mut out = inputs[0].clone();
            for v in out.data_mut() {
                *v = 1.0 / (1.0 + (-*v).exp());
            }
            Ok(vec![out])
        }

        fn backward(
            &self,
            _inputs: &[&Tensor],
            outputs: &[&Tensor],
            grad_outputs: &[&Tensor],
        ) -> Result<Vec<Tensor>> {
            let mut g = grad_outputs[0].clone();
            for (gv, ov) in g.data_mut().iter_mut().zip(outputs[0].data()) {
                *gv *= ov * (1.0 - ov);
            }
            Ok(vec![g])
        }
    }

    /// Nearest-neighbor 2x upsampling of `[C,H,W]`.
    pub struct Upsample2x;

    impl Op for Upsample2x {
        fn name(&self) -> &'static str {
            "upsample2x"
        }

        fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
            let x = inputs[0];
            let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let mut out = Tensor::zeros(vec![c, 2 * h, 2 * w]);
            for ci in 0..c {
                for y in 0..2 * h {
                    let sy = y / 2;
                    for xx in 0..2 * w {
                        out.data_mut()[(ci * 2 * h + y) * 2 * w + xx] =
                            x.data()[(ci * h + sy) * w + xx / 2];
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
            let x = inputs[0];
            let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let g = grad_outputs[0];
            let mut out = Tensor::zeros(x.shape().to_vec());
            for ci in 0..c {
                for y in 0..2 * h {
                    let sy = y / 2;
                    for xx in 0..2 * w {
                        out.data_mut()[(ci * h + sy) * w + xx / 2] +=
                            g.data()[(ci * 2 * h + y) * 2 * w + xx];
                    }
                }
            }
            Ok(vec![out])
        }
    }

    /// Average pooling down to a fixed output grid (input divisible).
    pub struct AvgPoolTo {
        pub out_h: usize,
        pub out_w: usize,
    }

    impl Op for AvgPoolTo {
        fn name(&self) -> &'static str {
            "avg_pool_to"
        }

        fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
            let x = inputs[0];
            let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            if h % self.out_h != 0 || w % self.out_w != 0 {
                return Err(Error::InvalidInput("avg_pool_to: size not divisible".into()));
            }
            let (fy, fx) = (h / self.out_h, w / self.out_w);
            let inv = 1.0 / (fy * fx) as f64;
            let mut out = Tensor::zeros(vec![c, self.out_h, self.out_w]);
            for ci in 0..c {
                for oy in 0..self.out_h {
                    for ox in 0..self.out_w {
                        let mut acc = 0.0;
                        for dy in 0..fy {
                            for dx in 0..fx {
                                acc += x.data()[(ci * h + oy * fy + dy) * w + ox * fx + dx];
                            }
                        }
                        out.data_mut()[(ci * self.out_h + oy) * self.out_w + ox] = acc * inv;
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
            let x = inputs[0];
            let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let (fy, fx) = (h / self.out_h, w / self.out_w);
            let inv = 1.0 / (fy * fx) as f64;
            let g = grad_outputs[0];
            let mut out = Tensor::zeros(x.shape().to_vec());
            for ci in 0..c {
                for oy in 0..self.out_h {
                    for ox in 0..self.out_w {
                        let gv = g.data()[(ci * self.out_h + oy) * self.out_w + ox] * inv;
                        for dy in 0..fy {
                            for dx in 0..fx {
                                out.data_mut()[(ci * h + oy * fy + dy) * w + ox * fx + dx] = gv;
                            }
                        }
                    }
                }
            }
            Ok(vec![out])
        }
    }

    /// Channel concatenation of two `[C,H,W]` tensors.
    pub struct ConcatChannels;

    impl Op for ConcatChannels {
        fn name(&self) -> &'static str {
            "concat_channels"
        }

        fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
            let (a, b) = (inputs[0], inputs[1]);
            let (ca, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
            let cb = b.shape()[0];
            if b.shape()[1] != h || b.shape()[2] != w {
                return Err(Error::InvalidInput("concat: spatial sizes differ".into()));
            }
            let mut data = Vec::with_capacity((ca + cb) * h * w);
            data.extend_from_slice(a.data());
            data.extend_from_slice(b.data());
            Ok(vec![Tensor::new(vec![ca + cb, h, w], data)])
        }

        fn backward(
            &self,
            inputs: &[&Tensor],
            _outputs: &[&Tensor],
            grad_outputs: &[&Tensor],
        ) -> Result<Vec<Tensor>> {
            let na = inputs[0].len();
            let g = grad_outputs[0];
            let a_bar = Tensor::new(inputs[0].shape().to_vec(), g.data()[..na].to_vec());
            let b_bar = Tensor::new(inputs[1].shape().to_vec(), g.data()[na..].to_vec());
            Ok(vec![a_bar, b_bar])
        }
    }

    /// Per-pixel softmax across channels of `[C,H,W]`.
    pub struct SoftmaxChannels;

    impl Op for SoftmaxChannels {
        fn name(&self) -> &'static str {
            "softmax_channels"
        }

        fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
            let x = inputs[0];
            let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let mut out = x.clone();
            for i in 0..h * w {
                let mut m = f64::NEG_INFINITY;
                for ci in 0..c {
                    m = m.max(x.data()[ci * h * w + i]);
                }
                let mut sum = 0.0;
                for ci in 0..c {
                    let e = (x.data()[ci * h * w + i] - m).exp();
                    out.data_mut()[ci * h * w + i] = e;
                    sum += e;
                }
                for ci in 0..c {
                    out.data_mut()[ci * h * w + i] /= sum;
                }
            }
            Ok(vec![out])
        }

        fn backward(
            &self,
            _inputs: &[&Tensor],
            outputs: &[&Tensor],
            grad_outputs: &[&Tensor],
        ) -> Result<Vec<Tensor>> {
            let y = outputs[0];
            let (c, h, w) = (y.shape()[0], y.shape()[1], y.shape()[2]);
            let g = grad_outputs[0];
            let mut out = Tensor::zeros(y.shape().to_vec());
            for i in 0..h * w {
                let mut dot = 0.0;
                for ci in 0..c {
                    dot += g.data()[ci * h * w + i] * y.data()[ci * h * w + i];
                }
                for ci in 0..c {
                    let idx = ci * h * w + i;
                    out.data_mut()[idx] = y.data()[idx] * (g.data()[idx] - dot);
                }
            }
            Ok(vec![out])
        }
    }

    /// Unit-normalizes selected rows of an `[N,3]` tensor; other rows pass
    /// through unchanged.
    pub struct NormalizeRows {
        pub unit_rows: Vec<bool>,
    }

    const NORM_EPS: f64 = 1e-8;

    impl Op for NormalizeRows {
        fn name(&self) -> &'static str {
            "normalize_rows"
        }

        fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
            let x = inputs[0];
            let n = x.shape()[0];
            let mut out = x.clone();
            for r in 0..n {
                if !self.unit_rows[r] {
                    continue;
                }
                let v = x.row3(r);
                let nn = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(NORM_EPS);
                for k in 0..3 {
                    out.data_mut()[r * 3 + k] = v[k] / nn;
                }
            }
            Ok(vec![out])
        }

        fn backward(
            &self,
            inputs: &[&Tensor],
            outputs: &[&Tensor],
            grad_outputs: &[&Tensor],
        ) -> Result<Vec<Tensor>> {
            let x = inputs[0];
            let y = outputs[0];
            let g = grad_outputs[0];
            let n = x.shape()[0];
            let mut out = g.clone();
            for r in 0..n {
                if !self.unit_rows[r] {
                    continue;
                }
                let v = x.row3(r);
                let nn = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                let gr = g.row3(r);
                if nn <= NORM_EPS {
                    for k in 0..3 {
                        out.data_mut()[r * 3 + k] = gr[k] / NORM_EPS;
                    }
                    continue;
                }
                let u = y.row3(r);
                let dot = u[0] * gr[0] + u[1] * gr[1] + u[2] * gr[2];
                for k in 0..3 {
                    out.data_mut()[r * 3 + k] = (gr[k] - u[k] * dot) / nn;
                }
            }
            Ok(vec![out])
        }
    }

    /// Per-component squash into `[lo, hi]` via a sigmoid.
    pub struct BoundedSquash {
        pub lo: Vec<f64>,
        pub hi: Vec<f64>,
    }

    impl Op for BoundedSquash {
        fn name(&self) -> &'static str {
            "bounded_squash"
        }

        fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
            let x = inputs[0];
            if x.len() != self.lo.len() {
                return Err(Error::InvalidInput("bounded_squash: bound length mismatch".into()));
            }
            let mut out = x.clone();
            for (i, v) in out.data_mut().iter_mut().enumerate() {
                let s = 1.0 / (1.0 + (-*v).exp());
                *v = self.lo[i] + (self.hi[i] - self.lo[i]) * s;
            }
            Ok(vec![out])
        }

        fn backward(
            &self,
            inputs: &[&Tensor],
            _outputs: &[&Tensor],
            grad_outputs: &[&Tensor],
        ) -> Result<Vec<Tensor>> {
            let x = inputs[0];
            let mut out = grad_outputs[0].clone();
            for (i, gv) in out.data_mut().iter_mut().enumerate() {
                let s = 1.0 / (1.0 + (-x.data()[i]).exp());
                *gv *= (self.hi[i] - self.lo[i]) * s * (1.0 - s);
            }
            Ok(vec![out])
        }
    }

    /// Weighted sum of scalar inputs.
    pub struct WeightedSum {
        pub weights: Vec<f64>,
    }

    impl WeightedSum {
        pub fn new(weights: Vec<f64>) -> Self {
            Self { weights }
        }
    }

    impl Op for WeightedSum {
        fn name(&self) -> &'static str {
            "weighted_sum"
        }

        fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
            if inputs.len() != self.weights.len() {
                return Err(Error::InvalidInput("weighted_sum: arity mismatch".into()));
            }
            let mut acc = 0.0;
            for (t, w) in inputs.iter().zip(&self.weights) {
                acc += w * t.item();
            }
            Ok(vec![Tensor::scalar(acc)])
        }

        fn backward(
            &self,
            inputs: &[&Tensor],
            _outputs: &[&Tensor],
            grad_outputs: &[&Tensor],
        ) -> Result<Vec<Tensor>> {
            let g = grad_outputs[0].item();
            Ok(inputs
                .iter()
                .zip(&self.weights)
                .map(|(_, w)| Tensor::scalar(g * w))
                .collect())
        }
    }
}

pub use ops::{
    AvgPoolTo, BoundedSquash, ConcatChannels, Conv2d, LeakyRelu, Linear, NormalizeRows, Sigmoid,
    SoftmaxChannels, Upsample2x, WeightedSum,
};
