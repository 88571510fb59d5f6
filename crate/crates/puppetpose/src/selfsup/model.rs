//! Toy encoder/decoder: a four-block strided CNN with pose, camera, and
//! appearance heads, and a bifurcated up-convolutional decoder conditioned on
//! the pose maps at every scale.

use crate::camera::CameraBounds;
use crate::camera::ProjectOp;
use crate::diffcore::{ParameterVector, Tape, Tensor, ValueId};
use crate::error::Result;
use crate::geometry::{FkOp, Skeleton};
use crate::nn::ops::*;
use crate::puppet::{DeformOp, DepthComposeOp, LimbDepthsOp, PartDictionary};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::HashMap;
use std::sync::Arc;

/// Architecture sizes for the toy networks.
#[derive(Clone, Debug)]
pub struct ModelDims {
    pub enc_channels: [usize; 4],
    pub app_channels: usize,
    pub dec_channels: [usize; 3],
    pub head_channels: usize,
    pub resolution: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            enc_channels: [8, 16, 24, 48],
            app_channels: 8,
            dec_channels: [24, 16, 10],
            head_channels: 6,
            resolution: 64,
        }
    }
}

/// Leaf ids for a parameter vector, addressable by slice name.
pub struct LeafMap {
    ids: Vec<ValueId>,
    index: HashMap<String, usize>,
}

impl LeafMap {
    pub fn from_params(tape: &mut Tape, pv: &ParameterVector) -> Self {
        let mut ids = Vec::with_capacity(pv.slices().len());
        let mut index = HashMap::new();
        for (i, s) in pv.slices().iter().enumerate() {
            ids.push(tape.input(Tensor::new(s.shape.clone(), pv.slice_data(s).to_vec())));
            index.insert(s.name.clone(), i);
        }
        Self { ids, index }
    }

    pub fn get(&self, name: &str) -> ValueId {
        self.ids[*self.index.get(name).unwrap_or_else(|| panic!("no param slice `{name}`"))]
    }

    /// Collects gradients back into the parameter layout.
    pub fn grads(&self, tape: &Tape, pv: &ParameterVector) -> Vec<f64> {
        let mut out = vec![0.0; pv.len()];
        for (s, id) in pv.slices().iter().zip(&self.ids) {
            out[s.range.clone()].copy_from_slice(tape.grad(*id).data());
        }
        out
    }
}

fn he_normal(rng: &mut StdRng, fan_in: usize, n: usize, gain: f64) -> Vec<f64> {
    let std = gain * (2.0 / fan_in as f64).sqrt();
    (0..n)
        .map(|_| {
            // Box-Muller.
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos() * std
        })
        .collect()
}

/// Encoder producing local 3D vectors (or direct canonical positions when
/// `direct_3d`), bounded camera parameters, and a spatial appearance code.
pub struct EncoderModel {
    pub dims: ModelDims,
    pub skel: Arc<Skeleton>,
    pub bounds: CameraBounds,
    /// Replaces the local-vector + kinematics head with direct 3D joint
    /// regression (ablation).
    pub direct_3d: bool,
}

pub struct EncOut {
    /// `[J,3]`: unit local vectors, or squashed canonical positions when
    /// `direct_3d`.
    pub pose: ValueId,
    pub camera: ValueId,
    pub appearance: ValueId,
}

impl EncoderModel {
    pub fn init_params(&self, seed: u64) -> ParameterVector {
        let mut rng = StdRng::seed_from_u64(seed);
        let [c1, c2, c3, c4] = self.dims.enc_channels;
        let j = self.skel.joint_count();
        let flat = c4 * 4 * 4 * (self.dims.resolution / 64) * (self.dims.resolution / 64);
        let mut pv = ParameterVector::new();
        let mut conv = |pv: &mut ParameterVector, name: &str, co: usize, ci: usize, k: usize, rng: &mut StdRng| {
            pv.push(
                &format!("{name}.w"),
                vec![co, ci, k, k],
                he_normal(rng, ci * k * k, co * ci * k * k, 1.0),
            );
            pv.push(&format!("{name}.b"), vec![co], vec![0.0; co]);
        };
        conv(&mut pv, "conv1", c1, 3, 3, &mut rng);
        conv(&mut pv, "conv2", c2, c1, 3, &mut rng);
        conv(&mut pv, "conv3", c3, c2, 3, &mut rng);
        conv(&mut pv, "conv4", c4, c3, 3, &mut rng);
        pv.push(
            "head_v.w",
            vec![j * 3, flat],
            he_normal(&mut rng, flat, j * 3 * flat, 0.2),
        );
        // Bias the pose head toward the template so early training starts
        // from a plausible figure.
        let template = crate::geometry::template_local_pose(&self.skel);
        let mut vb = Vec::with_capacity(j * 3);
        for row in &template.vectors {
            vb.extend_from_slice(row);
        }
        pv.push("head_v.b", vec![j * 3], vb);
        pv.push(
            "head_cam.w",
            vec![6, flat],
            he_normal(&mut rng, flat, 6 * flat, 0.2),
        );
        pv.push("head_cam.b", vec![6], vec![0.0; 6]);
        let cha = self.dims.app_channels;
        conv(&mut pv, "app", cha, c3, 1, &mut rng);
        pv
    }

    pub fn forward(&self, tape: &mut Tape, p: &LeafMap, image: ValueId) -> Result<EncOut> {
        let act = |t: &mut Tape, x| t.apply1(LeakyRelu { slope: 0.1 }, &[x]);
        let conv_s2 = Conv2d { stride: 2, pad: 1 };
        let x1 = tape.apply1(conv_s2, &[image, p.get("conv1.w"), p.get("conv1.b")])?;
        let x1 = act(tape, x1)?;
        let x2 = tape.apply1(Conv2d { stride: 2, pad: 1 }, &[x1, p.get("conv2.w"), p.get("conv2.b")])?;
        let x2 = act(tape, x2)?;
        let x3 = tape.apply1(Conv2d { stride: 2, pad: 1 }, &[x2, p.get("conv3.w"), p.get("conv3.b")])?;
        let x3 = act(tape, x3)?;
        let x4 = tape.apply1(Conv2d { stride: 2, pad: 1 }, &[x3, p.get("conv4.w"), p.get("conv4.b")])?;
        let x4 = act(tape, x4)?;

        let raw_v = tape.apply1(Linear, &[x4, p.get("head_v.w"), p.get("head_v.b")])?;
        let j = self.skel.joint_count();
        let pose = if self.direct_3d {
            let lo = vec![-1.7; j * 3];
            let hi = vec![1.7; j * 3];
            let squashed = tape.apply1(BoundedSquash { lo, hi }, &[raw_v])?;
            tape.apply1(ReshapeRows3 { rows: j }, &[squashed])?
        } else {
            let reshaped = tape.apply1(ReshapeRows3 { rows: j }, &[raw_v])?;
            let unit_rows: Vec<bool> = (0..j).map(|i| !self.skel.is_fixed(i)).collect();
            tape.apply1(NormalizeRows { unit_rows }, &[reshaped])?
        };

        let raw_cam = tape.apply1(Linear, &[x4, p.get("head_cam.w"), p.get("head_cam.b")])?;
        let (lo, hi) = self.bounds.as_lo_hi();
        let camera = tape.apply1(BoundedSquash { lo: lo.to_vec(), hi: hi.to_vec() }, &[raw_cam])?;

        let app_raw = tape.apply1(Conv2d { stride: 1, pad: 0 }, &[x3, p.get("app.w"), p.get("app.b")])?;
        let appearance = tape.apply1(Sigmoid, &[app_raw])?;
        Ok(EncOut { pose, camera, appearance })
    }
}

/// Zero-cost reshape of a flat `[3n]` vector into `[n,3]`.
pub struct ReshapeRows3 {
    pub rows: usize,
}

impl crate::diffcore::Op for ReshapeRows3 {
    fn name(&self) -> &'static str {
        "reshape_rows3"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
        Ok(vec![Tensor::new(vec![self.rows, 3], inputs[0].data().to_vec())])
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _outputs: &[&Tensor],
        grad_outputs: &[&Tensor],
    ) -> Result<Vec<Tensor>> {
        Ok(vec![Tensor::new(
            inputs[0].shape().to_vec(),
            grad_outputs[0].data().to_vec(),
        )])
    }
}

/// Bifurcated decoder: a shared up-convolutional trunk conditioned on the
/// pose maps at 8, 16, and 32 pixels, then image and segmentation heads.
pub struct DecoderModel {
    pub dims: ModelDims,
    pub num_parts: usize,
}

impl DecoderModel {
    pub fn init_params(&self, seed: u64) -> ParameterVector {
        let mut rng = StdRng::seed_from_u64(seed);
        let [t0, t1, t2] = self.dims.dec_channels;
        let lp1 = self.num_parts + 1;
        let cha = self.dims.app_channels;
        let hc = self.dims.head_channels;
        let mut pv = ParameterVector::new();
        let mut conv = |pv: &mut ParameterVector, name: &str, co: usize, ci: usize, k: usize, rng: &mut StdRng| {
            pv.push(
                &format!("{name}.w"),
                vec![co, ci, k, k],
                he_normal(rng, ci * k * k, co * ci * k * k, 1.0),
            );
            pv.push(&format!("{name}.b"), vec![co], vec![0.0; co]);
        };
        conv(&mut pv, "conv0", t0, cha + lp1, 3, &mut rng);
        conv(&mut pv, "conv1", t1, t0 + lp1, 3, &mut rng);
        conv(&mut pv, "conv2", t2, t1 + lp1, 3, &mut rng);
        conv(&mut pv, "img_head", hc, t2, 3, &mut rng);
        conv(&mut pv, "img_out", 3, hc, 1, &mut rng);
        conv(&mut pv, "seg_head", hc, t2, 3, &mut rng);
        conv(&mut pv, "seg_out", lp1, hc, 1, &mut rng);
        pv
    }

    /// `appearance [Ch,8,8]`, `maps [L+1,R,R]` -> `(image [3,R,R], seg [L+1,R,R])`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &LeafMap,
        appearance: ValueId,
        maps: ValueId,
    ) -> Result<(ValueId, ValueId)> {
        let act = |t: &mut Tape, x| t.apply1(LeakyRelu { slope: 0.1 }, &[x]);
        let maps8 = tape.apply1(AvgPoolTo { out_h: 8, out_w: 8 }, &[maps])?;
        let maps16 = tape.apply1(AvgPoolTo { out_h: 16, out_w: 16 }, &[maps])?;
        let maps32 = tape.apply1(AvgPoolTo { out_h: 32, out_w: 32 }, &[maps])?;

        let x0 = tape.apply1(ConcatChannels, &[appearance, maps8])?;
        let x0 = tape.apply1(Conv2d { stride: 1, pad: 1 }, &[x0, p.get("conv0.w"), p.get("conv0.b")])?;
        let x0 = act(tape, x0)?;
        let x1 = tape.apply1(Upsample2x, &[x0])?;
        let x1 = tape.apply1(ConcatChannels, &[x1, maps16])?;
        let x1 = tape.apply1(Conv2d { stride: 1, pad: 1 }, &[x1, p.get("conv1.w"), p.get("conv1.b")])?;
        let x1 = act(tape, x1)?;
        let x2 = tape.apply1(Upsample2x, &[x1])?;
        let x2 = tape.apply1(ConcatChannels, &[x2, maps32])?;
        let x2 = tape.apply1(Conv2d { stride: 1, pad: 1 }, &[x2, p.get("conv2.w"), p.get("conv2.b")])?;
        let x2 = act(tape, x2)?;

        let ih = tape.apply1(Conv2d { stride: 1, pad: 1 }, &[x2, p.get("img_head.w"), p.get("img_head.b")])?;
        let ih = act(tape, ih)?;
        let ih = tape.apply1(Upsample2x, &[ih])?;
        let img = tape.apply1(Conv2d { stride: 1, pad: 0 }, &[ih, p.get("img_out.w"), p.get("img_out.b")])?;
        let img = tape.apply1(Sigmoid, &[img])?;

        let sh = tape.apply1(Conv2d { stride: 1, pad: 1 }, &[x2, p.get("seg_head.w"), p.get("seg_head.b")])?;
        let sh = act(tape, sh)?;
        let sh = tape.apply1(Upsample2x, &[sh])?;
        let seg = tape.apply1(Conv2d { stride: 1, pad: 0 }, &[sh, p.get("seg_out.w"), p.get("seg_out.b")])?;
        let seg = tape.apply1(SoftmaxChannels, &[seg])?;
        Ok((img, seg))
    }
}

/// Pipeline stage shared by training and evaluation: encoder pose/camera to
/// composited maps (and the canonical positions for the energy terms).
pub struct PipelineEnv {
    pub skel: Arc<Skeleton>,
    pub dict: Arc<PartDictionary>,
    pub focal: f64,
    pub tau: f64,
    pub normalize_depth: bool,
    pub s_min: f64,
}

pub struct MapsOut {
    pub p3d: ValueId,
    pub phibar: ValueId,
}

impl PipelineEnv {
    pub fn pose_to_maps(
        &self,
        tape: &mut Tape,
        pose: ValueId,
        camera: ValueId,
        direct_3d: bool,
    ) -> Result<MapsOut> {
        let p3d = if direct_3d {
            pose
        } else {
            tape.apply1(FkOp::new(self.skel.clone()), &[pose])?
        };
        let proj = tape.apply(ProjectOp { focal: self.focal }, &[p3d, camera])?;
        let warped = tape.apply(DeformOp { dict: self.dict.clone(), s_min: self.s_min }, &[proj[0]])?;
        let depths = tape.apply1(LimbDepthsOp { dict: self.dict.clone() }, &[proj[1]])?;
        let composed = tape.apply(
            DepthComposeOp { tau: self.tau, normalize_depth: self.normalize_depth },
            &[warped[0], depths],
        )?;
        Ok(MapsOut { p3d, phibar: composed[1] })
    }
}
