//! Decoupled self-supervised training: alternate encoder-only and
//! decoder-only energy updates, then a joint consistency update, each loss
//! with its own Adagrad optimizer.

use super::adagrad::Adagrad;
use super::generator::{flip_image_h, jitter_colors, rotate_image, Generator, SynthSample};
use super::model::{DecoderModel, EncoderModel, LeafMap, PipelineEnv};
use crate::camera::CameraParams;
use crate::diffcore::{ParameterVector, Tape, Tensor};
use crate::error::{Error, Result};
use crate::geometry::{CanonicalPose, FkOp};
use crate::losses::{MeanAbsDiffOp, ReconCertainOp, ReconUncertainOp, SegConsistencyOp};
use crate::parallel;
use crate::puppet::{hard_segmentation, DepthComposeOp, LimbDepthsOp, PartMaps, SegMap};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

/// Which ingredient to drop, mirroring the ablation rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    None,
    /// No pose-bank samples: drops the certain reconstruction, the
    /// segmentation consistency, and both energy terms.
    Qz,
    /// No saliency mask in the uncertain reconstruction.
    Msal,
    /// Direct 3D joint regression instead of local vectors + kinematics.
    Fk,
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "qz" => Ok(Self::Qz),
            "msal" => Ok(Self::Msal),
            "fk" => Ok(Self::Fk),
            other => Err(Error::Config(format!("unknown ablation `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub corpus_size: usize,
    pub corpus_seed: u64,
    pub train_seed: u64,
    pub lr_consistency: f64,
    pub lr_energy: f64,
    pub beta: f64,
    pub bg_color: [f64; 3],
    pub ablation: Ablation,
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch: 8,
            corpus_size: 2000,
            corpus_seed: 1,
            train_seed: 2,
            lr_consistency: 1e-2,
            lr_energy: 1e-3,
            beta: 0.5,
            bg_color: [0.5, 0.5, 0.5],
            ablation: Ablation::None,
            augment: true,
        }
    }
}

/// Loss values of one training step (zero when a term is ablated away).
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct StepLog {
    pub l_iu: f64,
    pub l_ic: f64,
    pub l_seg: f64,
    pub l_pz: f64,
    pub l_as: f64,
}

impl StepLog {
    pub fn all_finite(&self) -> bool {
        [self.l_iu, self.l_ic, self.l_seg, self.l_pz, self.l_as]
            .iter()
            .all(|v| v.is_finite())
    }
}

struct JointOpt {
    enc: Adagrad,
    dec: Adagrad,
}

/// Optimizer state: one accumulator per loss term (and per network for the
/// joint consistency losses), plus the iteration counter.
pub struct TrainState {
    pub enc: ParameterVector,
    pub dec: ParameterVector,
    /// 1-based iteration counter; odd iterations update the encoder on the
    /// energy terms, even iterations the decoder.
    pub iter: usize,
    opt_e_pose: Adagrad,
    opt_e_app: Adagrad,
    opt_d_pose: Adagrad,
    opt_d_app: Adagrad,
    opt_iu: JointOpt,
    opt_ic: JointOpt,
    opt_seg: JointOpt,
}

impl TrainState {
    pub fn new(enc: ParameterVector, dec: ParameterVector, lr_c: f64, lr_e: f64) -> Self {
        let (ne, nd) = (enc.len(), dec.len());
        Self {
            enc,
            dec,
            iter: 1,
            opt_e_pose: Adagrad::new(lr_e, ne),
            opt_e_app: Adagrad::new(lr_e, ne),
            opt_d_pose: Adagrad::new(lr_e, nd),
            opt_d_app: Adagrad::new(lr_e, nd),
            opt_iu: JointOpt { enc: Adagrad::new(lr_c, ne), dec: Adagrad::new(lr_c, nd) },
            opt_ic: JointOpt { enc: Adagrad::new(lr_c, ne), dec: Adagrad::new(lr_c, nd) },
            opt_seg: JointOpt { enc: Adagrad::new(lr_c, ne), dec: Adagrad::new(lr_c, nd) },
        }
    }
}

/// One assembled training example: the (possibly augmented) pair plus the
/// pose-bank sample and its constant maps.
pub struct BatchItem {
    pub img_s: Tensor,
    pub img_t: Tensor,
    pub m_sal: Tensor,
    pub pz: CanonicalPose,
    pub pz_tensor: Tensor,
    pub cam_z: CameraParams,
    pub maps_z: PartMaps,
}

pub struct Trainer {
    pub gen: Arc<Generator>,
    pub enc_model: EncoderModel,
    pub dec_model: DecoderModel,
    pub env: PipelineEnv,
    pub cfg: TrainConfig,
}

struct ItemGrads {
    enc: Vec<Vec<f64>>,
    dec: Vec<Vec<f64>>,
    values: Vec<f64>,
}

fn mean_grads(items: &[ItemGrads], which: usize, enc_len: usize, dec_len: usize) -> (Vec<f64>, Vec<f64>) {
    let mut ge = vec![0.0; enc_len];
    let mut gd = vec![0.0; dec_len];
    for it in items {
        for (a, b) in ge.iter_mut().zip(&it.enc[which]) {
            *a += b;
        }
        for (a, b) in gd.iter_mut().zip(&it.dec[which]) {
            *a += b;
        }
    }
    let n = items.len() as f64;
    ge.iter_mut().for_each(|v| *v /= n);
    gd.iter_mut().for_each(|v| *v /= n);
    (ge, gd)
}

impl Trainer {
    /// Deterministic batch for one iteration.
    pub fn assemble_batch(&self, iter: usize) -> Result<Vec<BatchItem>> {
        let mut rng = StdRng::seed_from_u64(self.cfg.train_seed ^ (iter as u64).wrapping_mul(0x9e37));
        let mut picks = Vec::with_capacity(self.cfg.batch);
        for _ in 0..self.cfg.batch {
            let index = rng.gen_range(0..self.cfg.corpus_size) as u64;
            let flip = self.cfg.augment && rng.gen_bool(0.5);
            let angle = if self.cfg.augment && rng.gen_bool(0.5) {
                rng.gen_range(-0.15..0.15)
            } else {
                0.0
            };
            let jitter = if self.cfg.augment {
                [
                    rng.gen_range(0.85..1.15),
                    rng.gen_range(0.85..1.15),
                    rng.gen_range(0.85..1.15),
                ]
            } else {
                [1.0; 3]
            };
            let pz_idx = rng.gen_range(0..self.gen.bank.len());
            let cam_rng_seed: u64 = rng.gen();
            picks.push((index, flip, angle, jitter, pz_idx, cam_rng_seed));
        }
        parallel::try_map_indexed(picks.len(), |k| {
            let (index, flip, angle, jitter, pz_idx, cam_seed) = picks[k];
            let sample: SynthSample = self.gen.generate_pair(self.cfg.corpus_seed, index)?;
            let mut img_s = sample.img_s;
            let mut img_t = sample.img_t;
            let mut m_sal = sample.m_sal_t;
            if flip {
                img_t = flip_image_h(&img_t);
                let flat = flip_image_h(&Tensor::new(
                    vec![1, m_sal.shape()[0], m_sal.shape()[1]],
                    m_sal.data().to_vec(),
                ));
                m_sal = Tensor::new(m_sal.shape().to_vec(), flat.into_data());
            }
            if angle != 0.0 {
                img_t = rotate_image(&img_t, angle);
                let rotated = rotate_image(
                    &Tensor::new(vec![1, m_sal.shape()[0], m_sal.shape()[1]], m_sal.data().to_vec()),
                    angle,
                );
                m_sal = Tensor::new(m_sal.shape().to_vec(), rotated.into_data());
            }
            if jitter != [1.0; 3] {
                img_s = jitter_colors(&img_s, jitter);
                img_t = jitter_colors(&img_t, jitter);
            }
            let pz = self.gen.bank.canonical[pz_idx].clone();
            let mut cam_rng = StdRng::seed_from_u64(cam_seed);
            let cam_z = self.gen.sample_camera(&mut cam_rng, &pz)?;
            let maps_z = self.gen.maps_for(&pz, &cam_z)?;
            Ok(BatchItem {
                img_s,
                img_t,
                m_sal,
                pz_tensor: pz.to_tensor(),
                pz,
                cam_z,
                maps_z,
            })
        })
    }

    /// Energy phase: re-encode the bank-pose render and minimize the pose
    /// and appearance energies, updating only one network per iteration.
    pub fn energy_phase(&self, state: &mut TrainState, batch: &[BatchItem]) -> Result<(f64, f64)> {
        if self.cfg.ablation == Ablation::Qz {
            return Ok((0.0, 0.0));
        }
        let enc_pv = &state.enc;
        let dec_pv = &state.dec;
        let items = parallel::try_map_indexed(batch.len(), |k| -> Result<ItemGrads> {
            let item = &batch[k];
            let mut tape = Tape::new();
            let enc_leaves = LeafMap::from_params(&mut tape, enc_pv);
            let dec_leaves = LeafMap::from_params(&mut tape, dec_pv);
            let img_s = tape.input(item.img_s.clone());
            let out_s = self.enc_model.forward(&mut tape, &enc_leaves, img_s)?;
            let maps_z = tape.input(item.maps_z.phibar.clone());
            let (i_hat, _y_hat) =
                self.dec_model.forward(&mut tape, &dec_leaves, out_s.appearance, maps_z)?;
            let re = self.enc_model.forward(&mut tape, &enc_leaves, i_hat)?;
            let p_hat = if self.enc_model.direct_3d {
                re.pose
            } else {
                tape.apply1(FkOp::new(self.env.skel.clone()), &[re.pose])?
            };
            let pz = tape.input(item.pz_tensor.clone());
            let l_pz = tape.apply1(MeanAbsDiffOp, &[p_hat, pz])?;
            let l_as = tape.apply1(MeanAbsDiffOp, &[re.appearance, out_s.appearance])?;

            let v_pz = tape.value(l_pz).item();
            let v_as = tape.value(l_as).item();
            tape.backward(l_pz)?;
            let g_pz_e = enc_leaves.grads(&tape, enc_pv);
            let g_pz_d = dec_leaves.grads(&tape, dec_pv);
            tape.backward(l_as)?;
            let g_as_e = enc_leaves.grads(&tape, enc_pv);
            let g_as_d = dec_leaves.grads(&tape, dec_pv);
            Ok(ItemGrads {
                enc: vec![g_pz_e, g_as_e],
                dec: vec![g_pz_d, g_as_d],
                values: vec![v_pz, v_as],
            })
        })?;
        let (ne, nd) = (state.enc.len(), state.dec.len());
        let (g_pz_e, g_pz_d) = mean_grads(&items, 0, ne, nd);
        let (g_as_e, g_as_d) = mean_grads(&items, 1, ne, nd);
        let l_pz = items.iter().map(|i| i.values[0]).sum::<f64>() / items.len() as f64;
        let l_as = items.iter().map(|i| i.values[1]).sum::<f64>() / items.len() as f64;
        if !l_pz.is_finite() || !l_as.is_finite() {
            return Err(Error::TrainAbort(format!(
                "non-finite energy at iteration {} (l_pz={l_pz}, l_as={l_as})",
                state.iter
            )));
        }
        if state.iter % 2 != 0 {
            state.opt_e_pose.step(state.enc.data_mut(), &g_pz_e);
            state.opt_e_app.step(state.enc.data_mut(), &g_as_e);
        } else {
            state.opt_d_pose.step(state.dec.data_mut(), &g_pz_d);
            state.opt_d_app.step(state.dec.data_mut(), &g_as_d);
        }
        Ok((l_pz, l_as))
    }

    /// Hard segmentation target for the bank pose: part arrangement from the
    /// true projection, occlusion ordering from the re-encoded prediction.
    fn seg_target(&self, item: &BatchItem, i_zs: &Tensor, enc_pv: &ParameterVector) -> Result<SegMap> {
        let mut tape = Tape::new();
        let leaves = LeafMap::from_params(&mut tape, enc_pv);
        let img = tape.input(i_zs.clone());
        let out = self.enc_model.forward(&mut tape, &leaves, img)?;
        let p3d = if self.enc_model.direct_3d {
            out.pose
        } else {
            tape.apply1(FkOp::new(self.env.skel.clone()), &[out.pose])?
        };
        let proj = tape.apply(crate::camera::ProjectOp { focal: self.env.focal }, &[p3d, out.camera])?;
        let qd = tape.value(proj[1]).clone();
        let depths = LimbDepthsOp { dict: self.env.dict.clone() }.forward(&[&qd])?;
        let composed = DepthComposeOp {
            tau: self.env.tau,
            normalize_depth: self.env.normalize_depth,
        }
        .forward(&[&item.maps_z.phi_p, &depths[0]])?;
        Ok(hard_segmentation(&composed[1]))
    }

    /// Joint consistency phase: uncertain/certain reconstruction and the
    /// segmentation objective, each applied through its own optimizer to
    /// both networks.
    pub fn consistency_phase(&self, state: &mut TrainState, batch: &[BatchItem]) -> Result<(f64, f64, f64)> {
        let qz_on = self.cfg.ablation != Ablation::Qz;
        let enc_pv = &state.enc;
        let dec_pv = &state.dec;
        let items = parallel::try_map_indexed(batch.len(), |k| -> Result<ItemGrads> {
            let item = &batch[k];
            let mut tape = Tape::new();
            let enc_leaves = LeafMap::from_params(&mut tape, enc_pv);
            let dec_leaves = LeafMap::from_params(&mut tape, dec_pv);
            let img_s = tape.input(item.img_s.clone());
            let img_t = tape.input(item.img_t.clone());
            let out_s = self.enc_model.forward(&mut tape, &enc_leaves, img_s)?;
            let out_t = self.enc_model.forward(&mut tape, &enc_leaves, img_t)?;
            let maps_t = self
                .env
                .pose_to_maps(&mut tape, out_t.pose, out_t.camera, self.enc_model.direct_3d)?;
            let (i_tu, y_tu) =
                self.dec_model
                    .forward(&mut tape, &dec_leaves, out_s.appearance, maps_t.phibar)?;
            let m_sal = if self.cfg.ablation == Ablation::Msal {
                Tensor::zeros(item.m_sal.shape().to_vec())
            } else {
                item.m_sal.clone()
            };
            let l_iu = tape.apply1(
                ReconUncertainOp {
                    target: Arc::new(item.img_t.clone()),
                    m_sal: Arc::new(m_sal),
                    beta: self.cfg.beta,
                },
                &[i_tu, y_tu],
            )?;

            let mut enc_grads = Vec::new();
            let mut dec_grads = Vec::new();
            let mut values = Vec::new();
            values.push(tape.value(l_iu).item());
            tape.backward(l_iu)?;
            enc_grads.push(enc_leaves.grads(&tape, enc_pv));
            dec_grads.push(dec_leaves.grads(&tape, dec_pv));

            if qz_on {
                let maps_z = tape.input(item.maps_z.phibar.clone());
                let (i_zs, y_zs) =
                    self.dec_model
                        .forward(&mut tape, &dec_leaves, out_s.appearance, maps_z)?;
                let (i_zt, _) =
                    self.dec_model
                        .forward(&mut tape, &dec_leaves, out_t.appearance, maps_z)?;
                let w_fg = tape.input(item.maps_z.w_fg.clone());
                let l_ic = tape.apply1(ReconCertainOp { bg_color: self.cfg.bg_color }, &[i_zs, i_zt, w_fg])?;
                let target = self.seg_target(item, tape.value(i_zs), enc_pv)?;
                let w_unc = tape.input(item.maps_z.w_unc.clone());
                let l_seg = tape.apply1(SegConsistencyOp { target: Arc::new(target) }, &[y_zs, w_unc])?;

                values.push(tape.value(l_ic).item());
                tape.backward(l_ic)?;
                enc_grads.push(enc_leaves.grads(&tape, enc_pv));
                dec_grads.push(dec_leaves.grads(&tape, dec_pv));

                values.push(tape.value(l_seg).item());
                tape.backward(l_seg)?;
                enc_grads.push(enc_leaves.grads(&tape, enc_pv));
                dec_grads.push(dec_leaves.grads(&tape, dec_pv));
            }
            Ok(ItemGrads { enc: enc_grads, dec: dec_grads, values })
        })?;

        let (ne, nd) = (state.enc.len(), state.dec.len());
        let n = items.len() as f64;
        let l_iu = items.iter().map(|i| i.values[0]).sum::<f64>() / n;
        let (g_e, g_d) = mean_grads(&items, 0, ne, nd);
        if !l_iu.is_finite() {
            return Err(Error::TrainAbort(format!(
                "non-finite uncertain reconstruction at iteration {}",
                state.iter
            )));
        }
        state.opt_iu.enc.step(state.enc.data_mut(), &g_e);
        state.opt_iu.dec.step(state.dec.data_mut(), &g_d);

        let (mut l_ic, mut l_seg) = (0.0, 0.0);
        if qz_on {
            l_ic = items.iter().map(|i| i.values[1]).sum::<f64>() / n;
            l_seg = items.iter().map(|i| i.values[2]).sum::<f64>() / n;
            if !l_ic.is_finite() || !l_seg.is_finite() {
                return Err(Error::TrainAbort(format!(
                    "non-finite consistency loss at iteration {} (l_ic={l_ic}, l_seg={l_seg})",
                    state.iter
                )));
            }
            let (g_e, g_d) = mean_grads(&items, 1, ne, nd);
            state.opt_ic.enc.step(state.enc.data_mut(), &g_e);
            state.opt_ic.dec.step(state.dec.data_mut(), &g_d);
            let (g_e, g_d) = mean_grads(&items, 2, ne, nd);
            state.opt_seg.enc.step(state.enc.data_mut(), &g_e);
            state.opt_seg.dec.step(state.dec.data_mut(), &g_d);
        }
        Ok((l_iu, l_ic, l_seg))
    }

    /// One full iteration of the decoupled schedule.
    pub fn step(&self, state: &mut TrainState) -> Result<StepLog> {
        let batch = self.assemble_batch(state.iter)?;
        let (l_pz, l_as) = self.energy_phase(state, &batch)?;
        let (l_iu, l_ic, l_seg) = self.consistency_phase(state, &batch)?;
        state.iter += 1;
        let log = StepLog { l_iu, l_ic, l_seg, l_pz, l_as };
        if !log.all_finite() {
            return Err(Error::TrainAbort(format!(
                "non-finite loss at iteration {}: {log:?}",
                state.iter - 1
            )));
        }
        Ok(log)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    slices: Vec<(String, Vec<usize>, usize)>,
    len: usize,
    iteration: usize,
    seed: u64,
}

/// Writes a parameter vector as a little-endian f64 dump plus JSON metadata.
pub fn save_checkpoint(dir: &Path, name: &str, pv: &ParameterVector, iteration: usize, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut bytes = Vec::with_capacity(pv.len() * 8);
    for v in pv.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(dir.join(format!("{name}.bin")), bytes)?;
    let meta = CheckpointMeta {
        slices: pv
            .slices()
            .iter()
            .map(|s| (s.name.clone(), s.shape.clone(), s.range.len()))
            .collect(),
        len: pv.len(),
        iteration,
        seed,
    };
    std::fs::write(
        dir.join(format!("{name}.json")),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(())
}

/// Reads a checkpoint back into a parameter vector.
pub fn load_checkpoint(dir: &Path, name: &str) -> Result<ParameterVector> {
    let meta: CheckpointMeta =
        serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{name}.json")))?)?;
    let bytes = std::fs::read(dir.join(format!("{name}.bin")))?;
    if bytes.len() != meta.len * 8 {
        return Err(Error::Schema("checkpoint length mismatch".into()));
    }
    let values: Vec<f64> = bytes
        .chunks(8)
        .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
        .collect();
    let mut pv = ParameterVector::new();
    let mut offset = 0;
    for (name, shape, len) in meta.slices {
        pv.push(&name, shape, values[offset..offset + len].to_vec());
        offset += len;
    }
    Ok(pv)
}
