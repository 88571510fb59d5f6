//! Analysis-by-synthesis pose recovery: gradient descent on a rendering or
//! segmentation discrepancy through the differentiable pipeline.

use crate::camera::{CameraBounds, CameraParams, ProjectOp};
use crate::config::Config;
use crate::diffcore::{ParameterVector, Tape, Tensor, ValueId};
use crate::error::{Error, Result};
use crate::geometry::vec3;
use crate::geometry::{CanonicalPose, FkOp, LocalPose, Skeleton};
use crate::io::PoseBank;
use crate::losses::{MeanAbsDiffOp, SegConsistencyOp};
use crate::nn::WeightedSum;
use crate::parallel;
use crate::puppet::{DeformOp, DepthComposeOp, LimbDepthsOp, PartDictionary, RenderFlatOp, SegMap};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::sync::Arc;
use std::time::{Duration, Instant};

/// What the fitter matches against.
#[derive(Clone)]
pub enum FitTarget {
    /// Hard part labels; the objective is soft cross-entropy.
    Seg(Arc<SegMap>),
    /// An RGB image; the objective is mean absolute color difference.
    Image(Arc<Tensor>),
}

/// Fitting hyperparameters.
#[derive(Clone, Debug)]
pub struct FitConfig {
    pub max_iters: usize,
    pub lr: f64,
    pub restarts: usize,
    pub lambda_prior: f64,
    pub seed: u64,
}

impl FitConfig {
    pub fn from_config(cfg: &Config, seed: u64) -> Self {
        Self {
            max_iters: cfg.fit.max_iters,
            lr: cfg.fit.lr,
            restarts: cfg.fit.restarts.max(1),
            lambda_prior: cfg.fit.lambda_prior,
            seed,
        }
    }
}

/// A full starting point for one restart.
#[derive(Clone, Debug)]
pub struct FitInit {
    pub pose: LocalPose,
    pub camera: CameraParams,
    pub part_colors: Vec<[f64; 3]>,
    pub bg_color: [f64; 3],
}

/// Fit outcome: recovered parameters, final loss, and the best-so-far loss
/// trace (non-increasing across accepted steps).
#[derive(Clone, Debug)]
pub struct FitResult {
    pub pose: LocalPose,
    pub camera: CameraParams,
    pub part_colors: Vec<[f64; 3]>,
    pub bg_color: [f64; 3],
    pub final_loss: f64,
    pub trace: Vec<f64>,
    pub wall_time: Duration,
    pub restart_index: usize,
}

pub struct Fitter {
    pub skel: Arc<Skeleton>,
    pub dict: Arc<PartDictionary>,
    pub focal: f64,
    pub bounds: CameraBounds,
    pub tau: f64,
    pub normalize_depth: bool,
    pub s_min: f64,
}

impl Fitter {
    pub fn new(skel: Arc<Skeleton>, dict: Arc<PartDictionary>, cfg: &Config) -> Self {
        Self {
            skel,
            dict,
            focal: cfg.camera.focal,
            bounds: cfg.camera.bounds,
            tau: cfg.puppet.tau,
            normalize_depth: cfg.puppet.normalize_depth,
            s_min: cfg.puppet.s_min,
        }
    }

    fn pack(&self, init: &FitInit) -> ParameterVector {
        let mut pv = ParameterVector::new();
        let j = self.skel.joint_count();
        let mut v = Vec::with_capacity(j * 3);
        for row in &init.pose.vectors {
            v.extend_from_slice(row);
        }
        pv.push("v3d", vec![j, 3], v);
        pv.push("camera", vec![6], {
            let mut c = init.camera.rotation.to_vec();
            c.extend_from_slice(&init.camera.translation);
            c
        });
        let mut colors = Vec::new();
        for c in &init.part_colors {
            colors.extend_from_slice(c);
        }
        colors.extend_from_slice(&init.bg_color);
        pv.push("colors", vec![self.dict.part_count() + 1, 3], colors);
        pv
    }

    fn unpack(&self, pv: &ParameterVector) -> (LocalPose, CameraParams, Vec<[f64; 3]>, [f64; 3]) {
        let j = self.skel.joint_count();
        let v = pv.get("v3d");
        let pose = LocalPose {
            vectors: (0..j).map(|i| [v[i * 3], v[i * 3 + 1], v[i * 3 + 2]]).collect(),
        };
        let c = pv.get("camera");
        let camera = CameraParams {
            rotation: [c[0], c[1], c[2]],
            translation: [c[3], c[4], c[5]],
        };
        let cols = pv.get("colors");
        let l = self.dict.part_count();
        let part_colors = (0..l)
            .map(|i| [cols[i * 3], cols[i * 3 + 1], cols[i * 3 + 2]])
            .collect();
        let bg_color = [cols[l * 3], cols[l * 3 + 1], cols[l * 3 + 2]];
        (pose, camera, part_colors, bg_color)
    }

    /// Projects parameters back onto their feasible set: unit local vectors,
    /// box-bounded camera, colors in [0, 1].
    fn project_params(&self, pv: &mut ParameterVector) {
        let free: Vec<usize> = self.skel.free_topo().to_vec();
        {
            let v = pv.get_mut("v3d");
            for &jf in &free {
                let o = jf * 3;
                let n = (v[o] * v[o] + v[o + 1] * v[o + 1] + v[o + 2] * v[o + 2]).sqrt();
                if n > 1e-12 {
                    v[o] /= n;
                    v[o + 1] /= n;
                    v[o + 2] /= n;
                } else {
                    v[o] = 0.0;
                    v[o + 1] = 0.0;
                    v[o + 2] = 1.0;
                }
            }
        }
        {
            let b = self.bounds;
            let c = pv.get_mut("camera");
            for i in 0..3 {
                c[i] = c[i].clamp(b.angle_lo[i], b.angle_hi[i]);
                c[3 + i] = c[3 + i].clamp(b.t_lo[i], b.t_hi[i]);
            }
            c[5] = c[5].max(b.z_min);
        }
        for c in pv.get_mut("colors") {
            *c = c.clamp(0.0, 1.0);
        }
    }

    /// Builds the objective on a tape; returns the scalar loss id.
    fn build_loss(
        &self,
        tape: &mut Tape,
        leaves: &[ValueId],
        target: &FitTarget,
        prior: Option<(&Tensor, f64)>,
    ) -> Result<ValueId> {
        let (v_id, cam_id, colors_id) = (leaves[0], leaves[1], leaves[2]);
        let p3d = tape.apply1(FkOp::new(self.skel.clone()), &[v_id])?;
        let proj = tape.apply(ProjectOp { focal: self.focal }, &[p3d, cam_id])?;
        let warped = tape.apply(
            DeformOp { dict: self.dict.clone(), s_min: self.s_min },
            &[proj[0]],
        )?;
        let depths = tape.apply1(LimbDepthsOp { dict: self.dict.clone() }, &[proj[1]])?;
        let composed = tape.apply(
            DepthComposeOp { tau: self.tau, normalize_depth: self.normalize_depth },
            &[warped[0], depths],
        )?;
        let data_loss = match target {
            FitTarget::Seg(seg) => {
                let w_unc = tape.input(Tensor::zeros(vec![self.dict.height, self.dict.width]));
                tape.apply1(SegConsistencyOp { target: seg.clone() }, &[composed[1], w_unc])?
            }
            FitTarget::Image(img) => {
                let rendered = tape.apply1(RenderFlatOp, &[composed[1], colors_id])?;
                let t = tape.input((**img).clone());
                tape.apply1(MeanAbsDiffOp, &[rendered, t])?
            }
        };
        match prior {
            None => Ok(data_loss),
            Some((nearest, lambda)) => {
                let near = tape.input(nearest.clone());
                let prior_loss = tape.apply1(MeanAbsDiffOp, &[p3d, near])?;
                tape.apply1(WeightedSum::new(vec![1.0, lambda]), &[data_loss, prior_loss])
            }
        }
    }

    fn eval_loss(
        &self,
        pv: &ParameterVector,
        target: &FitTarget,
        prior: Option<(&Tensor, f64)>,
    ) -> f64 {
        let mut tape = Tape::new();
        let leaves: Vec<ValueId> = pv
            .slices()
            .iter()
            .map(|s| tape.input(Tensor::new(s.shape.clone(), pv.slice_data(s).to_vec())))
            .collect();
        match self.build_loss(&mut tape, &leaves, target, prior) {
            Ok(id) => {
                let v = tape.value(id).item();
                if v.is_finite() {
                    v
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        }
    }

    fn nearest_bank_pose(&self, pv: &ParameterVector, bank: &PoseBank) -> Option<Tensor> {
        let (pose, _, _, _) = self.unpack(pv);
        let current = crate::geometry::forward_kinematics(&pose, &self.skel).ok()?;
        let mut best: Option<(f64, &CanonicalPose)> = None;
        for cand in &bank.canonical {
            let mut d = 0.0;
            for (a, b) in current.positions.iter().zip(&cand.positions) {
                d += (a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs();
            }
            if best.as_ref().map(|(bd, _)| d < *bd).unwrap_or(true) {
                best = Some((d, cand));
            }
        }
        best.map(|(_, c)| c.to_tensor())
    }

    fn run_single(
        &self,
        init: &FitInit,
        target: &FitTarget,
        cfg: &FitConfig,
        bank: Option<&PoseBank>,
    ) -> SingleRun {
        let mut pv = self.pack(init);
        self.project_params(&mut pv);
        let use_prior = cfg.lambda_prior > 0.0 && bank.is_some();

        let mut acc = vec![0.0f64; pv.len()];
        let mut lr = cfg.lr;
        let mut trace = Vec::with_capacity(cfg.max_iters + 1);
        let nearest0 = if use_prior {
            self.nearest_bank_pose(&pv, bank.unwrap())
        } else {
            None
        };
        let mut best = self.eval_loss(&pv, target, nearest0.as_ref().map(|n| (n, cfg.lambda_prior)));
        trace.push(best);
        if !best.is_finite() {
            return SingleRun { pv, loss: f64::INFINITY, trace };
        }

        for _ in 0..cfg.max_iters {
            let nearest = if use_prior {
                self.nearest_bank_pose(&pv, bank.unwrap())
            } else {
                None
            };
            let prior = nearest.as_ref().map(|n| (n, cfg.lambda_prior));
            let grad = {
                let build = |t: &mut Tape, leaves: &[ValueId]| self.build_loss(t, leaves, target, prior);
                match crate::diffcore::gradient(&build, &pv) {
                    Ok(g) => g,
                    Err(_) => break,
                }
            };
            for (a, g) in acc.iter_mut().zip(grad.data()) {
                *a += g * g;
            }
            let mut accepted = false;
            for _ in 0..30 {
                let mut trial = pv.clone();
                for i in 0..trial.len() {
                    trial.data_mut()[i] -= lr * grad.data()[i] / (acc[i].sqrt() + 1e-8);
                }
                self.project_params(&mut trial);
                let loss = self.eval_loss(&trial, target, prior);
                if loss < best {
                    pv = trial;
                    best = loss;
                    accepted = true;
                    lr = (lr * 1.1).min(cfg.lr * 4.0);
                    break;
                }
                lr *= 0.5;
                if lr < 1e-12 {
                    break;
                }
            }
            trace.push(best);
            if !accepted && lr < 1e-12 {
                break;
            }
        }
        SingleRun { pv, loss: best, trace }
    }

    /// Runs the multi-restart fit. Restart 0 uses `init` when provided;
    /// later restarts draw poses from the bank (or perturb the template).
    pub fn fit(
        &self,
        target: &FitTarget,
        init: Option<FitInit>,
        cfg: &FitConfig,
        bank: Option<&PoseBank>,
    ) -> Result<FitResult> {
        let start = Instant::now();
        let inits: Vec<FitInit> = (0..cfg.restarts)
            .map(|r| {
                if r == 0 {
                    if let Some(i) = &init {
                        return i.clone();
                    }
                }
                self.random_init(cfg.seed.wrapping_add(r as u64), bank)
            })
            .collect();
        let runs = parallel::map_indexed(inits.len(), |r| self.run_single(&inits[r], target, cfg, bank));
        let best_idx = (0..runs.len())
            .min_by(|&a, &b| runs[a].loss.total_cmp(&runs[b].loss))
            .expect("at least one restart");
        let best = &runs[best_idx];
        if !best.loss.is_finite() {
            return Err(Error::FitFailure(format!(
                "all {} restarts diverged; first trace: {:?}",
                cfg.restarts,
                runs[0].trace.iter().take(8).collect::<Vec<_>>()
            )));
        }
        let (pose, camera, part_colors, bg_color) = self.unpack(&best.pv);
        Ok(FitResult {
            pose,
            camera,
            part_colors,
            bg_color,
            final_loss: best.loss,
            trace: best.trace.clone(),
            wall_time: start.elapsed(),
            restart_index: best_idx,
        })
    }

    /// Deterministic random initialization: a bank pose (or the template),
    /// a framing camera, and mid-gray colors.
    pub fn random_init(&self, seed: u64, bank: Option<&PoseBank>) -> FitInit {
        let mut rng = StdRng::seed_from_u64(seed);
        let pose = match bank {
            Some(b) if !b.is_empty() => {
                let idx = rng.gen_range(0..b.len());
                crate::geometry::inverse_kinematics(&b.canonical[idx], &self.skel)
                    .unwrap_or_else(|_| crate::geometry::template_local_pose(&self.skel))
            }
            _ => crate::geometry::template_local_pose(&self.skel),
        };
        let fk = crate::geometry::forward_kinematics(&pose, &self.skel)
            .expect("init pose is valid");
        let camera = crate::camera::sample_camera(&mut rng, &self.bounds, &fk, self.focal, 0.05)
            .unwrap_or(CameraParams::front_view(3.2));
        let l = self.dict.part_count();
        let part_colors = (0..l)
            .map(|_| {
                [
                    rng.gen_range(0.1..0.9),
                    rng.gen_range(0.1..0.9),
                    rng.gen_range(0.1..0.9),
                ]
            })
            .collect();
        FitInit { pose, camera, part_colors, bg_color: [0.5, 0.5, 0.5] }
    }

    /// Distance (mean L1 over joint coordinates) from a fitted pose to its
    /// nearest bank pose; used by the prior-efficacy checks.
    pub fn distance_to_bank(&self, pose: &LocalPose, bank: &PoseBank) -> f64 {
        let p = crate::geometry::forward_kinematics(pose, &self.skel).expect("valid pose");
        bank.canonical
            .iter()
            .map(|c| {
                let mut d = 0.0;
                for (a, b) in p.positions.iter().zip(&c.positions) {
                    d += vec3::norm(vec3::sub(*a, *b));
                }
                d / p.positions.len() as f64
            })
            .fold(f64::INFINITY, f64::min)
    }
}

struct SingleRun {
    pv: ParameterVector,
    loss: f64,
    trace: Vec<f64>,
}
