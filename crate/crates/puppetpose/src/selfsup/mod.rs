//! Toy-scale self-supervised system: synthetic paired corpus, small
//! encoder/decoder, decoupled training schedule, and held-out evaluation.

pub mod adagrad;
pub mod eval;
pub mod generator;
pub mod model;
pub mod train;

pub use adagrad::Adagrad;
pub use eval::{encode_pose, evaluate_encoder, EvalReport};
pub use generator::{
    flip_image_h, jitter_colors, rotate_image, FrameGt, GenConfig, Generator, SynthSample,
};
pub use model::{DecoderModel, EncoderModel, LeafMap, ModelDims, PipelineEnv};
pub use train::{
    load_checkpoint, save_checkpoint, Ablation, BatchItem, StepLog, TrainConfig, TrainState,
    Trainer,
};

use crate::config::Config;
use crate::error::Result;
use crate::geometry::Skeleton;
use crate::io::PoseBank;
use crate::puppet::{builtin_dictionary, PartDictionary};
use std::sync::Arc;

/// Everything needed to run training/evaluation at one resolution.
pub struct Workbench {
    pub skel: Arc<Skeleton>,
    pub dict: Arc<PartDictionary>,
    pub bank: Arc<PoseBank>,
    pub gen: Arc<Generator>,
    pub enc_model: EncoderModel,
    pub dec_model: DecoderModel,
    pub env: PipelineEnv,
}

impl Workbench {
    /// Builds the default toy setup from a config (64x64 corpus, built-in
    /// template, synthetic pose bank).
    pub fn new(cfg: &Config, bank: Option<Arc<PoseBank>>, direct_3d: bool) -> Result<Self> {
        let skel = Arc::new(Skeleton::default_h17());
        let res = cfg.selfsup.resolution;
        // Narrow smoothing at the small corpus resolution.
        let (erosion, sigma) = if res <= 64 { (1, 1.0) } else { (2, 1.5) };
        let dict = Arc::new(builtin_dictionary(&skel, res, erosion, sigma)?);
        let bank = bank.unwrap_or_else(|| Arc::new(PoseBank::synthetic(&skel, 1024, 7, 0.7)));
        let gen_cfg = GenConfig {
            resolution: res,
            focal: cfg.camera.focal,
            tau: cfg.puppet.tau,
            normalize_depth: cfg.puppet.normalize_depth,
            s_min: cfg.puppet.s_min,
            tilt: cfg.selfsup.corpus_tilt,
            ..GenConfig::default()
        };
        let gen = Arc::new(Generator::new(skel.clone(), dict.clone(), bank.clone(), gen_cfg));
        let dims = ModelDims {
            app_channels: cfg.selfsup.appearance_channels,
            resolution: res,
            ..ModelDims::default()
        };
        let enc_model = EncoderModel {
            dims: dims.clone(),
            skel: skel.clone(),
            bounds: cfg.camera.bounds,
            direct_3d,
        };
        let dec_model = DecoderModel { dims, num_parts: dict.part_count() };
        let env = PipelineEnv {
            skel: skel.clone(),
            dict: dict.clone(),
            focal: cfg.camera.focal,
            tau: cfg.puppet.tau,
            normalize_depth: cfg.puppet.normalize_depth,
            s_min: cfg.puppet.s_min,
        };
        Ok(Self { skel, dict, bank, gen, enc_model, dec_model, env })
    }

    pub fn trainer(&self, tcfg: TrainConfig) -> Trainer {
        Trainer {
            gen: self.gen.clone(),
            enc_model: EncoderModel {
                dims: self.enc_model.dims.clone(),
                skel: self.skel.clone(),
                bounds: self.enc_model.bounds,
                direct_3d: self.enc_model.direct_3d,
            },
            dec_model: DecoderModel {
                dims: self.dec_model.dims.clone(),
                num_parts: self.dict.part_count(),
            },
            env: PipelineEnv {
                skel: self.skel.clone(),
                dict: self.dict.clone(),
                focal: self.env.focal,
                tau: self.env.tau,
                normalize_depth: self.env.normalize_depth,
                s_min: self.env.s_min,
            },
            cfg: tcfg,
        }
    }
}
