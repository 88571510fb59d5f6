//! Held-out evaluation of a trained (or random) encoder.

use super::generator::Generator;
use super::model::{EncoderModel, LeafMap, PipelineEnv};
use crate::camera::CameraParams;
use crate::diffcore::{ParameterVector, Tape};
use crate::error::Result;
use crate::geometry::CanonicalPose;
use crate::metrics::{mpjpe_pa, seg_f1};
use crate::parallel;
use crate::puppet::hard_segmentation;

/// Held-out metrics: similarity-aligned joint error, foreground/part F1 of
/// the puppet segmentation rendered from the predictions, and the bone
/// length deviation of the predicted canonical poses.
#[derive(Clone, Copy, Debug)]
pub struct EvalReport {
    pub mpjpe_pa: f64,
    pub fg_f1: f64,
    pub part_f1: f64,
    pub bone_dev: f64,
    pub n: usize,
}

/// Encodes one image (forward only) and returns the predicted canonical
/// pose and camera.
pub fn encode_pose(
    enc_model: &EncoderModel,
    env: &PipelineEnv,
    params: &ParameterVector,
    image: &crate::diffcore::Tensor,
) -> Result<(CanonicalPose, CameraParams)> {
    let mut tape = Tape::new();
    let leaves = LeafMap::from_params(&mut tape, params);
    let img = tape.input(image.clone());
    let out = enc_model.forward(&mut tape, &leaves, img)?;
    let p3d = if enc_model.direct_3d {
        out.pose
    } else {
        tape.apply1(crate::geometry::FkOp::new(env.skel.clone()), &[out.pose])?
    };
    let pose = CanonicalPose::from_tensor(tape.value(p3d));
    let camera = CameraParams::from_tensor(tape.value(out.camera));
    Ok((pose, camera))
}

/// Evaluates an encoder on `n` held-out samples drawn with `seed`.
pub fn evaluate_encoder(
    enc_model: &EncoderModel,
    env: &PipelineEnv,
    gen: &Generator,
    params: &ParameterVector,
    seed: u64,
    n: usize,
) -> Result<EvalReport> {
    let per_sample = parallel::try_map_indexed(n, |i| -> Result<(f64, f64, f64, f64)> {
        let sample = gen.generate_pair(seed, i as u64)?;
        let (pred, cam) = encode_pose(enc_model, env, params, &sample.img_t)?;
        let err = mpjpe_pa(&pred.positions, &sample.gt_t.canonical.positions)?;
        let bone = pred.bone_length_deviation(&env.skel);
        let (fg, part) = match gen.maps_for(&pred, &cam) {
            Ok(maps) => {
                let seg = hard_segmentation(&maps.phibar);
                seg_f1(&seg, &sample.gt_t.seg, env.dict.part_count())?
            }
            // A prediction that projects behind the camera segments nothing.
            Err(_) => (0.0, 0.0),
        };
        Ok((err, fg, part, bone))
    })?;
    let n_f = per_sample.len() as f64;
    Ok(EvalReport {
        mpjpe_pa: per_sample.iter().map(|v| v.0).sum::<f64>() / n_f,
        fg_f1: per_sample.iter().map(|v| v.1).sum::<f64>() / n_f,
        part_f1: per_sample.iter().map(|v| v.2).sum::<f64>() / n_f,
        bone_dev: per_sample.iter().map(|v| v.3).sum::<f64>() / n_f,
        n,
    })
}
