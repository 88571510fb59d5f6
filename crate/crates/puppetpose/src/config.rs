//! Runtime configuration with file-overridable defaults.

use crate::camera::CameraBounds;
use crate::error::{Error, Result};
use crate::losses::LossConfig;

#[derive(Clone, Debug)]
pub struct CameraConfig {
    pub focal: f64,
    pub bounds: CameraBounds,
    pub margin: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self { focal: 1.2, bounds: CameraBounds::default(), margin: 0.05 }
    }
}

#[derive(Clone, Debug)]
pub struct PuppetConfig {
    pub resolution: usize,
    pub erosion_radius: usize,
    pub blur_sigma: f64,
    pub tau: f64,
    pub normalize_depth: bool,
    pub s_min: f64,
}

impl Default for PuppetConfig {
    fn default() -> Self {
        Self {
            resolution: 128,
            erosion_radius: 2,
            blur_sigma: 1.5,
            tau: 0.1,
            normalize_depth: true,
            s_min: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitSettings {
    pub max_iters: usize,
    pub lr: f64,
    pub restarts: usize,
    pub lambda_prior: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self { max_iters: 500, lr: 0.08, restarts: 5, lambda_prior: 0.0 }
    }
}

#[derive(Clone, Debug)]
pub struct SelfsupConfig {
    pub resolution: usize,
    pub lr_consistency: f64,
    pub lr_energy: f64,
    pub batch: usize,
    pub appearance_channels: usize,
    pub augment: bool,
    /// Pitch/roll extent (radians) of the synthetic-corpus cameras; yaw
    /// stays free in [-pi, pi].
    pub corpus_tilt: f64,
}

impl Default for SelfsupConfig {
    fn default() -> Self {
        Self {
            resolution: 64,
            lr_consistency: 1e-2,
            lr_energy: 1e-3,
            batch: 8,
            appearance_channels: 8,
            augment: true,
            corpus_tilt: 0.25,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Config {
    pub camera: CameraConfig,
    pub puppet: PuppetConfig,
    pub loss: LossConfig,
    pub fit: FitSettings,
    pub selfsup: SelfsupConfig,
}

fn parse_f64(v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("expected a number, got `{v}`")))
}

fn parse_usize(v: &str) -> Result<usize> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("expected an integer, got `{v}`")))
}

fn parse_bool(v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("expected a boolean, got `{other}`"))),
    }
}

fn parse_vec3(v: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = v.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("expected three comma-separated numbers, got `{v}`")));
    }
    Ok([parse_f64(parts[0])?, parse_f64(parts[1])?, parse_f64(parts[2])?])
}

impl Config {
    /// Applies one `section.key = value` override. Returns false for keys
    /// this build does not know (callers warn, they do not fail).
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "camera.f" => self.camera.focal = parse_f64(value)?,
            "camera.margin" => self.camera.margin = parse_f64(value)?,
            "camera.bounds.angle_lo" => self.camera.bounds.angle_lo = parse_vec3(value)?,
            "camera.bounds.angle_hi" => self.camera.bounds.angle_hi = parse_vec3(value)?,
            "camera.bounds.t_lo" => self.camera.bounds.t_lo = parse_vec3(value)?,
            "camera.bounds.t_hi" => self.camera.bounds.t_hi = parse_vec3(value)?,
            "camera.bounds.z_min" => self.camera.bounds.z_min = parse_f64(value)?,
            "puppet.resolution" => self.puppet.resolution = parse_usize(value)?,
            "puppet.erosion_radius" => self.puppet.erosion_radius = parse_usize(value)?,
            "puppet.blur_sigma" => self.puppet.blur_sigma = parse_f64(value)?,
            "puppet.tau" => self.puppet.tau = parse_f64(value)?,
            "puppet.normalize_depth" => self.puppet.normalize_depth = parse_bool(value)?,
            "puppet.s_min" => self.puppet.s_min = parse_f64(value)?,
            "loss.beta" => {
                let b = parse_f64(value)?;
                if b < 0.0 {
                    return Err(Error::Config("loss.beta must be non-negative".into()));
                }
                self.loss.beta = b;
            }
            "loss.bg_color" => self.loss.bg_color = parse_vec3(value)?,
            "fit.max_iters" => self.fit.max_iters = parse_usize(value)?,
            "fit.lr" => self.fit.lr = parse_f64(value)?,
            "fit.restarts" => self.fit.restarts = parse_usize(value)?,
            "fit.lambda_prior" => self.fit.lambda_prior = parse_f64(value)?,
            "selfsup.resolution" => self.selfsup.resolution = parse_usize(value)?,
            "selfsup.lr_consistency" => self.selfsup.lr_consistency = parse_f64(value)?,
            "selfsup.lr_energy" => self.selfsup.lr_energy = parse_f64(value)?,
            "selfsup.batch" => self.selfsup.batch = parse_usize(value)?,
            "selfsup.appearance_channels" => self.selfsup.appearance_channels = parse_usize(value)?,
            "selfsup.augment" => self.selfsup.augment = parse_bool(value)?,
            "selfsup.corpus_tilt" => self.selfsup.corpus_tilt = parse_f64(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}
