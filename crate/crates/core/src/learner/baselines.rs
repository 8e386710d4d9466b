//! The two comparison strategies: fixed-threshold pixel-wise correction and
//! bootstrapping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Confidence threshold of pixel-wise correction.
    pub pixelwise_k: f32,
    pub bootstrap_beta_start: f64,
    pub bootstrap_beta_end: f64,
    /// Epochs over which beta decays geometrically from start to end.
    pub bootstrap_decay_epochs: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            pixelwise_k: 0.6,
            bootstrap_beta_start: 1.0,
            bootstrap_beta_end: 0.3,
            bootstrap_decay_epochs: 80,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pixelwise_k > 0.0 && self.pixelwise_k < 1.0) {
            return Err(Error::Config(format!(
                "K must lie in (0, 1), got {}",
                self.pixelwise_k
            )));
        }
        let ok = |b: f64| (0.0..=1.0).contains(&b) && b > 0.0;
        if !ok(self.bootstrap_beta_start) || !ok(self.bootstrap_beta_end) {
            return Err(Error::Config("bootstrap betas must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Geometric interpolation from start to end over the decay epochs,
    /// constant afterwards.
    pub fn bootstrap_beta(&self, epoch: usize) -> f64 {
        if self.bootstrap_decay_epochs == 0 || epoch >= self.bootstrap_decay_epochs {
            return self.bootstrap_beta_end;
        }
        let t = epoch as f64 / self.bootstrap_decay_epochs as f64;
        self.bootstrap_beta_start * (self.bootstrap_beta_end / self.bootstrap_beta_start).powf(t)
    }
}

/// Pixels whose max-class confidence reaches `k` take the model's hard
/// prediction; all others keep the noisy label.
pub fn pixelwise_correct(noisy: &Raster, prob: &Raster, k: f32) -> Result<Raster> {
    if !(k > 0.0 && k < 1.0) {
        return Err(Error::Config(format!("K must lie in (0, 1), got {k}")));
    }
    noisy.check_same_shape(prob)?;
    let mut out = noisy.clone();
    for (o, &p) in out.values_mut().iter_mut().zip(prob.values()) {
        if p.max(1.0 - p) >= k {
            *o = if p >= 0.5 { 1.0 } else { 0.0 };
        }
    }
    Ok(out)
}

/// `y' = beta * y + (1 - beta) * p`.
pub fn bootstrap_targets(noisy: &Raster, prob: &Raster, beta: f64) -> Result<Raster> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!(
            "beta must lie in [0, 1], got {beta}"
        )));
    }
    noisy.check_same_shape(prob)?;
    let beta = beta as f32;
    let mut out = noisy.clone();
    for (o, &p) in out.values_mut().iter_mut().zip(prob.values()) {
        *o = (beta * *o + (1.0 - beta) * p).clamp(0.0, 1.0);
    }
    Ok(out)
}
