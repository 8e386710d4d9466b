use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::act::ActConfig;
use crate::error::{Error, Result};
use crate::learner::{AdamConfig, BaselineConfig, ModelConfig};
use crate::o2c::{O2cConfig, PseudoLabelSource};
use crate::synthdata::{NoiseConfig, SceneConfig};

/// Training strategy of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Clean labels.
    Gt,
    /// Raw noisy labels throughout.
    Noisy,
    Aio2,
    Pixelwise,
    Bootstrap,
}

impl Arm {
    pub const ALL: [Arm; 5] = [
        Arm::Gt,
        Arm::Noisy,
        Arm::Aio2,
        Arm::Pixelwise,
        Arm::Bootstrap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Gt => "gt",
            Arm::Noisy => "noisy",
            Arm::Aio2 => "aio2",
            Arm::Pixelwise => "pixelwise",
            Arm::Bootstrap => "bootstrap",
        }
    }

    /// Whether the arm monitors the training curve and resumes on trigger.
    pub fn uses_act(self) -> bool {
        matches!(self, Arm::Aio2 | Arm::Pixelwise)
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown arm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// A dataset directory written by `synth` + `inject`.
    Path { path: PathBuf },
    /// Generated in memory; the first `n_train` patches train, the next
    /// `n_test` test.
    Synthetic {
        scene: SceneConfig,
        noise: NoiseConfig,
        n_train: usize,
        n_test: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub adam: AdamConfig,
    pub ema_alpha: f32,
    pub batch_size: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            ema_alpha: 0.999,
            batch_size: 8,
        }
    }
}

fn default_epochs() -> usize {
    300
}
fn default_replays() -> usize {
    3
}
fn default_eval_every() -> usize {
    5
}
fn default_true() -> bool {
    true
}
fn default_depth() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    #[serde(default = "default_arm")]
    pub arm: Arm,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub act: Option<ActConfig>,
    #[serde(default)]
    pub o2c: Option<O2cConfig>,
    #[serde(default)]
    pub baseline: Option<BaselineConfig>,
    /// Model whose training-set predictions feed the `acc` curve and diagnostics.
    #[serde(default)]
    pub act_source: PseudoLabelSource,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_replays")]
    pub replays: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Drives model initialization and batch shuffling.
    #[serde(default)]
    pub seed: u64,
    /// Log memorization diagnostics on the training set every epoch.
    #[serde(default = "default_true")]
    pub diagnostics: bool,
    /// Boundary depth of the ambiguous pixel band.
    #[serde(default = "default_depth")]
    pub diag_depth: usize,
    /// Write `ckpt/epoch_N.bin` files when an output directory is given.
    #[serde(default = "default_true")]
    pub write_checkpoints: bool,
}

fn default_arm() -> Arm {
    Arm::Aio2
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be >= 1");
        }
        if self.replays == 0 {
            return bad("replays must be >= 1");
        }
        if self.trainer.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.trainer.ema_alpha) {
            return bad("ema_alpha must lie in [0, 1)");
        }
        if self.diagnostics && self.diag_depth == 0 {
            return bad("diag_depth must be >= 1");
        }
        if self.arm.uses_act() {
            self.act()?.validate()?;
        }
        if self.arm == Arm::Aio2 {
            self.o2c()?.validate()?;
        }
        if matches!(self.arm, Arm::Pixelwise | Arm::Bootstrap) {
            self.baseline()?.validate()?;
        }
        match &self.dataset {
            DatasetSource::Synthetic {
                scene,
                noise,
                n_train,
                ..
            } => {
                scene.validate()?;
                noise.validate()?;
                if *n_train == 0 {
                    return bad("n_train must be >= 1");
                }
            }
            DatasetSource::Path { .. } => {}
        }
        Ok(())
    }

    fn missing(&self, section: &str) -> Error {
        Error::Config(format!("arm {} needs a {section:?} section", self.arm))
    }

    pub fn act(&self) -> Result<&ActConfig> {
        self.act.as_ref().ok_or_else(|| self.missing("act"))
    }

    pub fn o2c(&self) -> Result<&O2cConfig> {
        self.o2c.as_ref().ok_or_else(|| self.missing("o2c"))
    }

    pub fn baseline(&self) -> Result<&BaselineConfig> {
        self.baseline
            .as_ref()
            .ok_or_else(|| self.missing("baseline"))
    }

    /// Copy with a different arm and seed, as used by replays.
    pub fn with_arm_seed(&self, arm: Arm, seed: u64) -> RunConfig {
        RunConfig {
            arm,
            seed,
            ..self.clone()
        }
    }
}
