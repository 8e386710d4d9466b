//! Adaptive correction trigger.
//!
//! Watches the per-epoch training accuracy (IoU against the noisy labels) and
//! detects when its growth rate, estimated by sliding-window linear fits,
//! stops falling and starts rising again: the end of the transition stage
//! `I_t`. From the curve up to `I_t` it then derives the end of early
//! learning `I_e` and the resume epoch `I_r = floor((I_e + I_t) / 2)`.
//!
//! [`ActMonitor`] is the online form, fed one epoch at a time;
//! [`detect_offline`] replays a stored curve through the same monitor.

use serde::{Deserialize, Serialize};

use crate::curvefit::{fit_saturating_exp, window_slope, AccuracySeries, ExpFit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActConfig {
    pub windows: Vec<usize>,
    /// Look-ahead buffer `z`; `None` means `floor(mean(windows))`.
    #[serde(default)]
    pub buffer: Option<usize>,
    #[serde(default = "default_stride")]
    pub checkpoint_stride: usize,
}

fn default_stride() -> usize {
    5
}

impl Default for ActConfig {
    fn default() -> Self {
        Self {
            windows: vec![10, 20, 30, 40],
            buffer: None,
            checkpoint_stride: 5,
        }
    }
}

impl ActConfig {
    pub fn validate(&self) -> Result<()> {
        if self.windows.is_empty() {
            return Err(Error::Config("at least one ACT window is required".into()));
        }
        if let Some(w) = self.windows.iter().find(|&&w| w < 2) {
            return Err(Error::Config(format!("ACT window {w} is below 2")));
        }
        if self.buffer() == 0 {
            return Err(Error::Config("ACT buffer must be >= 1".into()));
        }
        if self.checkpoint_stride == 0 {
            return Err(Error::Config("checkpoint stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn buffer(&self) -> usize {
        self.buffer.unwrap_or_else(|| {
            if self.windows.is_empty() {
                0
            } else {
                self.windows.iter().sum::<usize>() / self.windows.len()
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActDecision {
    /// `(w, I_t^(w))` in configuration order.
    pub it_per_window: Vec<(usize, usize)>,
    pub it: usize,
    pub ie: usize,
    pub ir: usize,
    pub sigma: f64,
    pub fit: ExpFit,
    /// Epoch at which the last window confirmed (the live trigger epoch).
    pub trigger_epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    WarmUp,
    Triggered,
}

#[derive(Debug, Clone, PartialEq)]
struct WindowTrack {
    window: usize,
    /// `slopes[j]` is `k_{window + 1 + j}`.
    slopes: Vec<f64>,
    candidate: Option<usize>,
}

impl WindowTrack {
    fn first_epoch(&self) -> usize {
        self.window + 1
    }

    fn slope(&self, epoch: usize) -> f64 {
        self.slopes[epoch - self.first_epoch()]
    }
}

/// Online trigger state, advanced once per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ActMonitor {
    buffer: usize,
    tracks: Vec<WindowTrack>,
    observed: usize,
    decision: Option<ActDecision>,
}

impl ActMonitor {
    pub fn new(config: &ActConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            buffer: config.buffer(),
            tracks: config
                .windows
                .iter()
                .map(|&window| WindowTrack {
                    window,
                    slopes: Vec::new(),
                    candidate: None,
                })
                .collect(),
            observed: 0,
            decision: None,
        })
    }

    pub fn phase(&self) -> Phase {
        if self.decision.is_some() {
            Phase::Triggered
        } else {
            Phase::WarmUp
        }
    }

    pub fn decision(&self) -> Option<&ActDecision> {
        self.decision.as_ref()
    }

    /// Per-window confirmed candidates so far.
    pub fn candidates(&self) -> Vec<(usize, Option<usize>)> {
        self.tracks
            .iter()
            .map(|t| (t.window, t.candidate))
            .collect()
    }

    /// Slopes computed so far for `window`, as `(epoch, k)` pairs.
    pub fn slopes(&self, window: usize) -> Vec<(usize, f64)> {
        self.tracks
            .iter()
            .find(|t| t.window == window)
            .map(|t| {
                t.slopes
                    .iter()
                    .enumerate()
                    .map(|(j, &k)| (t.first_epoch() + j, k))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Process the newest epoch of `series`, which must have grown by exactly
    /// one value since the previous call. Returns the decision on the epoch
    /// the trigger fires; after that the monitor ignores further input.
    pub fn observe(&mut self, series: &AccuracySeries) -> Result<Option<&ActDecision>> {
        if self.decision.is_some() {
            return Ok(None);
        }
        let n = series.len();
        if n != self.observed + 1 {
            return Err(Error::Contract(format!(
                "ACT expects epoch {} next, series has {n} epochs",
                self.observed + 1
            )));
        }
        self.observed = n;
        let z = self.buffer;
        for track in &mut self.tracks {
            if n < track.first_epoch() {
                continue;
            }
            track.slopes.push(window_slope(series, n, track.window)?);
            if track.candidate.is_some() || n < track.first_epoch() + z {
                continue;
            }
            // j is the newest epoch whose look-ahead k_j..k_{j+z} is complete
            let j = n - z;
            let kj = track.slope(j);
            if (j + 1..=n).all(|e| kj <= track.slope(e)) {
                track.candidate = Some(j);
            }
        }
        if self.tracks.iter().all(|t| t.candidate.is_some()) {
            let it_per_window: Vec<(usize, usize)> = self
                .tracks
                .iter()
                .map(|t| (t.window, t.candidate.unwrap_or(0)))
                .collect();
            let it = aggregate_it(&it_per_window.iter().map(|p| p.1).collect::<Vec<_>>());
            let (ie, sigma, fit) = detect_early_end(series, it)?;
            let ir = (ie + it) / 2;
            self.decision = Some(ActDecision {
                it_per_window,
                it,
                ie,
                ir,
                sigma,
                fit,
                trigger_epoch: n,
            });
            return Ok(self.decision.as_ref());
        }
        Ok(None)
    }
}

/// `floor(mean(candidates))`.
pub fn aggregate_it(candidates: &[usize]) -> usize {
    assert!(!candidates.is_empty(), "no I_t candidates");
    candidates.iter().sum::<usize>() / candidates.len()
}

/// `sigma = (f_It - f_1) / I_t`.
pub fn adaptive_threshold(series: &AccuracySeries, it: usize) -> f64 {
    (series.at(it) - series.at(1)) / it as f64
}

/// Count epochs `1..=it` whose fitted gradient exceeds `sigma`, clamped to
/// at least 1.
pub fn count_early_epochs(gradient: impl Fn(f64) -> f64, sigma: f64, it: usize) -> usize {
    (1..=it)
        .filter(|&i| gradient(i as f64) - sigma > 0.0)
        .count()
        .max(1)
}

/// `(I_e, sigma, fit)` from the first `it` epochs of the curve.
pub fn detect_early_end(series: &AccuracySeries, it: usize) -> Result<(usize, f64, ExpFit)> {
    if it < 5 || it > series.len() {
        return Err(Error::InsufficientHistory(format!(
            "early-learning detection needs 5 <= I_t <= {}, got {it}",
            series.len()
        )));
    }
    let sigma = adaptive_threshold(series, it);
    let fit = fit_saturating_exp(series.prefix(it))?;
    let ie = count_early_epochs(|x| fit.gradient(x), sigma, it);
    Ok((ie, sigma, fit))
}

/// `(I_r, checkpoint)`: the midpoint of `[I_e, I_t]` and the multiple of
/// `stride` nearest to it, ties going to the earlier checkpoint.
pub fn resume_epoch(ie: usize, it: usize, stride: usize) -> (usize, usize) {
    let ir = (ie + it) / 2;
    let below = ir / stride * stride;
    let above = below + stride;
    let ckpt = if ir - below <= above - ir {
        below
    } else {
        above
    };
    (ir, ckpt)
}

/// Replay a stored curve epoch by epoch; `None` if it never triggers.
pub fn detect_offline(values: &[f64], config: &ActConfig) -> Result<Option<ActDecision>> {
    let mut monitor = ActMonitor::new(config)?;
    let mut series = AccuracySeries::default();
    for &v in values {
        series.push(v)?;
        if let Some(d) = monitor.observe(&series)? {
            return Ok(Some(d.clone()));
        }
    }
    Ok(None)
}
