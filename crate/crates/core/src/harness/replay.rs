use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Arm, RunConfig};
use super::data::Dataset;
use super::run::{run_with, NoObserver};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRun {
    pub seed: u64,
    pub final_iou: Option<f64>,
    pub max_iou: Option<f64>,
    pub triggered: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub arm: Arm,
    pub runs: Vec<ReplayRun>,
    /// Over the successful runs; `None` if every run failed.
    pub final_iou: Option<MeanStd>,
    pub max_iou: Option<MeanStd>,
}

/// Run `n` replays with seeds `config.seed + 0 .. n`.
pub fn replay_suite(config: &RunConfig, n: usize, out: Option<&Path>) -> Result<ReplaySummary> {
    if n == 0 {
        return Err(Error::Config("at least one replay is required".into()));
    }
    config.validate()?;
    let dataset = Dataset::load(&config.dataset)?;
    let seeds: Vec<u64> = (0..n as u64).map(|i| config.seed + i).collect();
    replay_seeds(config, &dataset, &seeds, out)
}

/// Run one job per seed; a failing run is recorded and the others continue.
/// Each run writes to `out/seed_<seed>` when `out` is given.
pub fn replay_seeds(
    config: &RunConfig,
    dataset: &Dataset,
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<ReplaySummary> {
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let c = config.with_arm_seed(config.arm, seed);
        let dir = out.map(|o| o.join(format!("seed_{seed}")));
        runs.push(
            match run_with(&c, dataset, dir.as_deref(), &mut NoObserver) {
                Ok(o) => ReplayRun {
                    seed,
                    final_iou: Some(o.metrics.teacher.iou),
                    max_iou: Some(o.metrics.max_test_iou),
                    triggered: config.arm.uses_act().then_some(o.decision.is_some()),
                    error: None,
                },
                Err(e) => ReplayRun {
                    seed,
                    final_iou: None,
                    max_iou: None,
                    triggered: None,
                    error: Some(e.to_string()),
                },
            },
        );
    }
    let finals: Vec<f64> = runs.iter().filter_map(|r| r.final_iou).collect();
    let maxes: Vec<f64> = runs.iter().filter_map(|r| r.max_iou).collect();
    Ok(ReplaySummary {
        arm: config.arm,
        final_iou: MeanStd::of(&finals),
        max_iou: MeanStd::of(&maxes),
        runs,
    })
}

/// Text table with "Final" and "Maximum" test IoU columns, in percent.
pub fn format_table(summaries: &[ReplaySummary]) -> String {
    let cell = |m: Option<MeanStd>| match m {
        Some(m) => format!("{:.2}±{:.2}", 100.0 * m.mean, 100.0 * m.std),
        None => "failed".to_string(),
    };
    let mut s = format!("{:<12} {:>14} {:>14}\n", "Method", "Final", "Maximum");
    for r in summaries {
        s.push_str(&format!(
            "{:<12} {:>14} {:>14}\n",
            r.arm.name(),
            cell(r.final_iou),
            cell(r.max_iou)
        ));
    }
    s
}
