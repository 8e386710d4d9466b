use serde::{Deserialize, Serialize};

use super::config::Arm;
use crate::act::ActDecision;
use crate::metrics::{MemorizationDiag, SegScores};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub sse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowCandidate {
    pub window: usize,
    #[serde(rename = "I_t")]
    pub it: usize,
}

/// JSON form of an ACT decision, shared by `act-detect` and training runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionReport {
    pub triggered: bool,
    #[serde(rename = "I_t_per_window", default)]
    pub it_per_window: Vec<WindowCandidate>,
    #[serde(rename = "I_t", default)]
    pub it: Option<usize>,
    #[serde(rename = "I_e", default)]
    pub ie: Option<usize>,
    #[serde(rename = "I_r", default)]
    pub ir: Option<usize>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub fit: Option<FitReport>,
    /// Epoch at which the trigger fired.
    #[serde(default)]
    pub trigger_epoch: Option<usize>,
    /// Checkpoint epoch training resumed from.
    #[serde(default)]
    pub resume_checkpoint: Option<usize>,
}

impl DecisionReport {
    pub fn none() -> Self {
        Self {
            triggered: false,
            it_per_window: Vec::new(),
            it: None,
            ie: None,
            ir: None,
            sigma: None,
            fit: None,
            trigger_epoch: None,
            resume_checkpoint: None,
        }
    }

    pub fn from_decision(d: &ActDecision, resume_checkpoint: Option<usize>) -> Self {
        Self {
            triggered: true,
            it_per_window: d
                .it_per_window
                .iter()
                .map(|&(window, it)| WindowCandidate { window, it })
                .collect(),
            it: Some(d.it),
            ie: Some(d.ie),
            ir: Some(d.ir),
            sigma: Some(d.sigma),
            fit: Some(FitReport {
                a: d.fit.a,
                b: d.fit.b,
                c: d.fit.c,
                sse: d.fit.sse,
            }),
            trigger_epoch: Some(d.trigger_epoch),
            resume_checkpoint,
        }
    }

    /// The fields `act-detect` can reproduce from a curve alone.
    pub fn detection_part(&self) -> DecisionReport {
        DecisionReport {
            resume_checkpoint: None,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseFlag {
    Warmup,
    Corrected,
}

impl PhaseFlag {
    pub fn name(self) -> &'static str {
        match self {
            PhaseFlag::Warmup => "warmup",
            PhaseFlag::Corrected => "corrected",
        }
    }
}

/// One row of `curve.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Row counter over all epochs run, including re-run ones.
    pub step: usize,
    pub epoch: usize,
    pub phase: PhaseFlag,
    /// Teacher IoU on the training set against the noisy labels.
    pub acc: f64,
    /// Teacher IoU on the training set against the ground truth.
    pub train_iou_gt: f64,
    pub loss: f64,
    /// Teacher test scores, on evaluation epochs.
    pub test: Option<SegScores>,
    pub student_test: Option<SegScores>,
    pub diag: Option<MemorizationDiag>,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str = "step,epoch,phase,acc,train_iou_gt,loss,test_iou,test_oa,test_precision,test_recall,test_f1,student_test_iou";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let t = self.test;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.epoch,
            self.phase.name(),
            self.acc,
            self.train_iou_gt,
            self.loss,
            opt(t.map(|s| s.iou)),
            opt(t.map(|s| s.oa)),
            opt(t.and_then(|s| s.precision)),
            opt(t.and_then(|s| s.recall)),
            opt(t.and_then(|s| s.f1)),
            opt(self.student_test.map(|s| s.iou)),
        )
    }

    pub fn diag_header() -> String {
        let mut h = String::from("step,epoch");
        for c in MemorizationDiag::CSV_COLUMNS {
            h.push(',');
            h.push_str(c);
        }
        h
    }

    pub fn diag_row(&self) -> Option<String> {
        let d = self.diag?;
        let mut row = format!("{},{}", self.step, self.epoch);
        for v in d.csv_fields() {
            row.push(',');
            if let Some(v) = v {
                row.push_str(&v.to_string());
            }
        }
        Some(row)
    }
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub arm: Arm,
    pub seed: u64,
    pub final_epoch: usize,
    /// Total epochs run, counting those re-run after a resume.
    pub epochs_run: usize,
    /// Teacher test scores at the last epoch.
    pub teacher: SegScores,
    pub student: SegScores,
    pub max_test_iou: f64,
    pub max_test_iou_epoch: usize,
    pub decision: Option<DecisionReport>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvefit::ExpFit;

    #[test]
    fn decision_json_round_trips_exactly() {
        // values whose shortest decimal form is misread by a fast float parser
        let d = ActDecision {
            it_per_window: vec![(10, 11), (20, 108)],
            it: 80,
            ie: 34,
            ir: 57,
            sigma: 0.006448404016827671,
            fit: ExpFit {
                a: 0.608332342348203,
                b: 0.03393380793312823,
                c: 0.9999999999999065,
                sse: 0.5508173013865378,
                restarts_used: 3,
                ill_conditioned: true,
            },
            trigger_epoch: 140,
        };
        let report = DecisionReport::from_decision(&d, Some(55));
        let back: DecisionReport =
            serde_json::from_str(&serde_json::to_string_pretty(&report).unwrap()).unwrap();
        assert_eq!(back, report);
        let mut x = 0x9e37_79b9_7f4a_7c15u64;
        for _ in 0..10_000 {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            let v = (x >> 11) as f64 / (1u64 << 53) as f64;
            let back: f64 = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
            assert_eq!(back.to_bits(), v.to_bits());
        }
    }
}
