use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Arm, RunConfig};
use super::data::{predict_all, Dataset, PatchData};
use super::report::{DecisionReport, EpochRecord, PhaseFlag, RunMetrics};
use crate::act::{resume_epoch, ActMonitor};
use crate::curvefit::AccuracySeries;
use crate::error::{Error, Result};
use crate::grid::Raster;
use crate::io::write_json;
use crate::learner::{
    adam_step, bootstrap_targets, foreground_prob, loss_and_grad, pixelwise_correct, AdamState,
    Checkpoint, LossTerms, MeanTeacher, ModelConfig, ParamVector, Sample,
};
use crate::metrics::{diag_counts, Confusion, DiagCounts, SegScores};
use crate::o2c::{correct, CorrectedTarget, PseudoLabelSource};

/// Hooks into a running training loop, used for instrumentation.
pub trait RunObserver {
    fn on_epoch_end(&mut self, _record: &EpochRecord, _state: &TrainState) {}
    fn on_act_observe(&mut self, _epoch: usize) {}
    /// A corrected target built for `patch_id` at optimizer step `step`.
    fn on_o2c(&mut self, _patch_id: usize, _step: u64, _target: &CorrectedTarget) {}
    /// Called right after the state was restored from `checkpoint`.
    fn on_resume(&mut self, _checkpoint: &Checkpoint, _state: &TrainState) {}
}

pub struct NoObserver;

impl RunObserver for NoObserver {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Last completed epoch.
    pub epoch: usize,
    /// Optimizer steps taken; also the EMA iteration count.
    pub step: u64,
    pub student: ParamVector,
    pub teacher: MeanTeacher,
    pub adam: AdamState,
}

impl TrainState {
    fn init(model: &ModelConfig) -> Self {
        let student = model.init_params();
        let teacher = MeanTeacher::new(&student);
        let adam = AdamState::new(student.data.len());
        Self {
            epoch: 0,
            step: 0,
            student,
            teacher,
            adam,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            epoch: self.epoch,
            step: self.step,
            student: self.student.clone(),
            teacher: self.teacher.clone(),
            adam: self.adam.clone(),
        }
    }

    fn restore(&mut self, c: &Checkpoint) {
        self.epoch = c.epoch;
        self.step = c.step;
        self.student = c.student.clone();
        self.teacher = c.teacher.clone();
        self.adam = c.adam.clone();
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<EpochRecord>,
    pub decision: Option<DecisionReport>,
    pub metrics: RunMetrics,
    pub final_checkpoint: Checkpoint,
}

struct Logs {
    dir: PathBuf,
    curve: BufWriter<File>,
    diag: Option<BufWriter<File>>,
}

impl Logs {
    fn open(dir: &Path, diagnostics: bool) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |name: &str, header: &str| -> Result<BufWriter<File>> {
            let path = dir.join(name);
            let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
            writeln!(w, "{header}").map_err(|e| Error::io(&path, e))?;
            Ok(w)
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            curve: create("curve.csv", EpochRecord::CSV_HEADER)?,
            diag: if diagnostics {
                Some(create("diag.csv", &EpochRecord::diag_header())?)
            } else {
                None
            },
        })
    }

    fn append(&mut self, r: &EpochRecord) -> Result<()> {
        let path = self.dir.join("curve.csv");
        writeln!(self.curve, "{}", r.csv_row()).map_err(|e| Error::io(&path, e))?;
        self.curve.flush().map_err(|e| Error::io(&path, e))?;
        if let (Some(w), Some(row)) = (self.diag.as_mut(), r.diag_row()) {
            let path = self.dir.join("diag.csv");
            writeln!(w, "{row}").map_err(|e| Error::io(&path, e))?;
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    fn checkpoint_path(&self, epoch: usize) -> PathBuf {
        self.dir.join("ckpt").join(format!("epoch_{epoch}.bin"))
    }
}

/// Load the configured dataset and run one training job.
pub fn run(config: &RunConfig, out: Option<&Path>) -> Result<RunOutcome> {
    config.validate()?;
    let dataset = Dataset::load(&config.dataset)?;
    run_with(config, &dataset, out, &mut NoObserver)
}

/// Train on an already loaded dataset.
///
/// Targets per batch: ground truth (`gt`), noisy labels (`noisy`),
/// bootstrapped labels (`bootstrap`), or, for `aio2` and `pixelwise`, the
/// noisy labels until the trigger fires and corrected targets built from
/// the current teacher afterwards. On trigger the run restores the
/// checkpoint nearest `I_r` and continues from that epoch.
pub fn run_with(
    config: &RunConfig,
    dataset: &Dataset,
    out: Option<&Path>,
    observer: &mut dyn RunObserver,
) -> Result<RunOutcome> {
    config.validate()?;
    if config.model.input_channels != dataset.channels() {
        return Err(Error::shape(
            format!("{} input channels", config.model.input_channels),
            format!("{} image channels", dataset.channels()),
        ));
    }
    let model = ModelConfig {
        init_seed: config.seed,
        ..config.model.clone()
    };
    let mut state = TrainState::init(&model);
    let mut logs = out.map(|d| Logs::open(d, config.diagnostics)).transpose()?;
    let save_files = config.write_checkpoints && logs.is_some();

    let mut monitor = if config.arm.uses_act() {
        Some(ActMonitor::new(config.act()?)?)
    } else {
        None
    };
    let stride = config.act.as_ref().map_or(1, |a| a.checkpoint_stride);
    let mut series = AccuracySeries::default();
    let mut checkpoints: BTreeMap<usize, Checkpoint> = BTreeMap::new();
    if monitor.is_some() {
        keep_checkpoint(
            &state,
            &mut checkpoints,
            logs.as_ref().filter(|_| save_files),
        )?;
    }

    let mut phase = PhaseFlag::Warmup;
    let mut decision: Option<DecisionReport> = None;
    let mut records: Vec<EpochRecord> = Vec::new();
    let mut visits = 0u64;

    while state.epoch < config.epochs {
        state.epoch += 1;
        visits += 1;
        let loss = train_epoch(config, dataset, &mut state, phase, visits, observer)?;

        let record = evaluate_epoch(config, dataset, &state, phase, records.len(), loss)?;
        if let Some(l) = logs.as_mut() {
            l.append(&record)?;
        }
        observer.on_epoch_end(&record, &state);
        let acc = record.acc;
        records.push(record);

        let Some(m) = monitor.as_mut() else { continue };
        if phase != PhaseFlag::Warmup {
            continue;
        }
        series.push(acc)?;
        observer.on_act_observe(state.epoch);
        if state.epoch % stride == 0 {
            keep_checkpoint(
                &state,
                &mut checkpoints,
                logs.as_ref().filter(|_| save_files),
            )?;
        }
        let Some(d) = m.observe(&series)?.cloned() else {
            continue;
        };
        let (_, ck) = resume_epoch(d.ie, d.it, stride);
        let c = checkpoints
            .remove(&ck)
            .ok_or_else(|| Error::Contract(format!("no checkpoint kept for epoch {ck}")))?;
        state.restore(&c);
        phase = PhaseFlag::Corrected;
        if let Some(l) = &logs {
            for e in checkpoints.keys().copied().chain([ck]) {
                let path = l.checkpoint_path(e);
                if path.exists() {
                    fs::remove_file(&path).map_err(|err| Error::io(&path, err))?;
                }
            }
        }
        checkpoints.clear();
        let report = DecisionReport::from_decision(&d, Some(ck));
        if let Some(l) = &logs {
            write_json(&l.dir.join("decision.json"), &report)?;
        }
        decision = Some(report);
        observer.on_resume(&c, &state);
    }

    let last = records
        .last()
        .ok_or_else(|| Error::Contract("run produced no epochs".into()))?;
    let (teacher, student) = match (last.test, last.student_test) {
        (Some(t), Some(s)) => (t, s),
        _ => return Err(Error::Contract("dataset has no test patches".into())),
    };
    let (max_test_iou, max_test_iou_epoch) = records
        .iter()
        .filter_map(|r| r.test.map(|t| (t.iou, r.epoch)))
        .fold((f64::NEG_INFINITY, 0), |best, cur| {
            if cur.0 > best.0 {
                cur
            } else {
                best
            }
        });
    let metrics = RunMetrics {
        arm: config.arm,
        seed: config.seed,
        final_epoch: state.epoch,
        epochs_run: records.len(),
        teacher,
        student,
        max_test_iou,
        max_test_iou_epoch,
        decision: decision.clone(),
    };
    let final_checkpoint = state.checkpoint();
    if let Some(l) = &logs {
        if config.arm.uses_act() && decision.is_none() {
            write_json(&l.dir.join("decision.json"), &DecisionReport::none())?;
        }
        write_json(&l.dir.join("metrics.json"), &metrics)?;
        if config.write_checkpoints {
            final_checkpoint.save(&l.checkpoint_path(state.epoch))?;
        }
    }
    Ok(RunOutcome {
        records,
        decision,
        metrics,
        final_checkpoint,
    })
}

fn keep_checkpoint(
    state: &TrainState,
    checkpoints: &mut BTreeMap<usize, Checkpoint>,
    logs: Option<&Logs>,
) -> Result<()> {
    let c = state.checkpoint();
    if let Some(l) = logs {
        c.save(&l.checkpoint_path(state.epoch))?;
    }
    checkpoints.insert(state.epoch, c);
    Ok(())
}

fn train_epoch(
    config: &RunConfig,
    dataset: &Dataset,
    state: &mut TrainState,
    phase: PhaseFlag,
    visit: u64,
    observer: &mut dyn RunObserver,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(visit);
    order.shuffle(&mut rng);

    let layout = state.student.layout.clone();
    let mut loss_sum = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(config.trainer.batch_size) {
        let patches: Vec<&PatchData> = chunk.iter().map(|&i| &dataset.train[i]).collect();
        let targets = batch_targets(config, state, phase, &patches, observer)?;
        let samples: Vec<Sample<'_, f32>> = patches
            .iter()
            .zip(&targets)
            .map(|(p, t)| Sample {
                image: &p.image,
                target: t.as_slice(),
            })
            .collect();
        let (parts, grad) = loss_and_grad(&layout, &state.student.data, &samples, LossTerms::BOTH)?;
        adam_step(
            &mut state.student,
            &grad,
            &mut state.adam,
            &config.trainer.adam,
        )?;
        state.step += 1;
        state
            .teacher
            .update(&state.student, config.trainer.ema_alpha, state.step)?;
        loss_sum += parts.total();
        batches += 1;
    }
    Ok(loss_sum / batches as f64)
}

fn probs_of(params: &ParamVector, patches: &[&PatchData]) -> Result<Vec<Raster>> {
    patches
        .par_iter()
        .map(|p| foreground_prob(params, &p.image))
        .collect()
}

fn batch_targets(
    config: &RunConfig,
    state: &TrainState,
    phase: PhaseFlag,
    patches: &[&PatchData],
    observer: &mut dyn RunObserver,
) -> Result<Vec<Vec<f32>>> {
    let noisy = || patches.iter().map(|p| p.noisy.values().to_vec()).collect();
    let corrected = phase == PhaseFlag::Corrected;
    match config.arm {
        Arm::Gt => Ok(patches.iter().map(|p| p.gt.values().to_vec()).collect()),
        Arm::Noisy => Ok(noisy()),
        Arm::Aio2 if corrected => {
            let o2c = config.o2c()?;
            let source = match o2c.source {
                PseudoLabelSource::Teacher => state.teacher.params(),
                PseudoLabelSource::Student => &state.student,
            };
            let probs = probs_of(source, patches)?;
            let mut out = Vec::with_capacity(patches.len());
            for (p, prob) in patches.iter().zip(&probs) {
                let t = correct(&p.noisy, prob, o2c)?;
                observer.on_o2c(p.id, state.step, &t);
                out.push(t.soft_mask.into_values());
            }
            Ok(out)
        }
        Arm::Pixelwise if corrected => {
            let k = config.baseline()?.pixelwise_k;
            let probs = probs_of(state.teacher.params(), patches)?;
            patches
                .iter()
                .zip(&probs)
                .map(|(p, prob)| Ok(pixelwise_correct(&p.noisy, prob, k)?.into_values()))
                .collect()
        }
        Arm::Bootstrap => {
            let beta = config.baseline()?.bootstrap_beta(state.epoch - 1);
            let probs = probs_of(&state.student, patches)?;
            patches
                .iter()
                .zip(&probs)
                .map(|(p, prob)| Ok(bootstrap_targets(&p.noisy, prob, beta)?.into_values()))
                .collect()
        }
        Arm::Aio2 | Arm::Pixelwise => Ok(noisy()),
    }
}

fn test_scores(params: &ParamVector, dataset: &Dataset) -> Result<SegScores> {
    let mut c = Confusion::default();
    for (p, prob) in dataset.test.iter().zip(predict_all(params, &dataset.test)?) {
        c.accumulate(&prob, &p.gt);
    }
    Ok(c.scores())
}

fn evaluate_epoch(
    config: &RunConfig,
    dataset: &Dataset,
    state: &TrainState,
    phase: PhaseFlag,
    step: usize,
    loss: f64,
) -> Result<EpochRecord> {
    let source = match config.act_source {
        PseudoLabelSource::Teacher => state.teacher.params(),
        PseudoLabelSource::Student => &state.student,
    };
    let probs = predict_all(source, &dataset.train)?;
    let (mut vs_noisy, mut vs_gt) = (Confusion::default(), Confusion::default());
    let mut diag = DiagCounts::default();
    for (p, prob) in dataset.train.iter().zip(&probs) {
        vs_noisy.accumulate(prob, &p.noisy);
        vs_gt.accumulate(prob, &p.gt);
        if config.diagnostics {
            let pred = prob.threshold(0.5);
            diag.merge(&diag_counts(&p.tagged, &pred, &p.noisy, config.diag_depth)?);
        }
    }
    let evaluate = state.epoch % config.eval_every == 0 || state.epoch == config.epochs;
    let (test, student_test) = if evaluate && !dataset.test.is_empty() {
        (
            Some(test_scores(state.teacher.params(), dataset)?),
            Some(test_scores(&state.student, dataset)?),
        )
    } else {
        (None, None)
    };
    Ok(EpochRecord {
        step,
        epoch: state.epoch,
        phase,
        acc: vs_noisy.iou(),
        train_iou_gt: vs_gt.iou(),
        loss,
        test,
        student_test,
        diag: config.diagnostics.then(|| diag.finish()),
    })
}
