use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use aio2::act::{detect_offline, ActConfig};
use aio2::grid::{ObjectSet, Raster};
use aio2::harness::{self, format_table, Arm, DecisionReport, RunConfig};
use aio2::io::{
    patch_dir, read_all_ids, read_curve_csv, read_f32_raster, read_json, read_patch, read_pgm,
    read_split, write_f32_raster, write_json, write_patch, write_pgm, write_split, Split,
};
use aio2::learner::{foreground_prob, Checkpoint, Tensor};
use aio2::metrics::{diag_counts, tag_objects, Confusion, DiagCounts, MemorizationDiag, SegScores};
use aio2::o2c::{correct, O2cConfig};
use aio2::synthdata::{assess_quality, generate_patches, inject_noise, NoiseConfig, SceneConfig};
use aio2::{Error, Result};

#[derive(Parser)]
#[command(
    name = "aio2",
    version,
    about = "Segmentation training under incomplete label noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a clean synthetic dataset.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop objects from the labels of a dataset.
    Inject {
        #[arg(long)]
        alpha0: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare noisy labels with the ground truth.
    Assess {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        noisy: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Score predicted masks (`NNNN.pgm`) against a dataset.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Dataset whose noisy labels define marked and omitted objects.
        #[arg(long)]
        noisy: Option<PathBuf>,
        #[arg(long, requires = "noisy")]
        diag: bool,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Detect the trigger on a logged accuracy curve.
    ActDetect {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "10,20,30,40")]
        windows: Vec<usize>,
        #[arg(long)]
        buffer: Option<usize>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Build corrected targets from noisy labels and probability maps
    /// (`NNNN.f32`).
    Correct {
        #[arg(long)]
        noisy: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        threshold: f32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one arm.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        arm: Option<Arm>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run replays of several arms and print a Final/Maximum table.
    Replay {
        #[arg(long)]
        config: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "gt,noisy,aio2,pixelwise,bootstrap"
        )]
        arms: Vec<Arm>,
        #[arg(long)]
        replays: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write teacher (or student) probability maps and masks for a split.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        student: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

/// `synth` configuration: a scene plus split sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SynthConfig {
    #[serde(default)]
    scene: SceneConfig,
    n_train: usize,
    #[serde(default)]
    n_val: usize,
    #[serde(default)]
    n_test: usize,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    n_patches: usize,
    scores: SegScores,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<MemorizationDiag>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match harness::init_threads_from_env().and_then(|_| dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth { config, out } => synth(&config, &out),
        Command::Inject {
            alpha0,
            seed,
            input,
            out,
        } => inject(NoiseConfig { alpha0, seed }, &input, &out),
        Command::Assess { gt, noisy, json } => assess(&gt, &noisy, json.as_deref()),
        Command::Eval {
            pred,
            gt,
            noisy,
            diag,
            depth,
            json,
        } => eval(&pred, &gt, noisy.as_deref(), diag, depth, json.as_deref()),
        Command::ActDetect {
            curve,
            windows,
            buffer,
            json,
        } => act_detect(&curve, windows, buffer, json.as_deref()),
        Command::Correct {
            noisy,
            pred,
            k,
            threshold,
            out,
        } => correct_dir(&noisy, &pred, k, threshold, &out),
        Command::Train {
            config,
            arm,
            seed,
            out,
        } => train(&config, arm, seed, &out),
        Command::Replay {
            config,
            arms,
            replays,
            out,
        } => replay(&config, &arms, replays, &out),
        Command::Predict {
            checkpoint,
            data,
            split,
            student,
            out,
        } => predict(&checkpoint, &data, &split, student, &out),
    }
}

fn print_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    match path {
        Some(p) => write_json(p, value),
        None => Ok(()),
    }
}

fn synth(config: &Path, out: &Path) -> Result<()> {
    let c: SynthConfig = read_json(config)?;
    let total = c.n_train + c.n_val + c.n_test;
    let patches = generate_patches(&c.scene, 0, total)?;
    for (id, p) in patches.iter().enumerate() {
        write_patch(out, id, p)?;
    }
    let ids: Vec<usize> = (0..total).collect();
    write_split(out, Split::Train, &ids[..c.n_train])?;
    write_split(out, Split::Val, &ids[c.n_train..c.n_train + c.n_val])?;
    write_split(out, Split::Test, &ids[c.n_train + c.n_val..])?;
    eprintln!("wrote {total} patches to {}", out.display());
    Ok(())
}

fn inject(noise: NoiseConfig, input: &Path, out: &Path) -> Result<()> {
    noise.validate()?;
    for split in Split::ALL {
        let ids = read_split(input, split)?;
        for &id in &ids {
            let clean = read_patch(input, id)?;
            let per_patch = NoiseConfig {
                seed: aio2::synthdata::patch_seed(noise.seed, id),
                ..noise
            };
            write_patch(out, id, &inject_noise(&clean, &per_patch)?)?;
        }
        write_split(out, split, &ids)?;
    }
    Ok(())
}

fn assess(gt: &Path, noisy: &Path, json: Option<&Path>) -> Result<()> {
    let mut pairs = Vec::new();
    for id in read_all_ids(noisy)? {
        let g = read_pgm(&patch_dir(gt, id).join("gt.pgm"))?;
        let n = read_pgm(&patch_dir(noisy, id).join("noisy.pgm"))?;
        pairs.push((g, n));
    }
    let report = assess_quality(pairs.iter().map(|(g, n)| (g, n)))?;
    print_json(&report, json)
}

/// Ids of the `NNNN.<ext>` files in `dir`, ascending.
fn ids_with_extension(dir: &Path, ext: &str) -> Result<Vec<usize>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        if let Some(id) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse().ok())
        {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

fn eval(
    pred: &Path,
    gt: &Path,
    noisy: Option<&Path>,
    diag: bool,
    depth: usize,
    json: Option<&Path>,
) -> Result<()> {
    let ids = ids_with_extension(pred, "pgm")?;
    if ids.is_empty() {
        return Err(Error::Contract(format!(
            "no NNNN.pgm masks in {}",
            pred.display()
        )));
    }
    let mut confusion = Confusion::default();
    let mut counts = DiagCounts::default();
    for &id in &ids {
        let p = read_pgm(&pred.join(format!("{id:04}.pgm")))?;
        let g = read_pgm(&patch_dir(gt, id).join("gt.pgm"))?;
        if !p.same_shape(&g) {
            return Err(Error::shape(g.shape_string(), p.shape_string()));
        }
        confusion.accumulate(&p, &g);
        if let (true, Some(n)) = (diag, noisy) {
            let n = read_pgm(&patch_dir(n, id).join("noisy.pgm"))?;
            let tagged = tag_objects(&ObjectSet::from_mask(&g)?, &n)?;
            counts.merge(&diag_counts(&tagged, &p, &n, depth)?);
        }
    }
    let report = EvalReport {
        n_patches: ids.len(),
        scores: confusion.scores(),
        diagnostics: diag.then(|| counts.finish()),
    };
    print_json(&report, json)
}

fn act_detect(
    curve: &Path,
    windows: Vec<usize>,
    buffer: Option<usize>,
    json: Option<&Path>,
) -> Result<()> {
    let values = read_curve_csv(curve)?;
    let config = ActConfig {
        windows,
        buffer,
        ..ActConfig::default()
    };
    let report = match detect_offline(&values, &config)? {
        Some(d) => DecisionReport::from_decision(&d, None),
        None => DecisionReport::none(),
    };
    print_json(&report, json)
}

fn correct_dir(noisy: &Path, pred: &Path, k: usize, threshold: f32, out: &Path) -> Result<()> {
    let config = O2cConfig {
        filter_size: k,
        prediction_threshold: threshold,
        ..O2cConfig::default()
    };
    let ids = ids_with_extension(pred, "f32")?;
    for &id in &ids {
        let prob = read_f32_raster(&pred.join(format!("{id:04}.f32")))?;
        let n = read_pgm(&patch_dir(noisy, id).join("noisy.pgm"))?;
        let t = correct(&n, &prob, &config)?;
        write_f32_raster(&out.join(format!("{id:04}.f32")), &t.soft_mask)?;
        eprintln!("{id:04}: {} components added", t.added_components);
    }
    Ok(())
}

fn load_run_config(path: &Path, arm: Option<Arm>, seed: Option<u64>) -> Result<RunConfig> {
    let mut c: RunConfig = read_json(path)?;
    if let aio2::harness::DatasetSource::Path { path: p } = &mut c.dataset {
        if p.is_relative() {
            *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
        }
    }
    if let Some(a) = arm {
        c.arm = a;
    }
    if let Some(s) = seed {
        c.seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn train(config: &Path, arm: Option<Arm>, seed: Option<u64>, out: &Path) -> Result<()> {
    let c = load_run_config(config, arm, seed)?;
    let start = std::time::Instant::now();
    let outcome = harness::run(&c, Some(out))?;
    let m = &outcome.metrics;
    match &outcome.decision {
        Some(d) => eprintln!(
            "trigger at epoch {:?}: I_t={:?} I_e={:?} I_r={:?}, resumed from {:?}",
            d.trigger_epoch, d.it, d.ie, d.ir, d.resume_checkpoint
        ),
        None if c.arm.uses_act() => eprintln!("no trigger"),
        None => {}
    }
    eprintln!(
        "{}: final test IoU {:.4} (max {:.4} at epoch {}), {} epochs run in {:.1}s",
        c.arm,
        m.teacher.iou,
        m.max_test_iou,
        m.max_test_iou_epoch,
        m.epochs_run,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn replay(config: &Path, arms: &[Arm], replays: Option<usize>, out: &Path) -> Result<()> {
    let c = load_run_config(config, None, None)?;
    let n = replays.unwrap_or(c.replays);
    let dataset = harness::Dataset::load(&c.dataset)?;
    let seeds: Vec<u64> = (0..n as u64).map(|i| c.seed + i).collect();
    let mut summaries = Vec::new();
    for &arm in arms {
        let ca = c.with_arm_seed(arm, c.seed);
        ca.validate()?;
        let s = harness::replay_seeds(&ca, &dataset, &seeds, Some(&out.join(arm.name())))?;
        for r in s.runs.iter().filter(|r| r.error.is_some()) {
            eprintln!(
                "{arm} seed {}: {}",
                r.seed,
                r.error.as_deref().unwrap_or_default()
            );
        }
        summaries.push(s);
    }
    write_json(&out.join("summary.json"), &summaries)?;
    print!("{}", format_table(&summaries));
    Ok(())
}

fn predict(checkpoint: &Path, data: &Path, split: &str, student: bool, out: &Path) -> Result<()> {
    let split = match split {
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        other => return Err(Error::Config(format!("unknown split {other:?}"))),
    };
    let c = Checkpoint::load(checkpoint)?;
    let params = if student {
        &c.student
    } else {
        c.teacher.params()
    };
    for id in read_split(data, split)? {
        let patch = read_patch(data, id)?;
        let prob: Raster = foreground_prob(params, &Tensor::from_raster(&patch.image))?;
        write_f32_raster(&out.join(format!("{id:04}.f32")), &prob)?;
        write_pgm(&out.join(format!("{id:04}.pgm")), &prob.threshold(0.5))?;
    }
    Ok(())
}
