//! End-to-end training runs: warm-up on noisy labels, trigger detection,
//! checkpoint resume and corrected continuation, plus the comparison arms,
//! replays and logging.

mod config;
mod data;
mod replay;
mod report;
mod run;

pub use config::{Arm, DatasetSource, RunConfig, TrainerConfig};
pub use data::{predict_all, Dataset, PatchData};
pub use replay::{format_table, replay_seeds, replay_suite, MeanStd, ReplayRun, ReplaySummary};
pub use report::{DecisionReport, EpochRecord, FitReport, PhaseFlag, RunMetrics, WindowCandidate};
pub use run::{run, run_with, NoObserver, RunObserver, RunOutcome, TrainState};

use crate::error::{Error, Result};

/// Size rayon's global pool from `AIO2_THREADS`, if set. Call once, before
/// any parallel work.
pub fn init_threads_from_env() -> Result<()> {
    let Ok(v) = std::env::var("AIO2_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| {
        Error::Config(format!(
            "AIO2_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    if n == 0 {
        return Err(Error::Config("AIO2_THREADS must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))
}
