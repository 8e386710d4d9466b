//! Train every arm on a small synthetic benchmark and print final and best
//! test IoU. Pass a config path to use it instead of the built-in one.
//!
//!     cargo run --release --example train_benchmark [config.json] [epochs]

use std::env;
use std::path::PathBuf;

use aio2::harness::{format_table, replay_seeds, Arm, Dataset, RunConfig};
use aio2::io::read_json;

fn main() -> aio2::Result<()> {
    let mut args = env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../bench/default.json"
        ))
    });
    let mut config: RunConfig = read_json(&path)?;
    if let Some(e) = args.next() {
        config.epochs = e
            .parse()
            .map_err(|_| aio2::Error::Config(format!("bad epoch count {e:?}")))?;
    }
    config.validate()?;
    let dataset = Dataset::load(&config.dataset)?;
    println!(
        "{} train / {} test patches, {} epochs",
        dataset.train.len(),
        dataset.test.len(),
        config.epochs
    );

    let mut rows = Vec::new();
    for arm in Arm::ALL {
        let summary = replay_seeds(
            &config.with_arm_seed(arm, config.seed),
            &dataset,
            &[config.seed],
            None,
        )?;
        if let Some(run) = summary.runs.first() {
            match run.triggered {
                Some(true) => println!("{arm}: trigger fired"),
                Some(false) => println!("{arm}: no trigger"),
                None => {}
            }
        }
        rows.push(summary);
    }
    print!("{}", format_table(&rows));
    Ok(())
}
