//! Feed a three-stage training curve (fast early learning, a plateau, then
//! memorization) to the online trigger and print the decision.
//!
//!     cargo run --example act_trigger

use aio2::act::{detect_offline, resume_epoch, ActConfig};

fn curve(epochs: usize) -> Vec<f64> {
    (1..=epochs)
        .map(|i| {
            let x = i as f64;
            let early = 0.55 * (1.0 - (-0.12 * x).exp());
            let memorize = 0.35 / (1.0 + (-(x - 110.0) / 12.0).exp());
            early + memorize
        })
        .collect()
}

fn main() -> aio2::Result<()> {
    let config = ActConfig::default();
    let values = curve(250);
    let Some(d) = detect_offline(&values, &config)? else {
        println!("no trigger within {} epochs", values.len());
        return Ok(());
    };
    println!("look-ahead buffer z = {}", config.buffer());
    for (w, it) in &d.it_per_window {
        println!("  window {w:>2}: slope minimum at epoch {it}");
    }
    println!(
        "I_t = {}  (trigger fired at epoch {})",
        d.it, d.trigger_epoch
    );
    println!("sigma = {:.5}", d.sigma);
    println!("fit a={:.3} b={:.3} c={:.3}", d.fit.a, d.fit.b, d.fit.c);
    println!("I_e = {}", d.ie);
    let (ir, ck) = resume_epoch(d.ie, d.it, config.checkpoint_stride);
    println!("I_r = {ir}, resume from checkpoint at epoch {ck}");
    Ok(())
}
