//! Generate synthetic scenes, drop whole objects from their labels and
//! measure how the realized omission rate tracks `alpha0`.
//!
//!     cargo run --release --example noise_injection

use aio2::synthdata::{assess_patches, generate_patches, inject_patches, NoiseConfig, SceneConfig};

fn main() -> aio2::Result<()> {
    let scene = SceneConfig {
        seed: 7,
        ..SceneConfig::default()
    };
    let clean = generate_patches(&scene, 0, 200)?;
    let p = &clean[0];
    println!(
        "patch 0: {}x{}, {} image channels, {} objects",
        p.image.width(),
        p.image.height(),
        p.image.channels(),
        p.meta.n_objects
    );

    println!(
        "{:>6} {:>10} {:>8} {:>8} {:>10}",
        "alpha0", "omission", "IoU", "OA", "precision"
    );
    for alpha0 in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let noise = NoiseConfig { alpha0, seed: 42 };
        let noisy = inject_patches(&clean, &noise, 0)?;
        let q = assess_patches(&noisy)?;
        println!(
            "{:>6.1} {:>10.3} {:>8.3} {:>8.3} {:>10.3}",
            alpha0,
            q.omission_rate,
            q.iou,
            q.oa,
            q.precision.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
