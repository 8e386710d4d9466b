//! Score a prediction against the ground truth and measure which omitted
//! objects and pixel groups it recovers.
//!
//!     cargo run --example memorization_diag

use aio2::grid::ObjectSet;
use aio2::metrics::{pixel_group_oas, seg_scores, tag_objects, MemorizationDiag};
use aio2::synthdata::{generate_scene, inject_noise, NoiseConfig, SceneConfig};

fn print(name: &str, d: &MemorizationDiag) {
    print!("{name:<16}");
    for (c, v) in MemorizationDiag::CSV_COLUMNS.iter().zip(d.csv_fields()) {
        match v {
            Some(v) => print!(" {c}={v:.2}"),
            None => print!(" {c}=-"),
        }
    }
    println!();
}

fn main() -> aio2::Result<()> {
    let clean = generate_scene(&SceneConfig {
        seed: 11,
        ..SceneConfig::default()
    })?;
    let patch = inject_noise(
        &clean,
        &NoiseConfig {
            alpha0: 0.5,
            seed: 3,
        },
    )?;
    let (gt, noisy) = (&patch.gt_mask, &patch.noisy_mask);
    let tagged = tag_objects(&ObjectSet::from_mask(gt)?, noisy)?;
    println!(
        "{} objects, {} omitted from the labels",
        tagged.len(),
        tagged.count_tag(aio2::grid::ObjectTag::Omitted)
    );

    // a model that fits the noisy labels exactly, and one that recovers everything
    for (name, pred) in [("memorized", noisy), ("clean", gt)] {
        let s = seg_scores(pred, gt)?;
        println!("{name:<16} IoU={:.3} OA={:.3}", s.iou, s.oa);
        print(name, &pixel_group_oas(&tagged, pred, gt, noisy, 2)?);
    }
    Ok(())
}
