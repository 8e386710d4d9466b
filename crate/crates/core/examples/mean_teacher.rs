//! Train a student on a few patches and track the EMA teacher alongside:
//! the teacher lags, then smooths the student's trajectory.
//!
//!     cargo run --release --example mean_teacher

use aio2::learner::{
    adam_step, foreground_prob, loss_and_grad, AdamConfig, AdamState, LossTerms, MeanTeacher,
    ModelConfig, ParamVector, Sample, Tensor,
};
use aio2::metrics::Confusion;
use aio2::synthdata::{generate_patches, SceneConfig, Span};

fn main() -> aio2::Result<()> {
    let scene = SceneConfig {
        patch_size: 32,
        n_objects: Span::new(2, 5),
        object_size: Span::new(5, 12),
        coord_channels: false,
        seed: 5,
        ..SceneConfig::default()
    };
    let patches = generate_patches(&scene, 0, 8)?;
    let images: Vec<Tensor<f32>> = patches
        .iter()
        .map(|p| Tensor::from_raster(&p.image))
        .collect();

    let model = ModelConfig {
        input_channels: scene.image_channels(),
        width_multiplier: 0.5,
        ..ModelConfig::default()
    };
    let mut student = model.init_params();
    let mut teacher = MeanTeacher::new(&student);
    let mut adam = AdamState::new(student.data.len());
    let adam_cfg = AdamConfig {
        lr: 5e-3,
        ..AdamConfig::default()
    };

    let iou = |params: &ParamVector| -> aio2::Result<f64> {
        let mut c = Confusion::default();
        for (img, p) in images.iter().zip(&patches) {
            c.accumulate(&foreground_prob(params, img)?.threshold(0.5), &p.gt_mask);
        }
        Ok(c.iou())
    };

    println!(
        "{:>5} {:>8} {:>12} {:>12}",
        "step", "loss", "student IoU", "teacher IoU"
    );
    for step in 1..=300u64 {
        let batch: Vec<Sample<'_, f32>> = images
            .iter()
            .zip(&patches)
            .map(|(image, p)| Sample {
                image,
                target: p.gt_mask.values(),
            })
            .collect();
        let (loss, grad) = loss_and_grad(&student.layout, &student.data, &batch, LossTerms::BOTH)?;
        adam_step(&mut student, &grad, &mut adam, &adam_cfg)?;
        teacher.update(&student, 0.99, step)?;
        if step % 50 == 0 {
            println!(
                "{step:>5} {:>8.4} {:>12.4} {:>12.4}",
                loss.total(),
                iou(&student)?,
                iou(teacher.params())?
            );
        }
    }
    Ok(())
}
