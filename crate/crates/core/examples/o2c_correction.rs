//! Build a corrected target from a noisy label and a prediction: predicted
//! objects overlapping a labelled one are ignored, new ones are added with
//! softened edges.
//!
//!     cargo run --example o2c_correction

use aio2::o2c::{correct, O2cConfig};
use aio2::Raster;

fn rects(w: usize, h: usize, list: &[(usize, usize, usize, usize)]) -> Raster {
    Raster::from_fn(w, h, |x, y| {
        list.iter()
            .any(|&(x0, y0, rw, rh)| x >= x0 && x < x0 + rw && y >= y0 && y < y0 + rh) as u8
            as f32
    })
}

fn show(name: &str, r: &Raster) {
    println!("{name}:");
    for y in 0..r.height() {
        let row: Vec<String> = (0..r.width())
            .map(|x| format!("{:.2}", r.get(x, y, 0)))
            .collect();
        println!("  {}", row.join(" ").replace("0.00", " .  "));
    }
}

fn main() -> aio2::Result<()> {
    // one labelled building, one omitted
    let noisy = rects(12, 8, &[(1, 1, 3, 3)]);
    // the model finds both, the labelled one slightly too large
    let mut prob = rects(12, 8, &[(1, 1, 4, 4), (7, 3, 3, 3)]);
    prob.values_mut()
        .iter_mut()
        .for_each(|v| *v = 0.1 + 0.8 * *v);

    let out = correct(
        &noisy,
        &prob,
        &O2cConfig {
            filter_size: 3,
            ..O2cConfig::default()
        },
    )?;
    show("noisy", &noisy);
    show("target", &out.soft_mask);
    println!("added components: {}", out.added_components);
    Ok(())
}
