//! Fit `f(x) = a (1 - exp(-b x^c))` to a noisy training curve and compare
//! the recovered parameters and slopes with the generating ones.
//!
//!     cargo run --example curve_fit

use aio2::curvefit::{fit_saturating_exp, linear_fit, saturating_exp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> aio2::Result<()> {
    let (a, b, c) = (0.82, 0.25, 0.6);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ys: Vec<f64> = (1..=60)
        .map(|x| saturating_exp(a, b, c, x as f64) + rng.gen_range(-0.005..0.005))
        .collect();

    let fit = fit_saturating_exp(&ys)?;
    println!("true   a={a:.4} b={b:.4} c={c:.4}");
    println!(
        "fitted a={:.4} b={:.4} c={:.4}  sse={:.2e}  restarts={}  ill_conditioned={}",
        fit.a, fit.b, fit.c, fit.sse, fit.restarts_used, fit.ill_conditioned
    );
    for x in [1.0, 5.0, 20.0, 60.0] {
        println!("  f'({x:>4}) = {:.5}", fit.gradient(x));
    }

    let tail = linear_fit(&ys[40..], 41.0);
    println!("OLS slope over epochs 41..60: {:.5}", tail.slope);
    Ok(())
}
