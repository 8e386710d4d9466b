//! Combined cross-entropy + Dice loss over a batch, with soft targets.
//!
//! For a foreground target `y` the two-class target is `(1 - y, y)`.
//! `L_ce` is averaged over all pixels of the batch; `L_dice` sums over both
//! classes and all pixels of the batch.

use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{backward, forward_cached, Activations, Layout, Tensor};
use crate::error::{Error, Result};

pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub ce: f64,
    pub dice: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.ce + self.dice
    }
}

/// Which terms contribute to the loss and its gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossTerms {
    pub ce: bool,
    pub dice: bool,
}

impl LossTerms {
    pub const BOTH: LossTerms = LossTerms {
        ce: true,
        dice: true,
    };
}

/// One training example: image plus foreground target in [0, 1].
#[derive(Debug, Clone)]
pub struct Sample<'a, F> {
    pub image: &'a Tensor<F>,
    pub target: &'a [F],
}

/// Loss terms from probabilities and targets, `[2][H*W]` per sample.
pub fn loss_from_probs<F: Float>(probs: &[&[F]], targets: &[&[F]]) -> LossParts {
    let lo = F::from(PROB_CLAMP).unwrap();
    let hi = F::one() - lo;
    let (mut ce, mut inter, mut denom, mut n) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for (p, y) in probs.iter().zip(targets) {
        let hw = y.len();
        for i in 0..hw {
            let (pb, pf) = (p[i], p[hw + i]);
            let (yf, yb) = (y[i], F::one() - y[i]);
            ce -= (yb * pb.max(lo).min(hi).ln() + yf * pf.max(lo).min(hi).ln())
                .to_f64()
                .unwrap();
            inter += (yb * pb + yf * pf).to_f64().unwrap();
            denom += (yb + pb + yf + pf).to_f64().unwrap();
        }
        n += hw;
    }
    LossParts {
        ce: ce / n as f64,
        dice: 1.0 - 2.0 * inter / denom,
    }
}

/// Loss and full parameter gradient for a batch.
///
/// Per-sample work runs in parallel; per-sample gradients are summed in
/// batch order, so the result does not depend on the thread count.
pub fn loss_and_grad<F: Float + Send + Sync>(
    layout: &Layout,
    params: &[F],
    batch: &[Sample<'_, F>],
    terms: LossTerms,
) -> Result<(LossParts, Vec<F>)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    for s in batch {
        let hw = s.image.height * s.image.width;
        if s.target.len() != hw {
            return Err(Error::shape(format!("{hw} target values"), s.target.len()));
        }
        if s.target.iter().any(|&v| v < F::zero() || v > F::one()) {
            return Err(Error::Contract("target outside [0, 1]".into()));
        }
    }
    let acts: Vec<Activations<F>> = batch
        .par_iter()
        .map(|s| forward_cached(layout, params, s.image))
        .collect::<Result<_>>()?;

    let probs: Vec<&[F]> = acts.iter().map(|a| a.probs.as_slice()).collect();
    let targets: Vec<&[F]> = batch.iter().map(|s| s.target).collect();
    let parts = loss_from_probs(&probs, &targets);

    // global dice statistics
    let n_pix: usize = batch.iter().map(|s| s.target.len()).sum();
    let (mut inter, mut denom) = (F::zero(), F::zero());
    for (p, y) in probs.iter().zip(&targets) {
        let hw = y.len();
        for i in 0..hw {
            let (yf, yb) = (y[i], F::one() - y[i]);
            inter = inter + yb * p[i] + yf * p[hw + i];
            denom = denom + yb + p[i] + yf + p[hw + i];
        }
    }
    let two = F::from(2.0).unwrap();
    let inv_n = F::one() / F::from(n_pix).unwrap();
    let lo = F::from(PROB_CLAMP).unwrap();
    let hi = F::one() - lo;
    let dice_shift = two * inter / (denom * denom);
    let dice_scale = two / denom;

    let grads: Vec<Vec<F>> = acts
        .par_iter()
        .zip(batch.par_iter())
        .map(|(act, s)| {
            let hw = s.target.len();
            let mut gz = vec![F::zero(); 2 * hw];
            for i in 0..hw {
                let p = [act.probs[i], act.probs[hw + i]];
                let y = [F::one() - s.target[i], s.target[i]];
                let mut gp = [F::zero(); 2];
                for j in 0..2 {
                    if terms.ce && p[j] > lo && p[j] < hi {
                        gp[j] = gp[j] - inv_n * y[j] / p[j];
                    }
                    if terms.dice {
                        gp[j] = gp[j] - dice_scale * y[j] + dice_shift;
                    }
                }
                let dot = gp[0] * p[0] + gp[1] * p[1];
                gz[i] = p[0] * (gp[0] - dot);
                gz[hw + i] = p[1] * (gp[1] - dot);
            }
            let mut g = vec![F::zero(); params.len()];
            backward(layout, params, act, gz, &mut g);
            g
        })
        .collect();

    let mut total = vec![F::zero(); params.len()];
    for g in &grads {
        for (t, &v) in total.iter_mut().zip(g) {
            *t = *t + v;
        }
    }
    let parts = LossParts {
        ce: if terms.ce { parts.ce } else { 0.0 },
        dice: if terms.dice { parts.dice } else { 0.0 },
    };
    Ok((parts, total))
}
