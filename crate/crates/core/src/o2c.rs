//! Online object-wise label correction.
//!
//! Builds the training target for one patch from its noisy label and the
//! model's foreground probability: predicted components that touch any
//! labelled object are dropped (the labelled object stays as is), the rest
//! are softened with a box filter and merged in. Nothing is cached between
//! calls.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{box_filter, connected_components, Raster};

/// Which model's prediction feeds pseudo labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoLabelSource {
    #[default]
    Teacher,
    Student,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct O2cConfig {
    /// Odd box-filter size applied to added candidates.
    pub filter_size: usize,
    pub prediction_threshold: f32,
    /// A predicted component is discarded when it shares at least one pixel
    /// with the noisy foreground and the shared fraction of its area is at
    /// least this value.
    pub min_overlap_fraction: f64,
    pub source: PseudoLabelSource,
}

impl Default for O2cConfig {
    fn default() -> Self {
        Self {
            filter_size: 5,
            prediction_threshold: 0.5,
            min_overlap_fraction: 0.0,
            source: PseudoLabelSource::Teacher,
        }
    }
}

impl O2cConfig {
    pub fn validate(&self) -> Result<()> {
        if self.filter_size == 0 || self.filter_size % 2 == 0 {
            return Err(Error::Config(format!(
                "O2C filter size must be odd, got {}",
                self.filter_size
            )));
        }
        if !(self.prediction_threshold > 0.0 && self.prediction_threshold < 1.0) {
            return Err(Error::Config(format!(
                "prediction threshold must lie in (0, 1), got {}",
                self.prediction_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.min_overlap_fraction) {
            return Err(Error::Config(
                "min_overlap_fraction must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedTarget {
    /// Per-pixel foreground target in [0, 1].
    pub soft_mask: Raster,
    pub added_components: usize,
}

pub fn correct(noisy: &Raster, prob: &Raster, config: &O2cConfig) -> Result<CorrectedTarget> {
    config.validate()?;
    noisy.ensure_binary("noisy mask")?;
    noisy.check_same_shape(prob)?;
    prob.ensure_soft("foreground probability")?;

    let pred = prob.threshold(config.prediction_threshold);
    let cc = connected_components(&pred)?;
    let noisy_v = noisy.values();

    let mut candidates = Raster::zeros(noisy.width(), noisy.height(), 1);
    let mut added = 0;
    for pixels in cc.pixel_lists() {
        let shared = pixels.iter().filter(|&&p| noisy_v[p] == 1.0).count();
        let overlaps =
            shared > 0 && shared as f64 >= config.min_overlap_fraction * pixels.len() as f64;
        if overlaps {
            continue;
        }
        added += 1;
        for p in pixels {
            candidates.values_mut()[p] = 1.0;
        }
    }

    let mut soft = if added == 0 {
        candidates
    } else {
        box_filter(&candidates, config.filter_size)?
    };
    for (s, &n) in soft.values_mut().iter_mut().zip(noisy_v) {
        *s = s.max(n);
    }
    Ok(CorrectedTarget {
        soft_mask: soft,
        added_components: added,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rects(w: usize, h: usize, list: &[(usize, usize, usize, usize)]) -> Raster {
        Raster::from_fn(w, h, |x, y| {
            list.iter()
                .any(|&(x0, y0, rw, rh)| x >= x0 && x < x0 + rw && y >= y0 && y < y0 + rh)
                as u8 as f32
        })
    }

    fn cfg(k: usize) -> O2cConfig {
        O2cConfig {
            filter_size: k,
            ..O2cConfig::default()
        }
    }

    #[test]
    fn prediction_equal_to_noisy_adds_nothing() {
        let noisy = rects(10, 10, &[(1, 1, 3, 3), (6, 6, 2, 2)]);
        let out = correct(&noisy, &noisy, &cfg(5)).unwrap();
        assert_eq!(out.soft_mask, noisy);
        assert_eq!(out.added_components, 0);
    }

    #[test]
    fn disjoint_block_is_added_softly() {
        let noisy = rects(12, 12, &[(0, 0, 2, 2)]);
        let pred = rects(12, 12, &[(0, 0, 2, 2), (6, 6, 2, 2)]);
        let out = correct(&noisy, &pred, &cfg(3)).unwrap();
        assert_eq!(out.added_components, 1);
        for (x, y) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            assert_eq!(out.soft_mask.get(x, y, 0), 1.0);
        }
        for (x, y) in [(6, 6), (7, 6), (6, 7), (7, 7)] {
            assert_eq!(out.soft_mask.get(x, y, 0), 4.0 / 9.0);
        }
        assert_eq!(out.soft_mask.get(5, 5, 0), 1.0 / 9.0);
        assert_eq!(out.soft_mask.get(10, 10, 0), 0.0);
    }

    #[test]
    fn one_shared_pixel_discards_the_component() {
        let noisy = rects(10, 10, &[(1, 1, 3, 3)]);
        // prediction extends the object and covers a new area touching it
        let pred = rects(10, 10, &[(3, 3, 5, 5)]);
        let out = correct(&noisy, &pred, &cfg(3)).unwrap();
        assert_eq!(out.soft_mask, noisy);
        assert_eq!(out.added_components, 0);
    }

    #[test]
    fn overlap_fraction_knob() {
        let noisy = rects(10, 10, &[(1, 1, 3, 3)]);
        let pred = rects(10, 10, &[(3, 3, 5, 5)]); // shares 1 of 25 pixels
        let loose = O2cConfig {
            filter_size: 1,
            min_overlap_fraction: 0.5,
            ..O2cConfig::default()
        };
        let out = correct(&noisy, &pred, &loose).unwrap();
        assert_eq!(out.added_components, 1);
        assert_eq!(out.soft_mask.foreground_count(), 9 + 24);
    }

    #[test]
    fn probability_is_thresholded() {
        let noisy = Raster::zeros(8, 8, 1);
        let mut prob = Raster::filled(8, 8, 1, 0.49);
        prob.set(4, 4, 0, 0.5);
        let out = correct(&noisy, &prob, &cfg(1)).unwrap();
        assert_eq!(out.added_components, 1);
        assert_eq!(out.soft_mask.foreground_count(), 1);
    }

    #[test]
    fn bad_inputs() {
        let noisy = Raster::zeros(4, 4, 1);
        assert!(matches!(
            correct(&noisy, &Raster::zeros(4, 5, 1), &cfg(3)),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            correct(&noisy, &noisy, &cfg(4)),
            Err(Error::Config(_))
        ));
        let bad_prob = Raster::filled(4, 4, 1, 1.5);
        assert!(correct(&noisy, &bad_prob, &cfg(3)).is_err());
    }
}
