//! Synthetic building-like scenes, incomplete-label noise injection and
//! label-quality assessment.
//!
//! Objects are axis-aligned rectangles or L-shapes on a textured background.
//! Each object gets its own feature offset so that a small model can tell
//! instances apart; without that, instance-level memorization is not
//! observable at this scale.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{connected_components, Raster};
use crate::metrics::Confusion;

const PLACEMENT_RETRIES: usize = 200;

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub min: usize,
    pub max: usize,
}

impl Span {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        rng.gen_range(self.min..=self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Rectangle,
    LShape,
    /// Each object is a rectangle or an L-shape with equal probability.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub patch_size: usize,
    pub n_objects: Span,
    pub object_kind: ObjectKind,
    /// Side length range of an object's bounding box.
    pub object_size: Span,
    /// Number of appearance channels (coordinate channels come on top).
    pub feature_channels: usize,
    pub background_level: f32,
    pub object_level: f32,
    /// Std-dev of the per-object feature offset, per channel.
    pub per_object_color_jitter: f32,
    /// Std-dev of the per-pixel texture noise.
    pub background_texture_noise: f32,
    pub coord_channels: bool,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            patch_size: 64,
            n_objects: Span::new(4, 10),
            object_kind: ObjectKind::Mixed,
            object_size: Span::new(5, 14),
            feature_channels: 3,
            background_level: 0.3,
            object_level: 0.7,
            per_object_color_jitter: 0.15,
            background_texture_noise: 0.05,
            coord_channels: true,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_objects.min > self.n_objects.max {
            return bad(format!("n_objects range {:?} is empty", self.n_objects));
        }
        if self.object_size.min == 0 || self.object_size.min > self.object_size.max {
            return bad(format!("object_size range {:?} is empty", self.object_size));
        }
        if self.object_size.max > self.patch_size {
            return bad(format!(
                "object_size max {} exceeds patch size {}",
                self.object_size.max, self.patch_size
            ));
        }
        if self.object_kind != ObjectKind::Rectangle && self.object_size.min < 2 {
            return bad("L-shaped objects need a side of at least 2".into());
        }
        if self.feature_channels == 0 {
            return bad("feature_channels must be >= 1".into());
        }
        if self.per_object_color_jitter < 0.0 || self.background_texture_noise < 0.0 {
            return bad("noise std-devs must be non-negative".into());
        }
        Ok(())
    }

    /// Channels of the generated image.
    pub fn image_channels(&self) -> usize {
        self.feature_channels + if self.coord_channels { 2 } else { 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Dataset-level fraction of objects to drop, in (0, 1).
    pub alpha0: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0 < 1.0) {
            return Err(Error::Config(format!(
                "alpha0 must lie in (0, 1), got {}",
                self.alpha0
            )));
        }
        Ok(())
    }

    /// Range `[alpha0 - r, alpha0 + r]` with `r = min(1 - alpha0, alpha0)`.
    pub fn alpha_range(&self) -> (f64, f64) {
        let r = self.alpha0.min(1.0 - self.alpha0);
        (self.alpha0 - r, self.alpha0 + r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchMeta {
    pub n_objects: usize,
    /// Per-patch drop fraction; `None` until noise is injected.
    pub alpha: Option<f64>,
    /// Component ids (in `gt_mask`) that were dropped, ascending.
    pub dropped: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPatch {
    pub image: Raster,
    pub gt_mask: Raster,
    pub noisy_mask: Raster,
    pub meta: PatchMeta,
}

/// Seed of the `index`-th patch derived from a dataset seed.
pub fn patch_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

fn gaussian(rng: &mut impl Rng) -> f32 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    ((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()) as f32
}

/// Object footprint relative to its top-left corner.
fn footprint(kind: ObjectKind, rng: &mut impl Rng, size: Span) -> Vec<(usize, usize)> {
    let w = size.sample(rng);
    let h = size.sample(rng);
    let kind = match kind {
        ObjectKind::Mixed if rng.gen_bool(0.5) => ObjectKind::LShape,
        ObjectKind::Mixed => ObjectKind::Rectangle,
        k => k,
    };
    let mut cells = Vec::with_capacity(w * h);
    match kind {
        ObjectKind::LShape => {
            // remove one corner quadrant
            let cut_w = rng.gen_range(1..w.max(2)).min(w - 1);
            let cut_h = rng.gen_range(1..h.max(2)).min(h - 1);
            let corner: u8 = rng.gen_range(0..4);
            for y in 0..h {
                for x in 0..w {
                    let in_cut = match corner {
                        0 => x < cut_w && y < cut_h,
                        1 => x >= w - cut_w && y < cut_h,
                        2 => x < cut_w && y >= h - cut_h,
                        _ => x >= w - cut_w && y >= h - cut_h,
                    };
                    if !in_cut {
                        cells.push((x, y));
                    }
                }
            }
        }
        _ => {
            for y in 0..h {
                for x in 0..w {
                    cells.push((x, y));
                }
            }
        }
    }
    cells
}

/// Generate one clean patch. `noisy_mask` starts equal to `gt_mask`.
///
/// Objects never overlap and keep a one-pixel gap, so every object is its
/// own 8-connected component.
pub fn generate_scene(config: &SceneConfig) -> Result<DatasetPatch> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let size = config.patch_size;
    let n = config.n_objects.sample(&mut rng);

    // occupied = object pixels dilated by one (the reserved gap)
    let mut occupied = vec![false; size * size];
    let mut owner = vec![0u32; size * size];
    for obj in 1..=n {
        let mut placed = false;
        for _ in 0..PLACEMENT_RETRIES {
            let cells = footprint(config.object_kind, &mut rng, config.object_size);
            let fw = cells.iter().map(|c| c.0).max().unwrap_or(0) + 1;
            let fh = cells.iter().map(|c| c.1).max().unwrap_or(0) + 1;
            if fw > size || fh > size {
                continue;
            }
            let ox = rng.gen_range(0..=size - fw);
            let oy = rng.gen_range(0..=size - fh);
            if cells
                .iter()
                .any(|&(x, y)| occupied[(oy + y) * size + ox + x])
            {
                continue;
            }
            for &(x, y) in &cells {
                let (px, py) = (ox + x, oy + y);
                owner[py * size + px] = obj as u32;
                for yy in py.saturating_sub(1)..(py + 2).min(size) {
                    for xx in px.saturating_sub(1)..(px + 2).min(size) {
                        occupied[yy * size + xx] = true;
                    }
                }
            }
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::Generation {
                seed: config.seed,
                reason: format!(
                    "could not place object {obj} of {n} after {PLACEMENT_RETRIES} attempts"
                ),
            });
        }
    }

    let fc = config.feature_channels;
    let background: Vec<f32> = (0..fc)
        .map(|_| config.background_level + 0.05 * gaussian(&mut rng))
        .collect();
    let object_colors: Vec<Vec<f32>> = (0..n)
        .map(|_| {
            (0..fc)
                .map(|_| config.object_level + config.per_object_color_jitter * gaussian(&mut rng))
                .collect()
        })
        .collect();

    let channels = config.image_channels();
    let mut image = Raster::zeros(size, size, channels);
    let mut gt = Raster::zeros(size, size, 1);
    let denom = (size.max(2) - 1) as f32;
    for y in 0..size {
        for x in 0..size {
            let id = owner[y * size + x];
            let base = if id == 0 {
                &background
            } else {
                gt.set(x, y, 0, 1.0);
                &object_colors[id as usize - 1]
            };
            for (c, &b) in base.iter().enumerate() {
                image.set(
                    x,
                    y,
                    c,
                    b + config.background_texture_noise * gaussian(&mut rng),
                );
            }
            if config.coord_channels {
                image.set(x, y, fc, 2.0 * x as f32 / denom - 1.0);
                image.set(x, y, fc + 1, 2.0 * y as f32 / denom - 1.0);
            }
        }
    }

    Ok(DatasetPatch {
        image,
        noisy_mask: gt.clone(),
        gt_mask: gt,
        meta: PatchMeta {
            n_objects: n,
            alpha: None,
            dropped: Vec::new(),
        },
    })
}

/// Drop a random subset of ground-truth objects from the noisy mask.
///
/// The per-patch rate is drawn uniformly from [`NoiseConfig::alpha_range`];
/// `round(alpha * n)` objects are removed, chosen uniformly without
/// replacement. The patch's existing noisy mask is replaced.
pub fn inject_noise(patch: &DatasetPatch, noise: &NoiseConfig) -> Result<DatasetPatch> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let (lo, hi) = noise.alpha_range();
    let alpha = if hi > lo { rng.gen_range(lo..=hi) } else { lo };

    let cc = connected_components(&patch.gt_mask)?;
    let n = cc.count();
    let drop = ((alpha * n as f64).round() as usize).min(n);
    let mut dropped: Vec<u32> = sample(&mut rng, n, drop)
        .into_iter()
        .map(|i| i as u32 + 1)
        .collect();
    dropped.sort_unstable();

    let mut is_dropped = vec![false; n + 1];
    for &id in &dropped {
        is_dropped[id as usize] = true;
    }
    let mut noisy = patch.gt_mask.clone();
    for (v, &id) in noisy.values_mut().iter_mut().zip(cc.ids()) {
        if is_dropped[id as usize] {
            *v = 0.0;
        }
    }

    Ok(DatasetPatch {
        image: patch.image.clone(),
        gt_mask: patch.gt_mask.clone(),
        noisy_mask: noisy,
        meta: PatchMeta {
            n_objects: n,
            alpha: Some(alpha),
            dropped,
        },
    })
}

/// Generate `count` clean patches, patch `i` seeded with `seed ^ (offset + i)`.
pub fn generate_patches(
    scene: &SceneConfig,
    offset: usize,
    count: usize,
) -> Result<Vec<DatasetPatch>> {
    (offset..offset + count)
        .map(|i| {
            generate_scene(&SceneConfig {
                seed: patch_seed(scene.seed, i),
                ..scene.clone()
            })
        })
        .collect()
}

/// Inject noise into a sequence of patches; patch `i` (global index
/// `offset + i`) uses the noise seed `noise.seed ^ (offset + i)`.
pub fn inject_patches(
    patches: &[DatasetPatch],
    noise: &NoiseConfig,
    offset: usize,
) -> Result<Vec<DatasetPatch>> {
    patches
        .iter()
        .enumerate()
        .map(|(i, p)| {
            inject_noise(
                p,
                &NoiseConfig {
                    seed: patch_seed(noise.seed, offset + i),
                    ..*noise
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// Omission rate: dropped objects over all ground-truth objects.
    pub omission_rate: f64,
    pub iou: f64,
    pub oa: f64,
    /// Precision of the noisy foreground against ground truth.
    pub precision: Option<f64>,
    pub n_objects: usize,
    pub n_omitted: usize,
}

/// Dataset-level quality of noisy labels against ground truth.
///
/// An object counts as omitted when none of its ground-truth pixels are in
/// the noisy mask. Pixel metrics are micro-averaged over all patches.
pub fn assess_quality<'a, I>(pairs: I) -> Result<QualityReport>
where
    I: IntoIterator<Item = (&'a Raster, &'a Raster)>,
{
    let mut conf = Confusion::default();
    let (mut total, mut omitted) = (0usize, 0usize);
    let mut seen = 0usize;
    for (gt, noisy) in pairs {
        seen += 1;
        gt.ensure_binary("gt mask")?;
        noisy.ensure_binary("noisy mask")?;
        gt.check_same_shape(noisy)?;
        conf.accumulate(noisy, gt);
        let cc = connected_components(gt)?;
        total += cc.count();
        omitted += cc
            .pixel_lists()
            .iter()
            .filter(|px| px.iter().all(|&p| noisy.values()[p] == 0.0))
            .count();
    }
    if seen == 0 {
        return Err(Error::Contract(
            "quality assessment needs a nonempty dataset".into(),
        ));
    }
    Ok(QualityReport {
        omission_rate: if total == 0 {
            0.0
        } else {
            omitted as f64 / total as f64
        },
        iou: conf.iou(),
        oa: conf.oa(),
        precision: conf.precision(),
        n_objects: total,
        n_omitted: omitted,
    })
}

/// [`assess_quality`] over dataset patches.
pub fn assess_patches(patches: &[DatasetPatch]) -> Result<QualityReport> {
    assess_quality(patches.iter().map(|p| (&p.gt_mask, &p.noisy_mask)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_scene(seed: u64, n: usize) -> SceneConfig {
        SceneConfig {
            patch_size: 32,
            n_objects: Span::new(n, n),
            object_size: Span::new(3, 6),
            seed,
            ..SceneConfig::default()
        }
    }

    #[test]
    fn zero_objects_gives_pure_background() {
        let p = generate_scene(&small_scene(1, 0)).unwrap();
        assert_eq!(p.gt_mask.foreground_count(), 0);
        assert_eq!(p.meta.n_objects, 0);
    }

    #[test]
    fn same_seed_same_patch() {
        let a = generate_scene(&small_scene(42, 6)).unwrap();
        let b = generate_scene(&small_scene(42, 6)).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&small_scene(43, 6)).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn requested_object_count_equals_component_count() {
        for seed in 0..20 {
            let p = generate_scene(&small_scene(seed, 4)).unwrap();
            assert_eq!(
                connected_components(&p.gt_mask).unwrap().count(),
                4,
                "seed {seed}"
            );
        }
    }

    #[test]
    fn image_has_coordinate_channels() {
        let cfg = small_scene(3, 2);
        let p = generate_scene(&cfg).unwrap();
        assert_eq!(p.image.channels(), 5);
        assert_eq!(p.image.get(0, 0, 3), -1.0);
        assert_eq!(p.image.get(31, 0, 3), 1.0);
        assert_eq!(p.image.get(0, 31, 4), 1.0);
    }

    #[test]
    fn impossible_placement_names_the_seed() {
        let cfg = SceneConfig {
            patch_size: 8,
            n_objects: Span::new(20, 20),
            object_size: Span::new(4, 4),
            object_kind: ObjectKind::Rectangle,
            seed: 777,
            ..SceneConfig::default()
        };
        match generate_scene(&cfg) {
            Err(Error::Generation { seed, .. }) => assert_eq!(seed, 777),
            other => panic!("expected generation error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_scene_configs_are_rejected() {
        let mut cfg = small_scene(0, 2);
        cfg.n_objects = Span::new(3, 2);
        assert!(generate_scene(&cfg).is_err());
        let mut cfg = small_scene(0, 2);
        cfg.object_size = Span::new(4, 40);
        assert!(generate_scene(&cfg).is_err());
    }

    #[test]
    fn alpha_ranges_match_reference() {
        let range = |a| NoiseConfig { alpha0: a, seed: 0 }.alpha_range();
        let close =
            |(a, b): (f64, f64), (c, d): (f64, f64)| (a - c).abs() < 1e-12 && (b - d).abs() < 1e-12;
        assert!(close(range(0.3), (0.0, 0.6)));
        assert!(close(range(0.5), (0.0, 1.0)));
        assert!(close(range(0.7), (0.4, 1.0)));
    }

    #[test]
    fn sampled_alpha_stays_in_range() {
        let patch = generate_scene(&small_scene(5, 6)).unwrap();
        for alpha0 in [0.3, 0.5, 0.7] {
            for seed in 0..50 {
                let noisy = inject_noise(&patch, &NoiseConfig { alpha0, seed }).unwrap();
                let (lo, hi) = NoiseConfig { alpha0, seed }.alpha_range();
                let a = noisy.meta.alpha.unwrap();
                assert!(a >= lo && a <= hi);
            }
        }
    }

    #[test]
    fn alpha0_outside_unit_interval_is_rejected() {
        let patch = generate_scene(&small_scene(5, 3)).unwrap();
        for alpha0 in [0.0, 1.0, -0.1, 1.5] {
            assert!(matches!(
                inject_noise(&patch, &NoiseConfig { alpha0, seed: 1 }),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn empty_patch_is_unchanged_by_noise() {
        let patch = generate_scene(&small_scene(9, 0)).unwrap();
        let noisy = inject_noise(
            &patch,
            &NoiseConfig {
                alpha0: 0.5,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(noisy.noisy_mask, noisy.gt_mask);
        assert!(noisy.meta.dropped.is_empty());
    }

    #[test]
    fn drop_count_is_round_alpha_n() {
        let patch = generate_scene(&SceneConfig {
            patch_size: 48,
            ..small_scene(11, 10)
        })
        .unwrap();
        // search for a seed whose drawn alpha rounds to 5 of 10
        let mut checked = 0;
        for seed in 0..200 {
            let noisy = inject_noise(&patch, &NoiseConfig { alpha0: 0.5, seed }).unwrap();
            let alpha = noisy.meta.alpha.unwrap();
            let want = (alpha * 10.0).round() as usize;
            let remaining = connected_components(&noisy.noisy_mask).unwrap().count();
            assert_eq!(noisy.meta.dropped.len(), want);
            assert_eq!(remaining, 10 - want);
            if want == 5 {
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn noisy_is_subset_with_whole_objects() {
        let patch = generate_scene(&small_scene(21, 8)).unwrap();
        let noisy = inject_noise(
            &patch,
            &NoiseConfig {
                alpha0: 0.5,
                seed: 4,
            },
        )
        .unwrap();
        let cc = connected_components(&noisy.gt_mask).unwrap();
        for (id, px) in cc.pixel_lists().iter().enumerate() {
            let kept = px
                .iter()
                .filter(|&&p| noisy.noisy_mask.values()[p] == 1.0)
                .count();
            assert!(kept == 0 || kept == px.len(), "object {} split", id + 1);
            assert_eq!(kept == 0, noisy.meta.dropped.contains(&(id as u32 + 1)));
        }
    }

    #[test]
    fn quality_identity() {
        let patches = generate_patches(&small_scene(2, 5), 0, 3).unwrap();
        let q = assess_patches(&patches).unwrap();
        assert_eq!(q.omission_rate, 0.0);
        assert_eq!(q.iou, 1.0);
        assert_eq!(q.oa, 1.0);
    }

    #[test]
    fn quality_hand_count() {
        // 10x10 with four 2x2 objects, two dropped
        let corners = [(0, 0), (4, 0), (0, 4), (4, 4)];
        let gt = Raster::from_fn(10, 10, |x, y| {
            corners
                .iter()
                .any(|&(cx, cy)| x >= cx && x < cx + 2 && y >= cy && y < cy + 2) as u8
                as f32
        });
        let noisy = Raster::from_fn(10, 10, |x, y| {
            corners[..2]
                .iter()
                .any(|&(cx, cy)| x >= cx && x < cx + 2 && y >= cy && y < cy + 2) as u8
                as f32
        });
        let q = assess_quality([(&gt, &noisy)]).unwrap();
        assert_eq!(q.omission_rate, 0.5);
        assert!((q.iou - 0.5).abs() < 1e-12);
        assert!((q.oa - 0.92).abs() < 1e-12);
        assert_eq!(q.precision, Some(1.0));
    }

    #[test]
    fn quality_of_empty_dataset_is_an_error() {
        assert!(assess_patches(&[]).is_err());
    }
}
