//! Raster data model and the spatial primitives shared by every other module:
//! 8-connected component labelling, boundary bands and the normalized box filter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2-D grid of `f32` values, row-major with channels interleaved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Contract("raster needs at least one channel".into()));
        }
        let expected = width * height * channels;
        if values.len() != expected {
            return Err(Error::shape(
                format!("{expected} values ({width}x{height}x{channels})"),
                format!("{} values", values.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            channels,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        assert!(channels > 0, "raster needs at least one channel");
        Self {
            width,
            height,
            channels,
            values: vec![value; width * height * channels],
        }
    }

    /// Single-channel raster built from a per-pixel closure `f(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            channels: 1,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of spatial positions (`width * height`).
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.values[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.values[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.width, self.height, self.channels)
    }

    pub(crate) fn check_same_shape(&self, other: &Raster) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(self.shape_string(), other.shape_string()))
        }
    }

    pub fn is_binary(&self) -> bool {
        self.channels == 1 && self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn is_soft(&self) -> bool {
        self.channels == 1 && self.values.iter().all(|&v| (0.0..=1.0).contains(&v))
    }

    pub(crate) fn ensure_binary(&self, what: &str) -> Result<()> {
        if self.channels != 1 {
            return Err(Error::Contract(format!(
                "{what} must have one channel, has {}",
                self.channels
            )));
        }
        if let Some(v) = self.values.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Contract(format!("{what} is not binary (found {v})")));
        }
        Ok(())
    }

    pub(crate) fn ensure_soft(&self, what: &str) -> Result<()> {
        if self.channels != 1 {
            return Err(Error::Contract(format!(
                "{what} must have one channel, has {}",
                self.channels
            )));
        }
        if let Some(v) = self.values.iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Contract(format!(
                "{what} has value {v} outside [0, 1]"
            )));
        }
        Ok(())
    }

    /// Foreground pixel count of a single-channel mask (values >= 0.5).
    pub fn foreground_count(&self) -> usize {
        self.values.iter().filter(|&&v| v >= 0.5).count()
    }

    /// Binarize a single-channel raster: `v >= threshold` becomes 1.
    pub fn threshold(&self, threshold: f32) -> Raster {
        debug_assert_eq!(self.channels, 1);
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            values: self
                .values
                .iter()
                .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Copy of channel `c` as a single-channel raster.
    pub fn channel(&self, c: usize) -> Raster {
        assert!(c < self.channels);
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            values: self
                .values
                .chunks_exact(self.channels)
                .map(|px| px[c])
                .collect(),
        }
    }
}

/// Bounding box in pixel coordinates, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

/// 8-connected component labelling of a binary mask.
///
/// Id 0 is background; component ids run 1..=count in raster-scan order of
/// each component's first pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentMap {
    width: usize,
    height: usize,
    ids: Vec<u32>,
    count: usize,
}

impl ComponentMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn id_at(&self, x: usize, y: usize) -> u32 {
        self.ids[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// The id map as a single-channel raster of integer-valued floats.
    pub fn to_raster(&self) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            values: self.ids.iter().map(|&id| id as f32).collect(),
        }
    }

    /// Linear pixel indices of every component, indexed by `id - 1`.
    pub fn pixel_lists(&self) -> Vec<Vec<usize>> {
        let mut lists = vec![Vec::new(); self.count];
        for (idx, &id) in self.ids.iter().enumerate() {
            if id > 0 {
                lists[id as usize - 1].push(idx);
            }
        }
        lists
    }

    pub fn objects(&self) -> ObjectSet {
        let objects = self
            .pixel_lists()
            .into_iter()
            .enumerate()
            .map(|(i, pixels)| Object::new(i as u32 + 1, pixels, self.width))
            .collect();
        ObjectSet {
            width: self.width,
            height: self.height,
            objects,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectTag {
    Untagged,
    /// Present in the noisy label set.
    Marked,
    /// Absent from the noisy label set.
    Omitted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Object {
    pub id: u32,
    /// Linear indices (`y * width + x`), ascending.
    pub pixels: Vec<usize>,
    pub bbox: BBox,
    pub tag: ObjectTag,
}

impl Object {
    fn new(id: u32, pixels: Vec<usize>, width: usize) -> Self {
        let mut bbox = BBox {
            x0: usize::MAX,
            y0: usize::MAX,
            x1: 0,
            y1: 0,
        };
        for &p in &pixels {
            let (x, y) = (p % width, p / width);
            bbox.x0 = bbox.x0.min(x);
            bbox.y0 = bbox.y0.min(y);
            bbox.x1 = bbox.x1.max(x);
            bbox.y1 = bbox.y1.max(y);
        }
        Self {
            id,
            pixels,
            bbox,
            tag: ObjectTag::Untagged,
        }
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

/// The connected components of a mask, with per-object tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectSet {
    pub width: usize,
    pub height: usize,
    pub objects: Vec<Object>,
}

impl ObjectSet {
    pub fn from_mask(mask: &Raster) -> Result<Self> {
        Ok(connected_components(mask)?.objects())
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn count_tag(&self, tag: ObjectTag) -> usize {
        self.objects.iter().filter(|o| o.tag == tag).count()
    }
}

/// Label the 8-connected foreground components of a binary mask.
///
/// Two-pass union-find; final ids are renumbered so that they follow the
/// raster-scan order of each component's first pixel.
pub fn connected_components(mask: &Raster) -> Result<ComponentMap> {
    mask.ensure_binary("mask")?;
    let (w, h) = (mask.width(), mask.height());
    let fg = mask.values();
    let mut provisional = vec![0u32; w * h];
    // parent[0] is unused so that provisional label 0 can mean background
    let mut parent: Vec<u32> = vec![0];

    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }

    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            if fg[idx] == 0.0 {
                continue;
            }
            // already-visited neighbours: W, NW, N, NE
            let mut neigh = [0u32; 4];
            let mut n = 0;
            if x > 0 && provisional[idx - 1] > 0 {
                neigh[n] = provisional[idx - 1];
                n += 1;
            }
            if y > 0 {
                let up = idx - w;
                if x > 0 && provisional[up - 1] > 0 {
                    neigh[n] = provisional[up - 1];
                    n += 1;
                }
                if provisional[up] > 0 {
                    neigh[n] = provisional[up];
                    n += 1;
                }
                if x + 1 < w && provisional[up + 1] > 0 {
                    neigh[n] = provisional[up + 1];
                    n += 1;
                }
            }
            if n == 0 {
                let label = parent.len() as u32;
                parent.push(label);
                provisional[idx] = label;
                continue;
            }
            let mut root = find(&mut parent, neigh[0]);
            for &other in &neigh[1..n] {
                let r = find(&mut parent, other);
                if r != root {
                    let (lo, hi) = if r < root { (r, root) } else { (root, r) };
                    parent[hi as usize] = lo;
                    root = lo;
                }
            }
            provisional[idx] = root;
        }
    }

    // Renumber roots in scan order of first appearance.
    let mut final_id = vec![0u32; parent.len()];
    let mut next = 0u32;
    let mut ids = vec![0u32; w * h];
    for idx in 0..w * h {
        let p = provisional[idx];
        if p == 0 {
            continue;
        }
        let root = find(&mut parent, p) as usize;
        if final_id[root] == 0 {
            next += 1;
            final_id[root] = next;
        }
        ids[idx] = final_id[root];
    }

    Ok(ComponentMap {
        width: w,
        height: h,
        ids,
        count: next as usize,
    })
}

/// Split an object's pixels into the ambiguous band (Chebyshev distance to
/// the object's exterior at most `depth`) and the unambiguous interior.
///
/// Pixels outside the raster count as exterior. Both returned lists keep
/// the input order.
pub fn boundary_band(
    component: &[usize],
    width: usize,
    height: usize,
    depth: usize,
) -> (Vec<usize>, Vec<usize>) {
    let depth = depth.max(1);
    let mut inside = vec![false; width * height];
    for &p in component {
        inside[p] = true;
    }
    let mut ambiguous = Vec::new();
    let mut unambiguous = Vec::new();
    for &p in component {
        let (x, y) = (p % width, p / width);
        let near_exterior = x < depth
            || y < depth
            || x + depth >= width
            || y + depth >= height
            || (y - depth..=y + depth).any(|yy| {
                let row = yy * width;
                (x - depth..=x + depth).any(|xx| !inside[row + xx])
            });
        if near_exterior {
            ambiguous.push(p);
        } else {
            unambiguous.push(p);
        }
    }
    (ambiguous, unambiguous)
}

/// Normalized all-ones `k x k` filter over a binary mask with zero padding.
///
/// Each output pixel is the foreground count of its neighbourhood divided
/// by `k * k`.
pub fn box_filter(mask: &Raster, k: usize) -> Result<Raster> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::Config(format!(
            "box filter size must be odd and >= 1, got {k}"
        )));
    }
    mask.ensure_binary("mask")?;
    let (w, h) = (mask.width(), mask.height());
    let r = k / 2;

    // Summed-area table with a zero row/column on the top/left.
    let stride = w + 1;
    let mut sat = vec![0u32; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0u32;
        for x in 0..w {
            row += mask.values()[y * w + x] as u32;
            sat[(y + 1) * stride + x + 1] = sat[y * stride + x + 1] + row;
        }
    }
    let norm = (k * k) as f32;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (ya, yb) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (xa, xb) = (x.saturating_sub(r), (x + r + 1).min(w));
            let count = sat[yb * stride + xb] + sat[ya * stride + xa]
                - sat[ya * stride + xb]
                - sat[yb * stride + xa];
            out.push((count as f32 / norm).min(1.0));
        }
    }
    Raster::new(w, h, 1, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_with(w: usize, h: usize, on: &[(usize, usize)]) -> Raster {
        let mut m = Raster::zeros(w, h, 1);
        for &(x, y) in on {
            m.set(x, y, 0, 1.0);
        }
        m
    }

    fn square(w: usize, h: usize, x0: usize, y0: usize, side: usize) -> Raster {
        Raster::from_fn(w, h, |x, y| {
            (x >= x0 && x < x0 + side && y >= y0 && y < y0 + side) as u8 as f32
        })
    }

    #[test]
    fn raster_rejects_wrong_length() {
        assert!(Raster::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Raster::new(2, 2, 0, vec![]).is_err());
    }

    #[test]
    fn single_pixel_is_one_component() {
        let cc = connected_components(&mask_with(5, 5, &[(2, 2)])).unwrap();
        assert_eq!(cc.count(), 1);
        assert_eq!(cc.id_at(2, 2), 1);
        assert_eq!(cc.ids().iter().filter(|&&i| i == 0).count(), 24);
    }

    #[test]
    fn empty_mask_has_no_components() {
        let cc = connected_components(&Raster::zeros(7, 3, 1)).unwrap();
        assert_eq!(cc.count(), 0);
        assert!(cc.objects().is_empty());
    }

    #[test]
    fn diagonal_pixels_join_under_8_connectivity() {
        let cc = connected_components(&mask_with(2, 2, &[(0, 0), (1, 1)])).unwrap();
        assert_eq!(cc.count(), 1);
    }

    #[test]
    fn anti_diagonal_merge_keeps_scan_order() {
        // a U shape whose arms only join at the bottom row
        let m = mask_with(
            5,
            3,
            &[(0, 0), (4, 0), (0, 1), (4, 1), (1, 2), (2, 2), (3, 2)],
        );
        let cc = connected_components(&m).unwrap();
        assert_eq!(cc.count(), 1);
        let m2 = mask_with(5, 1, &[(0, 0), (2, 0), (4, 0)]);
        let cc2 = connected_components(&m2).unwrap();
        assert_eq!(cc2.ids(), &[1, 0, 2, 0, 3]);
    }

    #[test]
    fn non_binary_mask_is_a_contract_error() {
        let mut m = Raster::zeros(3, 3, 1);
        m.set(1, 1, 0, 0.5);
        assert!(matches!(connected_components(&m), Err(Error::Contract(_))));
        assert!(matches!(
            connected_components(&Raster::zeros(3, 3, 2)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn objects_carry_bbox_and_area() {
        let objs = ObjectSet::from_mask(&square(8, 8, 2, 3, 3)).unwrap();
        assert_eq!(objs.len(), 1);
        let o = &objs.objects[0];
        assert_eq!(o.area(), 9);
        assert_eq!(
            o.bbox,
            BBox {
                x0: 2,
                y0: 3,
                x1: 4,
                y1: 5
            }
        );
    }

    #[test]
    fn band_of_4x4_square_depth_1() {
        let m = square(8, 8, 2, 2, 4);
        let obj = &ObjectSet::from_mask(&m).unwrap().objects[0];
        let (amb, unamb) = boundary_band(&obj.pixels, 8, 8, 1);
        assert_eq!(amb.len(), 12);
        let mut inner: Vec<(usize, usize)> = unamb.iter().map(|&p| (p % 8, p / 8)).collect();
        inner.sort();
        assert_eq!(inner, vec![(3, 3), (3, 4), (4, 3), (4, 4)]);
    }

    #[test]
    fn band_of_single_pixel_is_all_ambiguous() {
        for d in 1..4 {
            let (amb, unamb) = boundary_band(&[4 * 9 + 4], 9, 9, d);
            assert_eq!(amb.len(), 1);
            assert!(unamb.is_empty());
        }
    }

    #[test]
    fn band_of_6x6_square_depth_2() {
        let m = square(10, 10, 2, 2, 6);
        let obj = &ObjectSet::from_mask(&m).unwrap().objects[0];
        let (amb, unamb) = boundary_band(&obj.pixels, 10, 10, 2);
        assert_eq!(amb.len(), 32);
        assert_eq!(unamb.len(), 4);
        assert!(unamb
            .iter()
            .all(|&p| (4..6).contains(&(p % 10)) && (4..6).contains(&(p / 10))));
    }

    #[test]
    fn band_treats_raster_edge_as_exterior() {
        // 3x3 block filling a 3x3 raster: only the centre is 2 away
        let pixels: Vec<usize> = (0..9).collect();
        let (amb, unamb) = boundary_band(&pixels, 3, 3, 1);
        assert_eq!(amb.len(), 8);
        assert_eq!(unamb, vec![4]);
        let (amb, _) = boundary_band(&[0, 1, 3, 4], 3, 3, 1);
        assert_eq!(amb.len(), 4);
    }

    #[test]
    fn box_filter_k1_is_identity() {
        let m = mask_with(6, 4, &[(0, 0), (3, 2), (5, 3)]);
        assert_eq!(box_filter(&m, 1).unwrap(), m);
    }

    #[test]
    fn box_filter_isolated_pixel_k3() {
        let out = box_filter(&mask_with(5, 5, &[(2, 2)]), 3).unwrap();
        for y in 0..5usize {
            for x in 0..5usize {
                let near = x.abs_diff(2) <= 1 && y.abs_diff(2) <= 1;
                let want = if near { 1.0 / 9.0 } else { 0.0 };
                assert_eq!(out.get(x, y, 0), want, "({x},{y})");
            }
        }
    }

    #[test]
    fn box_filter_2x2_block_k3() {
        let out = box_filter(&square(8, 8, 3, 3, 2), 3).unwrap();
        for (x, y) in [(3, 3), (4, 3), (3, 4), (4, 4)] {
            assert_eq!(out.get(x, y, 0), 4.0 / 9.0);
        }
    }

    #[test]
    fn box_filter_solid_interior_is_exactly_one() {
        let out = box_filter(&square(12, 12, 1, 1, 10), 5).unwrap();
        assert_eq!(out.get(5, 5, 0), 1.0);
        assert_eq!(out.get(6, 6, 0), 1.0);
    }

    #[test]
    fn box_filter_rejects_even_size() {
        let m = Raster::zeros(4, 4, 1);
        assert!(matches!(box_filter(&m, 2), Err(Error::Config(_))));
        assert!(matches!(box_filter(&m, 0), Err(Error::Config(_))));
    }
}
