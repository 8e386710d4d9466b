//! Segmentation scores and memorization diagnostics.
//!
//! Every dataset-level number here is a micro-average: counts are summed
//! over patches first, then turned into ratios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{boundary_band, ObjectSet, ObjectTag, Raster};

/// Pixel confusion counts for the foreground class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    /// Counts for `pred` against `reference`; values >= 0.5 are foreground.
    pub fn of(pred: &Raster, reference: &Raster) -> Self {
        let mut c = Self::default();
        c.accumulate(pred, reference);
        c
    }

    pub fn accumulate(&mut self, pred: &Raster, reference: &Raster) {
        for (&p, &r) in pred.values().iter().zip(reference.values()) {
            match (p >= 0.5, r >= 0.5) {
                (true, true) => self.tp += 1,
                (true, false) => self.fp += 1,
                (false, true) => self.fn_ += 1,
                (false, false) => self.tn += 1,
            }
        }
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Foreground IoU; an empty union scores 1.
    pub fn iou(&self) -> f64 {
        let union = self.tp + self.fp + self.fn_;
        if union == 0 {
            1.0
        } else {
            self.tp as f64 / union as f64
        }
    }

    pub fn oa(&self) -> f64 {
        if self.total() == 0 {
            1.0
        } else {
            (self.tp + self.tn) as f64 / self.total() as f64
        }
    }

    /// `None` when nothing was predicted positive.
    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// `None` when the reference has no positives.
    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        Some(if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        })
    }

    pub fn scores(&self) -> SegScores {
        SegScores {
            iou: self.iou(),
            precision: self.precision(),
            recall: self.recall(),
            f1: self.f1(),
            oa: self.oa(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegScores {
    pub iou: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub oa: f64,
}

pub fn seg_scores(pred: &Raster, reference: &Raster) -> Result<SegScores> {
    pred.check_same_shape(reference)?;
    Ok(Confusion::of(pred, reference).scores())
}

/// Tag each ground-truth object Marked if any of its pixels is foreground
/// in `noisy`, Omitted otherwise.
pub fn tag_objects(gt_objects: &ObjectSet, noisy: &Raster) -> Result<ObjectSet> {
    if noisy.width() != gt_objects.width || noisy.height() != gt_objects.height {
        return Err(Error::shape(
            format!("{}x{}", gt_objects.width, gt_objects.height),
            noisy.shape_string(),
        ));
    }
    let mut tagged = gt_objects.clone();
    for obj in &mut tagged.objects {
        let present = obj.pixels.iter().any(|&p| noisy.values()[p] >= 0.5);
        obj.tag = if present {
            ObjectTag::Marked
        } else {
            ObjectTag::Omitted
        };
    }
    Ok(tagged)
}

/// A hit/total counter that reports an undefined rate for an empty group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub hits: u64,
    pub total: u64,
}

impl Tally {
    pub fn add(&mut self, hit: bool) {
        self.hits += hit as u64;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &Tally) {
        self.hits += other.hits;
        self.total += other.total;
    }

    pub fn rate(&self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }
}

/// Object detection counts per tag class. An object is detected when at
/// least one of its pixels is predicted foreground.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub marked: Tally,
    pub omitted: Tally,
}

impl DetectionCounts {
    pub fn of(tagged: &ObjectSet, pred: &Raster) -> Self {
        let mut counts = Self::default();
        for obj in &tagged.objects {
            let detected = obj.pixels.iter().any(|&p| pred.values()[p] >= 0.5);
            match obj.tag {
                ObjectTag::Marked => counts.marked.add(detected),
                ObjectTag::Omitted => counts.omitted.add(detected),
                ObjectTag::Untagged => {}
            }
        }
        counts
    }
}

/// `(marked_rate, omitted_rate)`; `None` for a tag class with no objects.
pub fn detection_rates(tagged: &ObjectSet, pred: &Raster) -> (Option<f64>, Option<f64>) {
    let c = DetectionCounts::of(tagged, pred);
    (c.marked.rate(), c.omitted.rate())
}

/// Raw counts behind [`MemorizationDiag`], mergeable across patches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagCounts {
    pub detection: DetectionCounts,
    pub ma: Tally,
    pub mu: Tally,
    pub ta: Tally,
    pub tu: Tally,
    pub ta_noisy: Tally,
    pub tu_noisy: Tally,
}

impl DiagCounts {
    pub fn merge(&mut self, o: &DiagCounts) {
        self.detection.marked.merge(&o.detection.marked);
        self.detection.omitted.merge(&o.detection.omitted);
        for (a, b) in [
            (&mut self.ma, &o.ma),
            (&mut self.mu, &o.mu),
            (&mut self.ta, &o.ta),
            (&mut self.tu, &o.tu),
            (&mut self.ta_noisy, &o.ta_noisy),
            (&mut self.tu_noisy, &o.tu_noisy),
        ] {
            a.merge(b);
        }
    }

    pub fn finish(&self) -> MemorizationDiag {
        MemorizationDiag {
            detect_rate_marked: self.detection.marked.rate(),
            detect_rate_omitted: self.detection.omitted.rate(),
            oa_ma: self.ma.rate(),
            oa_mu: self.mu.rate(),
            oa_ta: self.ta.rate(),
            oa_tu: self.tu.rate(),
            oa_ta_noisy: self.ta_noisy.rate(),
            oa_tu_noisy: self.tu_noisy.rate(),
        }
    }
}

/// Object detection rates and per-pixel-group accuracies. Fields are `None`
/// when their group is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemorizationDiag {
    pub detect_rate_marked: Option<f64>,
    pub detect_rate_omitted: Option<f64>,
    pub oa_ma: Option<f64>,
    pub oa_mu: Option<f64>,
    pub oa_ta: Option<f64>,
    pub oa_tu: Option<f64>,
    pub oa_ta_noisy: Option<f64>,
    pub oa_tu_noisy: Option<f64>,
}

impl MemorizationDiag {
    pub const CSV_COLUMNS: [&'static str; 8] = [
        "detect_marked",
        "detect_omitted",
        "oa_MA",
        "oa_MU",
        "oa_TA",
        "oa_TU",
        "oa_TA_noisy",
        "oa_TU_noisy",
    ];

    pub fn csv_fields(&self) -> [Option<f64>; 8] {
        [
            self.detect_rate_marked,
            self.detect_rate_omitted,
            self.oa_ma,
            self.oa_mu,
            self.oa_ta,
            self.oa_tu,
            self.oa_ta_noisy,
            self.oa_tu_noisy,
        ]
    }
}

/// Count pixel-group and detection statistics for one patch.
///
/// Every object pixel is ground-truth foreground, so a pixel is correct wrt
/// GT iff it is predicted foreground; wrt the noisy labels it is correct iff
/// the prediction equals the noisy value.
pub fn diag_counts(
    tagged: &ObjectSet,
    pred: &Raster,
    noisy: &Raster,
    depth: usize,
) -> Result<DiagCounts> {
    pred.check_same_shape(noisy)?;
    if pred.width() != tagged.width || pred.height() != tagged.height {
        return Err(Error::shape(
            format!("{}x{}", tagged.width, tagged.height),
            pred.shape_string(),
        ));
    }
    let mut c = DiagCounts {
        detection: DetectionCounts::of(tagged, pred),
        ..DiagCounts::default()
    };
    let (p, n) = (pred.values(), noisy.values());
    for obj in &tagged.objects {
        let (amb, unamb) = boundary_band(&obj.pixels, tagged.width, tagged.height, depth);
        match obj.tag {
            ObjectTag::Marked => {
                amb.iter().for_each(|&i| c.ma.add(p[i] >= 0.5));
                unamb.iter().for_each(|&i| c.mu.add(p[i] >= 0.5));
            }
            ObjectTag::Omitted => {
                for &i in &amb {
                    c.ta.add(p[i] >= 0.5);
                    c.ta_noisy.add((p[i] >= 0.5) == (n[i] >= 0.5));
                }
                for &i in &unamb {
                    c.tu.add(p[i] >= 0.5);
                    c.tu_noisy.add((p[i] >= 0.5) == (n[i] >= 0.5));
                }
            }
            ObjectTag::Untagged => {}
        }
    }
    Ok(c)
}

/// Single-patch memorization diagnostics.
///
/// `gt` is only used to check shapes; the object set already carries the
/// ground-truth pixels.
pub fn pixel_group_oas(
    tagged: &ObjectSet,
    pred: &Raster,
    gt: &Raster,
    noisy: &Raster,
    depth: usize,
) -> Result<MemorizationDiag> {
    if depth == 0 {
        return Err(Error::Config("boundary depth must be >= 1".into()));
    }
    gt.check_same_shape(pred)?;
    Ok(diag_counts(tagged, pred, noisy, depth)?.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: usize, h: usize, on: &[(usize, usize)]) -> Raster {
        let mut m = Raster::zeros(w, h, 1);
        for &(x, y) in on {
            m.set(x, y, 0, 1.0);
        }
        m
    }

    fn rect(w: usize, h: usize, rects: &[(usize, usize, usize, usize)]) -> Raster {
        Raster::from_fn(w, h, |x, y| {
            rects
                .iter()
                .any(|&(x0, y0, rw, rh)| x >= x0 && x < x0 + rw && y >= y0 && y < y0 + rh)
                as u8 as f32
        })
    }

    #[test]
    fn identical_masks_score_one() {
        let m = mask(4, 4, &[(0, 0), (1, 1), (3, 2)]);
        let s = seg_scores(&m, &m).unwrap();
        assert_eq!(s.iou, 1.0);
        assert_eq!(s.precision, Some(1.0));
        assert_eq!(s.recall, Some(1.0));
        assert_eq!(s.f1, Some(1.0));
        assert_eq!(s.oa, 1.0);
    }

    #[test]
    fn disjoint_masks_have_zero_iou() {
        let s = seg_scores(&mask(3, 3, &[(0, 0)]), &mask(3, 3, &[(2, 2)])).unwrap();
        assert_eq!(s.iou, 0.0);
        assert_eq!(s.f1, Some(0.0));
    }

    #[test]
    fn hand_counted_confusion() {
        // TP at (0,0),(1,0); FP at (2,0); FN at (0,1)
        let pred = mask(3, 3, &[(0, 0), (1, 0), (2, 0)]);
        let reference = mask(3, 3, &[(0, 0), (1, 0), (0, 1)]);
        let s = seg_scores(&pred, &reference).unwrap();
        assert_eq!(s.iou, 0.5);
        assert!((s.precision.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.recall.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.f1.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.oa - 7.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn empty_denominators() {
        let empty = Raster::zeros(3, 3, 1);
        let s = seg_scores(&empty, &empty).unwrap();
        assert_eq!(s.iou, 1.0);
        assert_eq!(s.precision, None);
        assert_eq!(s.recall, None);
        assert_eq!(s.f1, None);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(seg_scores(&Raster::zeros(3, 3, 1), &Raster::zeros(3, 4, 1)).is_err());
    }

    #[test]
    fn tagging() {
        let gt = rect(10, 10, &[(0, 0, 2, 2), (5, 5, 3, 3)]);
        let objs = ObjectSet::from_mask(&gt).unwrap();
        let all = tag_objects(&objs, &gt).unwrap();
        assert_eq!(all.count_tag(ObjectTag::Marked), 2);
        let none = tag_objects(&objs, &Raster::zeros(10, 10, 1)).unwrap();
        assert_eq!(none.count_tag(ObjectTag::Omitted), 2);
        let one = tag_objects(&objs, &rect(10, 10, &[(0, 0, 2, 2)])).unwrap();
        assert_eq!(one.count_tag(ObjectTag::Marked), 1);
        assert_eq!(one.count_tag(ObjectTag::Omitted), 1);
        assert_eq!(one.objects[0].tag, ObjectTag::Marked);
    }

    #[test]
    fn detection_rate_cases() {
        let gt = rect(
            12,
            12,
            &[(0, 0, 2, 2), (4, 0, 2, 2), (8, 0, 2, 2), (0, 6, 3, 3)],
        );
        let noisy = rect(12, 12, &[(0, 6, 3, 3)]);
        let tagged = tag_objects(&ObjectSet::from_mask(&gt).unwrap(), &noisy).unwrap();
        assert_eq!(tagged.count_tag(ObjectTag::Omitted), 3);
        assert_eq!(detection_rates(&tagged, &gt), (Some(1.0), Some(1.0)));
        assert_eq!(
            detection_rates(&tagged, &Raster::zeros(12, 12, 1)),
            (Some(0.0), Some(0.0))
        );
        let (m, t) = detection_rates(&tagged, &mask(12, 12, &[(9, 1)]));
        assert_eq!(m, Some(0.0));
        assert!((t.unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn detection_rate_of_missing_class_is_undefined() {
        let gt = rect(6, 6, &[(1, 1, 2, 2)]);
        let tagged = tag_objects(&ObjectSet::from_mask(&gt).unwrap(), &gt).unwrap();
        assert_eq!(detection_rates(&tagged, &gt), (Some(1.0), None));
    }

    fn scenario() -> (Raster, Raster, ObjectSet) {
        let gt = rect(16, 16, &[(1, 1, 6, 6), (9, 9, 6, 6), (9, 1, 2, 2)]);
        let noisy = rect(16, 16, &[(1, 1, 6, 6)]);
        let tagged = tag_objects(&ObjectSet::from_mask(&gt).unwrap(), &noisy).unwrap();
        (gt, noisy, tagged)
    }

    #[test]
    fn perfect_prediction_diag() {
        let (gt, noisy, tagged) = scenario();
        let d = pixel_group_oas(&tagged, &gt, &gt, &noisy, 1).unwrap();
        for v in [d.oa_ma, d.oa_mu, d.oa_ta, d.oa_tu] {
            assert_eq!(v, Some(1.0));
        }
        assert_eq!(d.oa_ta_noisy, Some(0.0));
        assert_eq!(d.oa_tu_noisy, Some(0.0));
    }

    #[test]
    fn noisy_prediction_diag() {
        let (gt, noisy, tagged) = scenario();
        let d = pixel_group_oas(&tagged, &noisy, &gt, &noisy, 1).unwrap();
        assert_eq!((d.oa_ma, d.oa_mu), (Some(1.0), Some(1.0)));
        assert_eq!((d.oa_ta, d.oa_tu), (Some(0.0), Some(0.0)));
        assert_eq!((d.oa_ta_noisy, d.oa_tu_noisy), (Some(1.0), Some(1.0)));
    }

    #[test]
    fn inner_block_prediction_splits_groups() {
        let gt = rect(8, 8, &[(2, 2, 4, 4)]);
        let noisy = Raster::zeros(8, 8, 1);
        let tagged = tag_objects(&ObjectSet::from_mask(&gt).unwrap(), &noisy).unwrap();
        let pred = rect(8, 8, &[(3, 3, 2, 2)]);
        let d = pixel_group_oas(&tagged, &pred, &gt, &noisy, 1).unwrap();
        assert_eq!(d.oa_tu, Some(1.0));
        assert_eq!(d.oa_ta, Some(0.0));
        assert_eq!(d.oa_ma, None);
        assert_eq!(d.oa_mu, None);
        assert_eq!(d.detect_rate_marked, None);
        assert_eq!(d.detect_rate_omitted, Some(1.0));
    }

    #[test]
    fn zero_depth_is_rejected() {
        let (gt, noisy, tagged) = scenario();
        assert!(pixel_group_oas(&tagged, &gt, &gt, &noisy, 0).is_err());
    }
}
