mod common;

use aio2::o2c::{correct, O2cConfig};
use aio2::Raster;
use common::{brute_o2c, mask_from};
use proptest::prelude::*;

fn case() -> impl Strategy<Value = (usize, usize, Vec<bool>, Vec<f32>)> {
    (2usize..14, 2usize..14).prop_flat_map(|(w, h)| {
        (
            Just(w),
            Just(h),
            proptest::collection::vec(proptest::bool::weighted(0.2), w * h),
            proptest::collection::vec(0.0f32..1.0, w * h),
        )
    })
}

proptest! {
    #[test]
    fn matches_definition((w, h, noisy, prob) in case(), r in 0usize..3) {
        let k = 2 * r + 1;
        let noisy = mask_from(w, h, &noisy);
        let prob = Raster::new(w, h, 1, prob).unwrap();
        let out = correct(&noisy, &prob, &O2cConfig { filter_size: k, ..O2cConfig::default() }).unwrap();
        let (expect, added) = brute_o2c(&noisy, &prob, 0.5, k);
        prop_assert_eq!(out.added_components, added);
        for (a, b) in out.soft_mask.values().iter().zip(&expect) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn never_removes_labels((w, h, noisy, prob) in case()) {
        let noisy = mask_from(w, h, &noisy);
        let prob = Raster::new(w, h, 1, prob).unwrap();
        let out = correct(&noisy, &prob, &O2cConfig::default()).unwrap();
        for (t, n) in out.soft_mask.values().iter().zip(noisy.values()) {
            prop_assert!(*t >= *n && *t <= 1.0);
        }
    }

    #[test]
    fn prediction_equal_to_label_is_identity((w, h, noisy, _p) in case()) {
        let noisy = mask_from(w, h, &noisy);
        let out = correct(&noisy, &noisy, &O2cConfig::default()).unwrap();
        prop_assert_eq!(out.soft_mask, noisy);
        prop_assert_eq!(out.added_components, 0);
    }

    #[test]
    fn calls_are_independent((w, h, noisy, prob) in case()) {
        let noisy = mask_from(w, h, &noisy);
        let prob = Raster::new(w, h, 1, prob).unwrap();
        let cfg = O2cConfig::default();
        let first = correct(&noisy, &prob, &cfg).unwrap();
        let _ = correct(&noisy, &Raster::filled(w, h, 1, 0.9), &cfg).unwrap();
        prop_assert_eq!(correct(&noisy, &prob, &cfg).unwrap(), first);
    }
}

#[test]
fn rejects_even_filter() {
    let m = Raster::zeros(4, 4, 1);
    assert!(correct(
        &m,
        &m,
        &O2cConfig {
            filter_size: 4,
            ..O2cConfig::default()
        }
    )
    .is_err());
}
