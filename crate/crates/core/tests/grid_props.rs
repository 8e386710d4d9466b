mod common;

use aio2::grid::{boundary_band, box_filter, connected_components, ObjectSet};
use common::{bfs_components, brute_box, mask_from};
use proptest::prelude::*;

fn mask_strategy() -> impl Strategy<Value = (usize, usize, Vec<bool>)> {
    (1usize..14, 1usize..14).prop_flat_map(|(w, h)| {
        (
            Just(w),
            Just(h),
            proptest::collection::vec(proptest::bool::weighted(0.45), w * h),
        )
    })
}

proptest! {
    #[test]
    fn labelling_matches_bfs((w, h, bits) in mask_strategy()) {
        let m = mask_from(w, h, &bits);
        let cc = connected_components(&m).unwrap();
        let expect = bfs_components(&m);
        prop_assert_eq!(cc.ids(), expect.as_slice());
        prop_assert_eq!(cc.count() as u32, expect.iter().copied().max().unwrap_or(0));
    }

    #[test]
    fn band_partitions_each_object((w, h, bits) in mask_strategy(), depth in 1usize..4) {
        let objs = ObjectSet::from_mask(&mask_from(w, h, &bits)).unwrap();
        for o in &objs.objects {
            let (amb, unamb) = boundary_band(&o.pixels, w, h, depth);
            let mut all: Vec<usize> = amb.iter().chain(&unamb).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(&all, &o.pixels);
            // interior pixels have their whole (2d+1)^2 neighbourhood inside the object
            for &p in &unamb {
                let (x, y) = (p % w, p / w);
                prop_assert!(x >= depth && y >= depth && x + depth < w && y + depth < h);
                for yy in y - depth..=y + depth {
                    for xx in x - depth..=x + depth {
                        prop_assert!(o.pixels.binary_search(&(yy * w + xx)).is_ok());
                    }
                }
            }
        }
    }

    #[test]
    fn box_filter_matches_direct_sum((w, h, bits) in mask_strategy(), r in 0usize..3) {
        let k = 2 * r + 1;
        let m = mask_from(w, h, &bits);
        let got = box_filter(&m, k).unwrap();
        for (a, b) in got.values().iter().zip(brute_box(&m, k)) {
            prop_assert!((a - b).abs() < 1e-6);
        }
        let mass: f64 = got.values().iter().map(|&v| v as f64).sum();
        prop_assert!(mass <= m.foreground_count() as f64 + 1e-4);
        prop_assert!(got.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn box_filter_is_monotone((w, h, bits) in mask_strategy(), extra in proptest::collection::vec(any::<bool>(), 196), r in 0usize..3) {
        let k = 2 * r + 1;
        let bigger: Vec<bool> = bits.iter().zip(&extra).map(|(&a, &b)| a || b).collect();
        let small = box_filter(&mask_from(w, h, &bits), k).unwrap();
        let big = box_filter(&mask_from(w, h, &bigger), k).unwrap();
        for (s, b) in small.values().iter().zip(big.values()) {
            prop_assert!(s <= b);
        }
    }
}

#[test]
fn interior_mass_is_preserved() {
    let mut bits = vec![false; 100];
    for y in 3..7 {
        for x in 2..8 {
            bits[y * 10 + x] = true;
        }
    }
    let out = box_filter(&mask_from(10, 10, &bits), 5).unwrap();
    let mass: f32 = out.values().iter().sum();
    assert!((mass - 24.0).abs() < 1e-4);
}
