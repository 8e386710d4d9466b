//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use std::collections::VecDeque;

use aio2::Raster;

pub fn mask_from(w: usize, h: usize, bits: &[bool]) -> Raster {
    Raster::new(w, h, 1, bits.iter().map(|&b| b as u8 as f32).collect()).unwrap()
}

/// Breadth-first 8-connected labelling; ids follow raster order of each
/// component's first pixel.
pub fn bfs_components(mask: &Raster) -> Vec<u32> {
    let (w, h) = (mask.width(), mask.height());
    let v = mask.values();
    let mut ids = vec![0u32; w * h];
    let mut next = 0;
    for start in 0..w * h {
        if v[start] == 0.0 || ids[start] != 0 {
            continue;
        }
        next += 1;
        ids[start] = next;
        let mut q = VecDeque::from([start]);
        while let Some(p) = q.pop_front() {
            let (x, y) = ((p % w) as i64, (p / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let n = ny as usize * w + nx as usize;
                    if v[n] != 0.0 && ids[n] == 0 {
                        ids[n] = next;
                        q.push_back(n);
                    }
                }
            }
        }
    }
    ids
}

/// Direct neighbourhood sum with zero padding, divided by `k * k`.
pub fn brute_box(mask: &Raster, k: usize) -> Vec<f32> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let r = (k / 2) as i64;
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0f64;
            for yy in y - r..=y + r {
                for xx in x - r..=x + r {
                    if xx >= 0 && yy >= 0 && xx < w && yy < h {
                        s += mask.values()[(yy * w + xx) as usize] as f64;
                    }
                }
            }
            out.push((s / (k * k) as f64) as f32);
        }
    }
    out
}

/// Object-wise correction written from its definition: keep each
/// thresholded component that shares no pixel with the noisy foreground,
/// blur the kept set, take the pixelwise max with the noisy label.
pub fn brute_o2c(noisy: &Raster, prob: &Raster, threshold: f32, k: usize) -> (Vec<f32>, usize) {
    let pred = prob.threshold(threshold);
    let ids = bfs_components(&pred);
    let n = *ids.iter().max().unwrap_or(&0);
    let mut keep = vec![true; n as usize + 1];
    for (p, &id) in ids.iter().enumerate() {
        if id > 0 && noisy.values()[p] == 1.0 {
            keep[id as usize] = false;
        }
    }
    let added = (1..=n as usize).filter(|&i| keep[i]).count();
    let cand: Vec<bool> = ids.iter().map(|&id| id > 0 && keep[id as usize]).collect();
    let blurred = brute_box(&mask_from(noisy.width(), noisy.height(), &cand), k);
    let out = blurred
        .iter()
        .zip(noisy.values())
        .map(|(&b, &n)| b.max(n))
        .collect();
    (out, added)
}

/// Least-squares slope over abscissae `0..=w` in closed form:
/// `sum (x - w/2) y / (w (w+1) (w+2) / 12)`.
pub fn closed_form_slope(ys: &[f64]) -> f64 {
    let w = (ys.len() - 1) as f64;
    let num: f64 = ys
        .iter()
        .enumerate()
        .map(|(x, y)| (x as f64 - w / 2.0) * y)
        .sum();
    num / (w * (w + 1.0) * (w + 2.0) / 12.0)
}

/// Three-stage curve: saturating early learning to `plateau` by roughly
/// `early_end`, flat until `mem_start`, then a logistic rise of `rise`.
pub fn three_stage(
    epochs: usize,
    plateau: f64,
    early_end: f64,
    mem_start: f64,
    rise: f64,
) -> Vec<f64> {
    let rate = 4.0 / early_end;
    (1..=epochs)
        .map(|i| {
            let x = i as f64;
            let early = plateau * (1.0 - (-rate * x).exp());
            let mem = rise / (1.0 + (-(x - mem_start - 25.0) / 8.0).exp());
            (early + mem).min(1.0)
        })
        .collect()
}
