//! Independent reference implementations and fixture builders shared by the
//! integration tests. Nothing here calls into the library's numerics.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use vlmprobe_core::geometry::ImageTransform;
use vlmprobe_core::manifest::{ImageRef, SampleRecord};
use vlmprobe_core::{DType, Task, Tensor};

pub fn rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    vlmprobe_core::rng::stream(seed, path)
}

pub fn normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let z: f32 = StandardNormal.sample(rng);
            z
        })
        .collect()
}

pub fn letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

/// Grid coordinate of a pixel: `(x·s + pad) / P − 0.5`.
pub fn to_grid(t: &ImageTransform, x: f64, y: f64) -> (f64, f64) {
    let p = t.patch_size as f64;
    (
        (x * t.scale_x + t.pad_x as f64) / p - 0.5,
        (y * t.scale_y + t.pad_y as f64) / p - 0.5,
    )
}

/// Pixel position of the center of patch `(row, col)`.
pub fn cell_center_px(t: &ImageTransform, row: usize, col: usize) -> (f64, f64) {
    let p = t.patch_size as f64;
    (
        ((col as f64 + 0.5) * p - t.pad_x as f64) / t.scale_x,
        ((row as f64 + 0.5) * p - t.pad_y as f64) / t.scale_y,
    )
}

/// Bilinear interpolation written as a sum of tent functions over every
/// cell, after clamping the query to the grid.
pub fn tent_sample(data: &[f32], h: usize, w: usize, c: usize, u: f64, v: f64) -> Vec<f64> {
    let u = u.clamp(0.0, (w - 1) as f64);
    let v = v.clamp(0.0, (h - 1) as f64);
    let mut out = vec![0.0; c];
    for i in 0..h {
        let wy = (1.0 - (v - i as f64).abs()).max(0.0);
        if wy == 0.0 {
            continue;
        }
        for j in 0..w {
            let wx = (1.0 - (u - j as f64).abs()).max(0.0);
            if wx == 0.0 {
                continue;
            }
            for (k, o) in out.iter_mut().enumerate() {
                *o += wx * wy * data[(i * w + j) * c + k] as f64;
            }
        }
    }
    out
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    dot / (na * nb).sqrt()
}

pub fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// First letter attaining the extremum, and whether another letter ties it
/// under `same`.
pub fn extremal(
    scores: &BTreeMap<char, f64>,
    maximize: bool,
    same: impl Fn(f64, f64) -> bool,
) -> (char, bool) {
    let mut best: Option<(char, f64)> = None;
    for (&l, &s) in scores {
        let better = match best {
            None => true,
            Some((_, b)) => {
                if maximize {
                    s > b
                } else {
                    s < b
                }
            }
        };
        if better {
            best = Some((l, s));
        }
    }
    let (_, b) = best.expect("non-empty scores");
    let winners: Vec<char> = scores
        .iter()
        .filter(|(_, &s)| same(s, b))
        .map(|(&l, _)| l)
        .collect();
    (winners[0], winners.len() > 1)
}

/// Naive `F Fᵀ / positions` with the full double loop.
pub fn naive_gram(data: &[f32], positions: usize, c: usize) -> Vec<f64> {
    let mut g = vec![0.0; c * c];
    for r in 0..c {
        for k in 0..c {
            let mut s = 0.0;
            for p in 0..positions {
                s += data[p * c + r] as f64 * data[p * c + k] as f64;
            }
            g[r * c + k] = s / positions as f64;
        }
    }
    g
}

const NAME_CHARS: &[u8] = b"abcxyz._-0123456789/";

/// A random set of uniquely named tensors with arbitrary bit patterns.
pub fn fuzz_tensors(rng: &mut ChaCha8Rng) -> Vec<(String, Tensor)> {
    let count = rng.random_range(0..6);
    let mut names = std::collections::BTreeSet::new();
    while names.len() < count {
        let len = rng.random_range(1..12);
        let name: String = (0..len)
            .map(|_| NAME_CHARS[rng.random_range(0..NAME_CHARS.len())] as char)
            .collect();
        names.insert(name);
    }
    let mut out: Vec<(String, Tensor)> = names
        .into_iter()
        .map(|name| {
            let dtype = [DType::F32, DType::F16, DType::I64, DType::U8][rng.random_range(0..4)];
            let rank = rng.random_range(0..4);
            let shape: Vec<usize> = (0..rank)
                .map(|_| {
                    if rng.random_bool(0.1) {
                        0
                    } else {
                        rng.random_range(1..6)
                    }
                })
                .collect();
            let n = shape.iter().product::<usize>() * dtype.size() as usize;
            let data: Vec<u8> = (0..n).map(|_| rng.random()).collect();
            (name, Tensor::new(dtype, shape, data).expect("consistent tensor"))
        })
        .collect();
    out.shuffle(rng);
    out
}

pub fn fuzz_meta(rng: &mut ChaCha8Rng) -> BTreeMap<String, String> {
    let pool = ["model", "layer", "ünïcode", "quote\"d", "", "tab\t", "k"];
    let n = rng.random_range(0..4);
    (0..n)
        .map(|i| {
            let k = format!("{}{i}", pool[rng.random_range(0..pool.len())]);
            let v = pool[rng.random_range(0..pool.len())].repeat(rng.random_range(0..3));
            (k, v)
        })
        .collect()
}

/// A record with `n` choices and placeholder images; enough for scoring and
/// chance computations.
pub fn record(id: &str, task: Task, n: usize, ground_truth: char) -> SampleRecord {
    let images = match task {
        Task::ArtStyle => n + 1,
        Task::OddOneOut => n,
        Task::DepthOrder => 1,
        _ => 2,
    };
    SampleRecord {
        sample_id: id.to_string(),
        task,
        images: (0..images)
            .map(|i| ImageRef {
                id: format!("{id}-{i}"),
                transform: ImageTransform::identity(28, 28, 14).expect("valid transform"),
                dump: format!("dumps/{id}-{i}.vlmp").into(),
            })
            .collect(),
        keypoints: None,
        boxes: None,
        choices: (0..n).map(letter).collect(),
        ground_truth,
        condition: None,
        object_names: None,
    }
}
