//! Deterministic fixtures shared by the integration suites.
#![allow(dead_code)]

use std::path::PathBuf;

use ccpl_core::fit::{apply_model, AffineOdModel, TrainingPair};
use ccpl_core::stain::{compose, ConcentrationImage, DEFAULT_I0};
use ccpl_core::{RgbImage, StainMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).expect("fixture present")
}

/// Smooth H/E/D concentration fields with a little H speckle.
pub fn tissue_concentrations(seed: u64, w: usize, h: usize) -> ConcentrationImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f: [[f64; 4]; 3] =
        std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(0.05..0.4)));
    ConcentrationImage::from_fn(w, h, |x, y| {
        let (x, y) = (x as f64, y as f64);
        let hem = 0.5 + 0.4 * (f[0][0] * x + 3.0 * f[0][1]).sin() * (f[0][2] * y).cos();
        let eos = 0.3 + 0.2 * (f[1][0] * y + f[1][3]).sin();
        let dab = (0.9 * (f[2][0] * x + f[2][1] * y).sin() - 0.1).max(0.0);
        [hem + rng.random_range(0.0..0.05), eos, dab]
    })
}

pub fn tissue(seed: u64, side: usize) -> RgbImage {
    compose(&tissue_concentrations(seed, side, side), &StainMatrix::default(), DEFAULT_I0)
}

pub fn known_model() -> AffineOdModel {
    AffineOdModel {
        a: [[1.05, 0.03, -0.02], [0.02, 0.95, 0.04], [-0.03, 0.05, 1.08]],
        b: [0.02, -0.01, 0.03],
    }
}

/// Five 64x64 source patches and their images under [`known_model`].
pub fn synthetic_pairs() -> Vec<TrainingPair> {
    let truth = known_model();
    (0..5)
        .map(|s| {
            let src = tissue(s, 64);
            let tgt = apply_model(&truth, &src, DEFAULT_I0);
            TrainingPair::new(src, tgt).unwrap()
        })
        .collect()
}

/// Top byte of a 64-bit LCG stream (Knuth MMIX constants).
pub fn lcg_bytes(seed: u64, n: usize) -> Vec<u8> {
    let mut s = seed;
    (0..n)
        .map(|_| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (s >> 56) as u8
        })
        .collect()
}

/// 32x24 noise image and a perturbed copy, matching the SSIM oracle.
pub fn noise_pair() -> (RgbImage, RgbImage) {
    let (w, h) = (32, 24);
    let a = lcg_bytes(7, w * h * 3);
    let n = lcg_bytes(11, w * h * 3);
    let b = a
        .iter()
        .zip(&n)
        .map(|(&a, &n)| (i64::from(a) + (i64::from(n) - 128).div_euclid(4)).clamp(0, 255) as u8)
        .collect();
    (RgbImage::new(w, h, a).unwrap(), RgbImage::new(w, h, b).unwrap())
}

pub fn checkerboard() -> RgbImage {
    RgbImage::from_fn(16, 12, |x, y| {
        if (x / 3 + y / 3) % 2 == 0 {
            [200, 40, 90]
        } else {
            [30, 180, 250]
        }
    })
}
