#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rankcorr::ClusteredDataset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn pair(rng: &mut ChaCha8Rng, rho: f64) -> (f64, f64) {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    (a, rho * a + (1.0 - rho * rho).sqrt() * b)
}

/// Latent bivariate-normal clusters: `x = U_x + R_x`, `y = U_y + R_y`.
pub fn latent(seed: u64, n: usize, k: std::ops::RangeInclusive<usize>, rho_b: f64, rho_w: f64) -> ClusteredDataset<f64> {
    let mut r = rng(seed);
    let groups: Vec<(String, Vec<(f64, f64)>)> = (0..n)
        .map(|i| {
            let size = r.random_range(k.clone());
            let (ux, uy) = pair(&mut r, rho_b);
            let obs = (0..size)
                .map(|_| {
                    let (rx, ry) = pair(&mut r, rho_w);
                    (ux + rx, uy + ry)
                })
                .collect();
            (format!("c{i}"), obs)
        })
        .collect();
    ClusteredDataset::from_numeric(groups).unwrap()
}

/// Small integer-valued clusters with many ties.
pub fn tied(seed: u64, n: usize, max_k: usize, levels: i32) -> ClusteredDataset<f64> {
    let mut r = rng(seed);
    let groups: Vec<(String, Vec<(f64, f64)>)> = (0..n)
        .map(|i| {
            let size = r.random_range(1..=max_k);
            let shift = r.random_range(0..levels);
            let obs = (0..size)
                .map(|_| {
                    let x = ((r.random_range(0..levels) + shift) % levels) as f64;
                    let y = ((r.random_range(0..levels) + shift / 2) % levels) as f64;
                    (x, y)
                })
                .collect();
            (format!("c{i}"), obs)
        })
        .collect();
    ClusteredDataset::from_numeric(groups).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
