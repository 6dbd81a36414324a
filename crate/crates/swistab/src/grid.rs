//! Deterministic unit-vector sample sets: structured grids for the low
//! dimensions where verification sweeps run, and seeded normalized Gaussian
//! directions elsewhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One standard normal draw via Box-Muller; kept local so sampled artifacts
/// never depend on distribution-crate internals.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// `count` seeded random unit vectors in dimension `n` (normalized Gaussian
/// directions). Deterministic in `seed`.
pub fn random_units(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(n >= 1, "dimension must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let r = crate::linalg::norm(&v);
        if r > 1e-8 {
            out.push(v.iter().map(|x| x / r).collect());
        }
    }
    out
}

/// Deterministic unit-sphere grid of the requested size: equally spaced
/// angles for n = 2, a Fibonacci sphere for n = 3, seeded Gaussian
/// directions for n >= 4 (and the pair {+1, -1} for n = 1).
pub fn unit_grid(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(n >= 1, "dimension must be at least 1");
    match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * (k as f64) / (count as f64);
                vec![theta.cos(), theta.sin()]
            })
            .collect(),
        3 => {
            // Fibonacci sphere: latitudes stride evenly, longitudes advance
            // by the golden angle.
            let golden_angle = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            (0..count)
                .map(|k| {
                    let y = 1.0 - 2.0 * (k as f64 + 0.5) / (count as f64);
                    let r = (1.0 - y * y).max(0.0).sqrt();
                    let phi = golden_angle * k as f64;
                    vec![r * phi.cos(), y, r * phi.sin()]
                })
                .collect()
        }
        _ => random_units(n, count, seed),
    }
}

/// Unit grid with the dimension-appropriate default size.
pub fn default_unit_grid(n: usize, seed: u64) -> Vec<Vec<f64>> {
    unit_grid(n, crate::config::default_grid_size(n), seed)
}
