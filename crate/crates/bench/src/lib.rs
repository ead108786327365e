//! Seeded workloads shared by the benchmarks.

use dagrid::{GridSet, Plane, PolarConfig, SamplingGrid, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub struct Workload {
    pub u: Tensor,
    pub v: Tensor,
    /// Identity warp jittered by up to 3 cells per axis.
    pub grids: GridSet,
}

pub fn workload(size: usize, seed: u64) -> Workload {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut noise = |n: usize| Tensor::from_fn(1, n, n, |_, _, _| rng.random_range(-1.0..1.0));
    let u = noise(size);
    let v = noise(size);
    let gx = Plane::from_fn(size, size, |i, _| i as f64 + rng.random_range(-3.0..3.0));
    let gy = Plane::from_fn(size, size, |_, j| j as f64 + rng.random_range(-3.0..3.0));
    let grid = SamplingGrid::new(gx, gy).expect("finite coordinates");
    Workload {
        u,
        v,
        grids: GridSet::single(grid),
    }
}

/// Polar setup at one of the preset grid sizes.
pub fn polar(size: usize, preset: usize) -> PolarConfig {
    PolarConfig::for_image(size, size, preset, preset).expect("valid preset")
}
